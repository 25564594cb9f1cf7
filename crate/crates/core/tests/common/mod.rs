//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use danmaku_core::tensor::{Tape, Tensor, Var};
use danmaku_core::Result;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), values).unwrap()
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let loss = f(&mut tape, &vars).unwrap();
    tape.scalar(loss)
}

/// Largest relative error `|g_a - g_n| / max(|g_a|, |g_n|)` (in the 2-norm,
/// per input tensor) between backward gradients and central differences
/// with step `h`.
pub fn gradcheck<F>(inputs: &[Tensor], h: f64, f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let loss = f(&mut tape, &vars).unwrap();
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[i].values_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].values_mut()[j] -= h;
            numeric[j] = (evaluate(&plus, &f) - evaluate(&minus, &f)) / (2.0 * h);
        }
        let diff: f64 = analytic[i].iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let na: f64 = analytic[i].iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let denom = na.max(nn);
        let rel = if denom < 1e-12 { diff } else { diff / denom };
        worst = worst.max(rel);
    }
    worst
}

/// Reduces an arbitrary tensor to a scalar through a fixed random projection,
/// so every output element contributes a distinct weight.
pub fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let mut r = rng(seed);
    let w = random_tensor(&mut r, &shape, -1.0, 1.0);
    let wv = tape.leaf(&w);
    let p = tape.mul(y, wv)?;
    Ok(tape.mean(p))
}

use danmaku_core::tensor::{Bound, LstmStack, ParamStore};

pub const FD_STEP: f64 = 1e-5;

/// One randomized gradient check per layer type; each returns the relative
/// error for instance `seed`.
pub fn layer_cases() -> Vec<(&'static str, fn(u64) -> f64)> {
    vec![
        ("affine", case_affine),
        ("conv1d", case_conv1d),
        ("conv1d_transpose", case_conv_transpose),
        ("lstm", case_lstm),
        ("logistic", case_logistic),
        ("tanh", case_tanh),
        ("relu", case_relu),
        ("bce", case_bce),
        ("mse", case_mse),
        ("periodic_noise", case_noise),
    ]
}

fn case_affine(seed: u64) -> f64 {
    let mut r = rng(seed);
    let inputs = [
        random_tensor(&mut r, &[3, 4], -1.0, 1.0),
        random_tensor(&mut r, &[4, 5], -1.0, 1.0),
        random_tensor(&mut r, &[5], -1.0, 1.0),
    ];
    gradcheck(&inputs, FD_STEP, |t, v| {
        let y = t.matmul(v[0], v[1])?;
        let y = t.add_bias(y, v[2])?;
        project(t, y, seed)
    })
}

fn case_conv1d(seed: u64) -> f64 {
    let mut r = rng(seed);
    let stride = 1 + (seed % 2) as usize;
    let padding = (seed % 3) as usize % 2;
    let inputs = [
        random_tensor(&mut r, &[2, 3, 9], -1.0, 1.0),
        random_tensor(&mut r, &[4, 3, 3], -1.0, 1.0),
        random_tensor(&mut r, &[4], -1.0, 1.0),
    ];
    gradcheck(&inputs, FD_STEP, |t, v| {
        let y = t.conv1d(v[0], v[1], stride, padding)?;
        let y = t.add_channel_bias(y, v[2])?;
        project(t, y, seed)
    })
}

fn case_conv_transpose(seed: u64) -> f64 {
    let mut r = rng(seed);
    let stride = 1 + (seed % 2) as usize;
    let padding = (seed / 2 % 2) as usize;
    let inputs = [
        random_tensor(&mut r, &[2, 3, 5], -1.0, 1.0),
        random_tensor(&mut r, &[3, 4, 4], -1.0, 1.0),
        random_tensor(&mut r, &[4], -1.0, 1.0),
    ];
    gradcheck(&inputs, FD_STEP, |t, v| {
        let y = t.conv_transpose1d(v[0], v[1], stride, padding)?;
        let y = t.add_channel_bias(y, v[2])?;
        project(t, y, seed)
    })
}

fn case_lstm(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut params = ParamStore::new();
    let stack = LstmStack::new(&mut params, "lstm", 3, 4, 2, &mut r);
    let mut inputs = vec![random_tensor(&mut r, &[2, 3, 3], -1.0, 1.0)];
    inputs.extend(params.iter().map(|(_, t)| t.clone()));
    gradcheck(&inputs, FD_STEP, |t, v| {
        let bound = Bound::from_vars(v[1..].to_vec());
        let y = stack.forward(t, &bound, v[0])?;
        project(t, y, seed)
    })
}

fn case_logistic(seed: u64) -> f64 {
    let mut r = rng(seed);
    let inputs = [random_tensor(&mut r, &[4, 5], -4.0, 4.0)];
    gradcheck(&inputs, FD_STEP, |t, v| {
        let y = t.sigmoid(v[0]);
        project(t, y, seed)
    })
}

fn case_tanh(seed: u64) -> f64 {
    let mut r = rng(seed);
    let inputs = [random_tensor(&mut r, &[4, 5], -3.0, 3.0)];
    gradcheck(&inputs, FD_STEP, |t, v| {
        let y = t.tanh(v[0]);
        project(t, y, seed)
    })
}

fn case_relu(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut x = random_tensor(&mut r, &[4, 5], -3.0, 3.0);
    // keep finite differences away from the kink
    for v in x.values_mut() {
        if v.abs() < 1e-2 {
            *v += 0.1;
        }
    }
    gradcheck(&[x], FD_STEP, |t, v| {
        let y = t.relu(v[0]);
        project(t, y, seed)
    })
}

fn case_bce(seed: u64) -> f64 {
    let mut r = rng(seed);
    let p = random_tensor(&mut r, &[12], 0.05, 0.95);
    let target: Vec<f64> = (0..12).map(|_| r.random_range(0.0..1.0)).collect();
    gradcheck(&[p], FD_STEP, move |t, v| t.bce(v[0], &target))
}

fn case_mse(seed: u64) -> f64 {
    let mut r = rng(seed);
    let inputs = [
        random_tensor(&mut r, &[3, 4], -1.0, 1.0),
        random_tensor(&mut r, &[3, 4], -1.0, 1.0),
    ];
    gradcheck(&inputs, FD_STEP, |t, v| t.mse(v[0], v[1]))
}

fn case_noise(seed: u64) -> f64 {
    let mut r = rng(seed);
    let inputs = [
        random_tensor(&mut r, &[2, 3], -1.0, 1.0),
        random_tensor(&mut r, &[2, 3], -1.0, 1.0),
    ];
    gradcheck(&inputs, FD_STEP, |t, v| {
        let scaled = t.position_scale(v[0], 4)?;
        let offset = t.repeat_steps(v[1], 4)?;
        let s = t.add(scaled, offset)?;
        let s = t.sin(s);
        let g = t.repeat_steps(v[0], 4)?;
        let y = t.concat_last(&[g, s])?;
        let y = t.swap_last2(y)?;
        let y = t.step_range(y, 1, 1)?;
        project(t, y, seed)
    })
}

use danmaku_core::metrics::MetricsReport;
use danmaku_core::sim::{BulletState, SimConfig};

/// Up to three bullets anywhere on screen, spawned within the first 30
/// frames, sorted by spawn frame.
pub fn random_small_schedule(r: &mut impl Rng) -> Vec<(u32, BulletState)> {
    let n = r.random_range(1..=3);
    let mut frames: Vec<u32> = (0..n).map(|_| r.random_range(0..30)).collect();
    frames.sort_unstable();
    frames
        .into_iter()
        .map(|f| {
            let radius = r.random_range(2.0..16.0);
            let b = BulletState {
                angle: r.random_range(0.0..std::f64::consts::TAU),
                speed: r.random_range(0.0..6.0),
                accel: r.random_range(-0.1..0.1),
                ang_vel: r.random_range(-0.2..0.2),
                ..BulletState::at(r.random_range(0.0..384.0), r.random_range(0.0..448.0), radius)
            };
            (f, b)
        })
        .collect()
}

/// Position and speed of one bullet on each frame it is alive.
struct Track {
    spawn: u32,
    states: Vec<(f64, f64, f64)>,
    /// Frame after which the bullet is gone, or `None` if it survives the cap.
    last: Option<u32>,
}

fn track(frame: u32, b: &BulletState, cfg: &SimConfig) -> Track {
    let (mut x, mut y, mut angle, mut speed) = (b.x, b.y, b.angle, b.speed);
    let mut states = Vec::new();
    let mut f = frame;
    while f < cfg.t_max {
        states.push((x, y, speed));
        angle += b.ang_vel;
        speed = (speed + b.accel).max(0.0);
        if speed < 1e-9 {
            speed = 0.0;
        }
        x += speed * angle.cos();
        y += speed * angle.sin();
        let m = cfg.margin;
        if x <= -m || y <= -m || x >= cfg.screen_w + m || y >= cfg.screen_h + m {
            return Track { spawn: frame, states, last: Some(f) };
        }
        f += 1;
    }
    Track { spawn: frame, states, last: None }
}

/// Metrics recomputed frame by frame and cell by cell, without the engine's
/// bounding-box shortcut or incremental bookkeeping.
pub fn naive_metrics(schedule: &[(u32, BulletState)], cfg: &SimConfig) -> (MetricsReport, u32) {
    let emitted: Vec<&(u32, BulletState)> = schedule.iter().filter(|(f, _)| *f < cfg.t_max).collect();
    let tracks: Vec<Track> = emitted.iter().map(|(f, b)| track(*f, b, cfg)).collect();
    let t_total = if emitted.is_empty() {
        1
    } else if tracks.iter().any(|t| t.last.is_none()) {
        cfg.t_max
    } else {
        tracks.iter().map(|t| t.last.unwrap().max(t.spawn) + 1).max().unwrap()
    };
    let rows = (cfg.screen_h / cfg.cell) as usize;
    let cols = (cfg.screen_w / cfg.cell) as usize;
    let mut covered = vec![false; rows * cols];
    let mut momentum_total = 0.0;
    for f in 0..t_total {
        let mut sum = 0.0;
        for ((_, b), t) in emitted.iter().zip(&tracks) {
            if f < t.spawn || f - t.spawn >= t.states.len() as u32 {
                continue;
            }
            let (x, y, speed) = t.states[(f - t.spawn) as usize];
            sum += b.weight * speed;
            for i in 0..rows {
                for j in 0..cols {
                    let (x0, y0) = (j as f64 * cfg.cell, i as f64 * cfg.cell);
                    let (x1, y1) = (x0 + cfg.cell, y0 + cfg.cell);
                    let dx = if x < x0 { x0 - x } else if x > x1 { x - x1 } else { 0.0 };
                    let dy = if y < y0 { y0 - y } else if y > y1 { y - y1 } else { 0.0 };
                    if dx * dx + dy * dy < b.radius * b.radius {
                        covered[i * cols + j] = true;
                    }
                }
            }
        }
        momentum_total += sum;
    }
    let last_spawn = emitted.last().map_or(0, |(f, _)| *f).max(1);
    let report = MetricsReport {
        sf: emitted.len() as f64 / last_spawn as f64,
        mm: momentum_total / t_total as f64,
        cov: covered.iter().filter(|&&c| c).count() as f64 / (rows * cols) as f64,
    };
    (report, t_total)
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Single-layer LSTM written out with explicit loops over `[steps, input]`
/// for one sample; weights use the `[in, 4h]` i, f, g, o layout.
pub fn lstm_reference(x: &[Vec<f64>], w_input: &Tensor, w_hidden: &Tensor, bias: &Tensor, hidden: usize) -> Vec<Vec<f64>> {
    let (wi, wh, b) = (w_input.values(), w_hidden.values(), bias.values());
    let g4 = 4 * hidden;
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut out = Vec::new();
    for xt in x {
        let mut z = b.to_vec();
        for (k, &xv) in xt.iter().enumerate() {
            for j in 0..g4 {
                z[j] += xv * wi[k * g4 + j];
            }
        }
        for (k, &hv) in h.iter().enumerate() {
            for j in 0..g4 {
                z[j] += hv * wh[k * g4 + j];
            }
        }
        for j in 0..hidden {
            let i = logistic(z[j]);
            let f = logistic(z[hidden + j]);
            let g = z[2 * hidden + j].tanh();
            let o = logistic(z[3 * hidden + j]);
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        out.push(h.clone());
    }
    out
}

/// `relu(z W1 + b1) W2 + b2` for one row, from named parameters.
pub fn mlp_reference(params: &ParamStore, prefix: &str, z: &[f64]) -> Vec<f64> {
    let get = |n: &str| params.iter().find(|(name, _)| *name == format!("{prefix}.{n}")).unwrap().1;
    let layer = |x: &[f64], w: &Tensor, b: &Tensor| {
        let out = b.numel();
        (0..out)
            .map(|j| b.values()[j] + x.iter().enumerate().map(|(k, v)| v * w.values()[k * out + j]).sum::<f64>())
            .collect::<Vec<f64>>()
    };
    let h: Vec<f64> = layer(z, get("hidden.weight"), get("hidden.bias")).into_iter().map(|v| v.max(0.0)).collect();
    layer(&h, get("out.weight"), get("out.bias"))
}
