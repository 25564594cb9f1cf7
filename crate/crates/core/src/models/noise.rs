//! Global plus periodic noise: a global vector `Zg` drawn once per sample and
//! duplicated along the spatial axis, concatenated with
//! `sin(i * K1(Zg) + K2(Zg))` at position `i` (1-based).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{Bound, Linear, ParamStore, Tape, Tensor, Var};

pub const GLOBAL_DIM: usize = 16;
pub const PERIODIC_DIM: usize = 16;
pub const NOISE_DIM: usize = GLOBAL_DIM + PERIODIC_DIM;
pub const MLP_HIDDEN: usize = 32;

/// `16 -> 32 ReLU -> 16` perceptron.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamStore, name: &str, rng: &mut R) -> Self {
        Mlp {
            hidden: Linear::new(params, &format!("{name}.hidden"), GLOBAL_DIM, MLP_HIDDEN, rng),
            out: Linear::new(params, &format!("{name}.out"), MLP_HIDDEN, PERIODIC_DIM, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, bound, x)?;
        let h = tape.relu(h);
        self.out.forward(tape, bound, h)
    }
}

#[derive(Clone, Debug)]
pub struct NoiseSpec {
    pub spatial_len: usize,
    pub k1: Mlp,
    pub k2: Mlp,
}

impl NoiseSpec {
    /// Registers `k1.*` and `k2.*` in the generator's parameter store.
    pub fn new<R: Rng + ?Sized>(params: &mut ParamStore, spatial_len: usize, rng: &mut R) -> Result<Self> {
        if spatial_len == 0 {
            return Err(Error::Config("noise spatial length must be at least 1".into()));
        }
        Ok(NoiseSpec { spatial_len, k1: Mlp::new(params, "k1", rng), k2: Mlp::new(params, "k2", rng) })
    }

    /// Standard normal global noise, `[batch, 16]`.
    pub fn sample_global<R: Rng + ?Sized>(batch: usize, rng: &mut R) -> Tensor {
        let values = (0..batch * GLOBAL_DIM).map(|_| StandardNormal.sample(rng)).collect();
        Tensor::new(vec![batch, GLOBAL_DIM], values).expect("shape matches")
    }

    /// `[batch, 16]` global noise to `[batch, spatial_len, 32]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, zg: Var) -> Result<Var> {
        let k1 = self.k1.forward(tape, bound, zg)?;
        let k2 = self.k2.forward(tape, bound, zg)?;
        let phase = tape.position_scale(k1, self.spatial_len)?;
        let offset = tape.repeat_steps(k2, self.spatial_len)?;
        let arg = tape.add(phase, offset)?;
        let periodic = tape.sin(arg);
        let global = tape.repeat_steps(zg, self.spatial_len)?;
        tape.concat_last(&[global, periodic])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::f64::consts::FRAC_PI_2;

    fn build(t: usize) -> (ParamStore, NoiseSpec) {
        let mut params = ParamStore::new();
        let spec = NoiseSpec::new(&mut params, t, &mut seeded(0)).unwrap();
        (params, spec)
    }

    fn emit(params: &ParamStore, spec: &NoiseSpec, zg: &Tensor) -> Vec<f64> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let z = tape.leaf(zg);
        let y = spec.forward(&mut tape, &bound, z).unwrap();
        tape.value(y).to_vec()
    }

    fn set(params: &mut ParamStore, name: &str, f: impl Fn(usize) -> f64) {
        let id = (0..params.len()).find(|&i| params.name(i) == name).unwrap();
        let t = &mut params.tensors_mut()[id];
        t.values_mut().iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }

    #[test]
    fn zero_mlps_give_zero_periodic_half() {
        let (mut params, spec) = build(10);
        params.fill_zero();
        let zg = NoiseSpec::sample_global(2, &mut seeded(1));
        let y = emit(&params, &spec, &zg);
        assert_eq!(y.len(), 2 * 10 * NOISE_DIM);
        for row in y.chunks(NOISE_DIM) {
            assert!(row[GLOBAL_DIM..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn constant_offset_gives_constant_periodic_half() {
        let (mut params, spec) = build(7);
        params.fill_zero();
        set(&mut params, "k2.out.bias", |_| 0.3);
        let zg = NoiseSpec::sample_global(1, &mut seeded(2));
        let y = emit(&params, &spec, &zg);
        for row in y.chunks(NOISE_DIM) {
            assert!(row[GLOBAL_DIM..].iter().all(|&v| v == 0.3f64.sin()));
        }
    }

    #[test]
    fn quarter_turn_repeats_every_four_positions() {
        let (mut params, spec) = build(12);
        params.fill_zero();
        set(&mut params, "k1.out.bias", |i| if i == 0 { FRAC_PI_2 } else { 0.0 });
        let zg = NoiseSpec::sample_global(1, &mut seeded(3));
        let y = emit(&params, &spec, &zg);
        let col: Vec<f64> = y.chunks(NOISE_DIM).map(|r| r[GLOBAL_DIM]).collect();
        for i in 0..8 {
            assert!((col[i] - col[i + 4]).abs() < 1e-12);
        }
        assert!((col[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn global_half_is_duplicated() {
        let (params, spec) = build(10);
        let zg = NoiseSpec::sample_global(3, &mut seeded(4));
        let y = emit(&params, &spec, &zg);
        for (b, sample) in y.chunks(10 * NOISE_DIM).enumerate() {
            for row in sample.chunks(NOISE_DIM) {
                assert_eq!(&row[..GLOBAL_DIM], &zg.values()[b * GLOBAL_DIM..(b + 1) * GLOBAL_DIM]);
            }
        }
    }
}
