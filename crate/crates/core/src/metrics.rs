//! Shooting frequency, mean momentum, coverage and the histogram
//! Jensen–Shannon divergence used to compare metric populations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codec::ParametricSequence;
use crate::error::{Error, Result};
use crate::sim::{run, SimConfig, SimTrace};

pub const JS_BINS: usize = 16;
const JS_SMOOTHING: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Sf,
    Mm,
    Cov,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Sf, Metric::Mm, Metric::Cov];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Sf => "sf",
            Metric::Mm => "mm",
            Metric::Cov => "cov",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sf: f64,
    pub mm: f64,
    pub cov: f64,
}

impl MetricsReport {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Sf => self.sf,
            Metric::Mm => self.mm,
            Metric::Cov => self.cov,
        }
    }
}

pub fn shooting_frequency(trace: &SimTrace) -> f64 {
    trace.l_emitted as f64 / trace.t_shoot as f64
}

pub fn mean_momentum(trace: &SimTrace) -> f64 {
    trace.momentum.iter().sum::<f64>() / trace.t_total as f64
}

pub fn coverage(trace: &SimTrace) -> f64 {
    trace.covered_cells() as f64 / (trace.rows * trace.cols) as f64
}

pub fn report(trace: &SimTrace) -> MetricsReport {
    MetricsReport {
        sf: shooting_frequency(trace),
        mm: mean_momentum(trace),
        cov: coverage(trace),
    }
}

/// Simulates a sequence under the default platform and scores it.
pub fn score(seq: &ParametricSequence) -> Result<MetricsReport> {
    Ok(report(&run(seq, &SimConfig::default())?))
}

/// JS divergence in nats between histograms of two samples over their pooled
/// range.
pub fn js_divergence(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("js_divergence needs two non-empty samples".into()));
    }
    if bins == 0 {
        return Err(Error::Config("js_divergence needs at least one bin".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "js_divergence sample".into() });
    }
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(0.0);
    }
    let hist = |xs: &[f64]| {
        let mut h = vec![JS_SMOOTHING; bins];
        for &x in xs {
            let i = (((x - lo) / (hi - lo)) * bins as f64).floor() as usize;
            h[i.min(bins - 1)] += 1.0;
        }
        let total: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= total);
        h
    };
    let (p, q) = (hist(a), hist(b));
    let mut js = 0.0;
    for (&pi, &qi) in p.iter().zip(&q) {
        let m = 0.5 * (pi + qi);
        // summing the two halves per bin keeps js(a,b) == js(b,a) bit for bit
        js += 0.5 * (pi * (pi / m).ln() + qi * (qi / m).ln());
    }
    Ok(js.clamp(0.0, std::f64::consts::LN_2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: Metric,
    pub js_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

pub fn compare(a: &[MetricsReport], b: &[MetricsReport]) -> Result<Vec<Comparison>> {
    Metric::ALL
        .iter()
        .map(|&m| {
            let xa: Vec<f64> = a.iter().map(|r| r.get(m)).collect();
            let xb: Vec<f64> = b.iter().map(|r| r.get(m)).collect();
            Ok(Comparison { metric: m, js_value: js_divergence(&xa, &xb, JS_BINS)?, n_a: a.len(), n_b: b.len() })
        })
        .collect()
}

pub fn comparison_csv(rows: &[Comparison]) -> String {
    let mut out = String::from("metric,js_value,n_a,n_b\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.metric.name(), r.js_value, r.n_a, r.n_b);
    }
    out
}

/// Population mean and standard deviation (divisor `n`).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{BulletSpec, ShotEvent};
    use crate::sim::{run_events, simulate, BulletState};
    use std::f64::consts::{FRAC_PI_2, LN_2};

    fn still() -> BulletSpec {
        BulletSpec { spawn_dx: 0.0, spawn_dy: 0.0, angle: 0.0, speed: 0.0, accel: 0.0, ang_vel: 0.0, radius: 2.0 }
    }

    fn sf_of(itvs: &[u32]) -> f64 {
        let events: Vec<ShotEvent> = itvs.iter().map(|&itv| ShotEvent::new(itv, still())).collect();
        let cfg = SimConfig { t_max: 200, ..SimConfig::default() };
        shooting_frequency(&run_events(&events, &cfg, false))
    }

    #[test]
    fn shooting_frequency_examples() {
        let mut stream = vec![1u32; 64];
        stream[0] = 0;
        assert_eq!(sf_of(&stream), 64.0 / 63.0);
        assert_eq!(sf_of(&[0; 64]), 64.0);
        let mut gap = vec![0u32; 64];
        gap[1] = 64;
        assert_eq!(sf_of(&gap), 1.0);
    }

    #[test]
    fn momentum_examples() {
        let cfg = SimConfig { t_max: 100, ..SimConfig::default() };
        // weight 1, speed 2, moving along a long horizontal track for the whole run
        let b = BulletState { speed: 2.0, ..BulletState::at(0.0, 200.0, 8.0) };
        let trace = simulate(&[(0, b)], &cfg, false);
        assert_eq!(trace.t_total, 100);
        assert_eq!(mean_momentum(&trace), 2.0);

        let empty = simulate(&[], &cfg, false);
        assert_eq!(mean_momentum(&empty), 0.0);
        assert_eq!(coverage(&empty), 0.0);

        // (w=1,s=2) then (w=2,s=1), each alive for exactly half the run
        let fast = BulletState { angle: FRAC_PI_2, speed: 2.0, ..BulletState::at(100.0, 380.0, 8.0) };
        let slow = BulletState { angle: FRAC_PI_2, speed: 1.0, ..BulletState::at(300.0, 430.0, 16.0) };
        let cfg = SimConfig { t_max: 1000, ..cfg };
        let trace = simulate(&[(0, fast), (50, slow)], &cfg, false);
        assert_eq!(trace.t_total, 100);
        assert_eq!(mean_momentum(&trace), 2.0);
    }

    #[test]
    fn one_cell_coverage() {
        let cfg = SimConfig { t_max: 10, ..SimConfig::default() };
        let trace = simulate(&[(0, BulletState::at(36.0, 52.0, 2.0))], &cfg, false);
        assert_eq!(coverage(&trace), 1.0 / 2688.0);
    }

    #[test]
    fn js_examples() {
        let a = [1.0, 2.0, 3.0, 3.5];
        assert_eq!(js_divergence(&a, &a, 16).unwrap(), 0.0);
        let d = js_divergence(&[0.0; 30], &[1.0; 30], 16).unwrap();
        assert!(d <= LN_2 && d >= LN_2 - 1e-3, "{d}");
        let b = [0.5, 2.5, 9.0];
        assert_eq!(js_divergence(&a, &b, 16).unwrap(), js_divergence(&b, &a, 16).unwrap());
        assert_eq!(js_divergence(&[4.0; 3], &[4.0; 5], 16).unwrap(), 0.0);
        assert!(js_divergence(&[], &a, 16).is_err());
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }

    #[test]
    fn comparison_csv_layout() {
        let r = MetricsReport { sf: 1.0, mm: 2.0, cov: 0.5 };
        let rows = compare(&[r, r], &[r]).unwrap();
        let csv = comparison_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("metric,js_value,n_a,n_b\nsf,0,2,1\n"));
    }
}
