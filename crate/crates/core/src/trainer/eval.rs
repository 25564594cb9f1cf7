//! Sample-and-score evaluation of a model with frozen weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::ParametricSequence;
use crate::error::{Error, Result};
use crate::metrics::{mean_std, score, MetricsReport};
use crate::models::Model;
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub sf: MetricStats,
    pub mm: MetricStats,
    pub cov: MetricStats,
    /// Samples excluded because they could not be simulated.
    pub failed: usize,
}

fn stats(xs: &[f64]) -> MetricStats {
    let (mean, std) = mean_std(xs);
    MetricStats { mean, std }
}

/// Scores sequences on `workers` threads. Results keep input order, so the
/// row does not depend on the worker count.
pub fn evaluate_sequences(seqs: &[ParametricSequence], workers: usize) -> Result<(EvalRow, Vec<MetricsReport>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let results: Vec<Result<MetricsReport>> = pool.install(|| seqs.par_iter().map(score).collect());
    let failed = results.iter().filter(|r| r.is_err()).count();
    let reports: Vec<MetricsReport> = results.into_iter().filter_map(|r| r.ok()).collect();
    let row = if reports.is_empty() {
        EvalRow {
            sf: MetricStats { mean: f64::NAN, std: f64::NAN },
            mm: MetricStats { mean: f64::NAN, std: f64::NAN },
            cov: MetricStats { mean: f64::NAN, std: f64::NAN },
            failed,
        }
    } else {
        let col = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
        EvalRow { sf: stats(&col(|r| r.sf)), mm: stats(&col(|r| r.mm)), cov: stats(&col(|r| r.cov)), failed }
    };
    Ok((row, reports))
}

/// Generates `n` sequences and scores them.
pub fn evaluate_model(
    model: &Model,
    n: usize,
    rng: &mut StreamRng,
    workers: usize,
) -> Result<(EvalRow, Vec<MetricsReport>)> {
    if n == 0 {
        return Err(Error::Config("evaluation needs at least one sample".into()));
    }
    let seqs = model.generate(n, rng)?;
    evaluate_sequences(&seqs, workers)
}
