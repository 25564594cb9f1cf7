//! Synthetic danmaku corpus and the training-time Gaussian mutation.

pub mod templates;

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::{unroll, DanmakuProgram, ParametricSequence};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
pub use templates::TemplateId;

/// Relative standard deviation of the parameter mutation.
pub const AUGMENT_SCALE: f64 = 0.05;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub seed: u64,
    pub count: usize,
    pub programs: Vec<DanmakuProgram>,
}

/// Samples `count` programs, cycling through the template families so every
/// family appears once `count >= 6`.
pub fn build_corpus(count: usize, seed: u64) -> Result<CorpusManifest> {
    if count == 0 {
        return Err(Error::Config("corpus count must be at least 1".into()));
    }
    let mut rng = seeded(derive_seed(seed, "corpus", 0));
    let programs = (0..count)
        .map(|i| {
            let template = TemplateId::ALL[i % TemplateId::ALL.len()];
            let mut params: Vec<f64> = template
                .bounds()
                .iter()
                .map(|&(_, lo, hi, _)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect();
            template.clamp_params(&mut params);
            DanmakuProgram {
                template,
                params,
                seed: rng.random(),
            }
        })
        .collect();
    Ok(CorpusManifest {
        version: 1,
        seed,
        count,
        programs,
    })
}

/// Gaussian mutation `p_j + N(0, (scale * |p_j|)^2)`, clamped back into the
/// template bounds.
pub fn augment<R: Rng + ?Sized>(template: TemplateId, params: &[f64], scale: f64, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = params
        .iter()
        .map(|&p| {
            let z: f64 = StandardNormal.sample(rng);
            p + z * scale * p.abs()
        })
        .collect();
    template.clamp_params(&mut out);
    out
}

/// Draws `batch_size` programs uniformly with replacement, mutates their
/// parameters and unrolls them.
pub fn load_batch<R: Rng + ?Sized>(
    manifest: &CorpusManifest,
    batch_size: usize,
    scale: f64,
    rng: &mut R,
) -> Result<Vec<ParametricSequence>> {
    if manifest.programs.is_empty() {
        return Err(Error::Config("empty corpus".into()));
    }
    (0..batch_size)
        .map(|_| {
            let program = &manifest.programs[rng.random_range(0..manifest.programs.len())];
            let params = augment(program.template, &program.params, scale, rng);
            unroll(&DanmakuProgram {
                template: program.template,
                params,
                seed: program.seed,
            })
        })
        .collect()
}

impl CorpusManifest {
    /// Un-augmented sequences of every program, in manifest order.
    pub fn sequences(&self) -> Result<Vec<ParametricSequence>> {
        self.programs.iter().map(unroll).collect()
    }

    pub fn sequence_file_name(index: usize) -> String {
        format!("seq_{index:04}.json")
    }

    /// Writes `manifest.json` and one sequence file per program.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let sequences = self.sequences()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        for (i, seq) in sequences.iter().enumerate() {
            seq.save(&dir.join(Self::sequence_file_name(i)))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CorpusManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        if manifest.programs.len() != manifest.count {
            return Err(Error::Format(format!(
                "manifest lists {} programs but declares {}",
                manifest.programs.len(),
                manifest.count
            )));
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{FEATURE_DIMS, SEQ_LEN};
    use std::collections::HashSet;

    #[test]
    fn corpus_is_deterministic_and_covers_families() {
        let a = build_corpus(34, 5).unwrap();
        let b = build_corpus(34, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.programs.len(), 34);
        let families: HashSet<_> = a.programs.iter().map(|p| p.template).collect();
        assert_eq!(families.len(), 6);
        assert_ne!(build_corpus(34, 6).unwrap(), a);
        assert_eq!(build_corpus(1, 5).unwrap().programs.len(), 1);
        assert!(build_corpus(0, 5).is_err());
    }

    #[test]
    fn zero_scale_and_zero_component_are_fixed_points() {
        let mut rng = seeded(1);
        let p = vec![8.0, 16.0, 2.0, 4.0, 0.0, 0.01];
        assert_eq!(augment(TemplateId::RingBurst, &p, 0.0, &mut rng), p);
        for _ in 0..100 {
            let out = augment(TemplateId::RingBurst, &p, 0.05, &mut rng);
            assert_eq!(out[4], 0.0);
        }
    }

    #[test]
    fn mutation_std_is_proportional() {
        // rotation bound is 0.8 for the ring, so use the spray spread (0..64)
        let mut rng = seeded(2);
        let p = vec![1.0, 1.0, 4.0, 4.0, 10.0, 0.0];
        let draws: Vec<f64> = (0..10_000)
            .map(|_| augment(TemplateId::RandomSpray, &p, 0.05, &mut rng)[4] - 10.0)
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let std = var.sqrt();
        assert!((0.45..=0.55).contains(&std), "std {std}");
        // unbiased up to three standard errors
        assert!(mean.abs() < 3.0 * std / (draws.len() as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn augmented_parameters_stay_in_bounds() {
        let mut rng = seeded(3);
        let corpus = build_corpus(12, 9).unwrap();
        for program in &corpus.programs {
            for _ in 0..50 {
                let out = augment(program.template, &program.params, 0.5, &mut rng);
                for (v, &(_, lo, hi, _)) in out.iter().zip(program.template.bounds()) {
                    assert!((lo..=hi).contains(v));
                }
            }
        }
    }

    #[test]
    fn batches_have_declared_shape() {
        let corpus = build_corpus(34, 1).unwrap();
        let mut rng = seeded(4);
        let batch = load_batch(&corpus, 12, AUGMENT_SCALE, &mut rng).unwrap();
        assert_eq!(batch.len(), 12);
        for seq in &batch {
            assert_eq!(seq.rows().len(), SEQ_LEN);
            assert!(seq.rows().iter().all(|r| r.len() == FEATURE_DIMS && r.iter().all(|v| (0.0..=1.0).contains(v))));
        }
    }

    #[test]
    fn unaugmented_loads_repeat() {
        let corpus = build_corpus(1, 1).unwrap();
        let mut rng = seeded(5);
        let batch = load_batch(&corpus, 3, 0.0, &mut rng).unwrap();
        assert_eq!(batch[0], batch[1]);
        assert_eq!(batch[1], batch[2]);
    }
}
