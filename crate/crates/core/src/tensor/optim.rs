use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    #[serde(rename = "rmsprop")]
    RmsProp {
        learning_rate: f64,
        decay: f64,
        epsilon: f64,
    },
}

impl OptimizerKind {
    /// Adam with the DCGAN-style betas (0.5, 0.999).
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerKind::Adam {
            learning_rate,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        OptimizerKind::RmsProp {
            learning_rate,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Per-network optimizer state; moment buffers mirror the parameter store.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let first_moment = match kind {
            OptimizerKind::Adam { .. } => zeros.clone(),
            OptimizerKind::RmsProp { .. } => Vec::new(),
        };
        OptimizerState {
            kind,
            step_count: 0,
            first_moment,
            second_moment: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update using the gradients stored on the parameters.
    /// Nothing is modified if any gradient is missing or non-finite.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if params.len() != self.second_moment.len() {
            return Err(Error::Config(format!(
                "optimizer built for {} parameters, store has {}",
                self.second_moment.len(),
                params.len()
            )));
        }
        for (i, (name, t)) in params.iter().enumerate() {
            let g = t
                .grad()
                .ok_or_else(|| Error::Backward(format!("parameter `{name}` has no gradient")))?;
            if g.len() != self.second_moment[i].len() {
                return Err(Error::shape("optimizer_step", "values", format!("parameter `{name}`")));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient of parameter `{name}` at index {j}"),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = p.grad().expect("checked above").to_vec();
            let values = p.values_mut();
            match self.kind {
                OptimizerKind::Adam { learning_rate, beta1, beta2, epsilon } => {
                    let bc1 = 1.0 - beta1.powi(t);
                    let bc2 = 1.0 - beta2.powi(t);
                    let (m, v) = (&mut self.first_moment[i], &mut self.second_moment[i]);
                    for j in 0..g.len() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        let m_hat = m[j] / bc1;
                        let v_hat = v[j] / bc2;
                        values[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
                OptimizerKind::RmsProp { learning_rate, decay, epsilon } => {
                    let s = &mut self.second_moment[i];
                    for j in 0..g.len() {
                        s[j] = decay * s[j] + (1.0 - decay) * g[j] * g[j];
                        values[j] -= learning_rate * g[j] / (s[j].sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
