//! Generator and discriminator architectures.

pub mod dcgan;
pub mod noise;
pub mod psgan;
pub mod timegan;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::{ParametricSequence, FEATURE_DIMS, SEQ_LEN};
use crate::error::{Error, Result};
use crate::rng::{seeded, StreamRng};
use crate::tensor::{
    conv1d_out_len, conv_transpose1d_out_len, Bound, Checkpoint, CheckpointHeader, Conv1d, ConvTranspose1d,
    NamedTensor, ParamStore, Tape, Tensor, Var,
};

pub use dcgan::Dcgan;
pub use noise::NoiseSpec;
pub use psgan::Psgan;
pub use timegan::{Timegan, TimeganConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Dcgan,
    Psgan,
    Timegan,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Dcgan, Arch::Psgan, Arch::Timegan];

    pub fn id(self) -> &'static str {
        match self {
            Arch::Dcgan => "dcgan",
            Arch::Psgan => "psgan",
            Arch::Timegan => "timegan",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}` (expected dcgan, psgan or timegan)")))
    }
}

/// One convolution layer: channels, kernel, stride, padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerPlan {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug)]
enum Layer {
    Down(Conv1d),
    Up(ConvTranspose1d),
}

/// Convolution stack with ReLU between layers and a logistic at the end.
#[derive(Clone, Debug)]
pub(crate) struct Stack(Vec<Layer>);

impl Stack {
    pub(crate) fn new(params: &mut ParamStore, name: &str, plan: &[LayerPlan], transposed: bool, rng: &mut StreamRng) -> Self {
        Stack(
            plan.iter()
                .enumerate()
                .map(|(i, p)| {
                    let n = format!("{name}.{i}");
                    if transposed {
                        Layer::Up(ConvTranspose1d::new(params, &n, p.c_in, p.c_out, p.kernel, p.stride, p.padding, rng))
                    } else {
                        Layer::Down(Conv1d::new(params, &n, p.c_in, p.c_out, p.kernel, p.stride, p.padding, rng))
                    }
                })
                .collect(),
        )
    }
}

pub(crate) fn conv_stack(tape: &mut Tape, bound: &Bound, stack: &Stack, x: Var) -> Result<Vec<Var>> {
    let mut outs = Vec::with_capacity(stack.0.len());
    let mut h = x;
    for (i, layer) in stack.0.iter().enumerate() {
        let y = match layer {
            Layer::Down(c) => c.forward(tape, bound, h)?,
            Layer::Up(c) => c.forward(tape, bound, h)?,
        };
        h = if i + 1 == stack.0.len() { tape.sigmoid(y) } else { tape.relu(y) };
        outs.push(h);
    }
    Ok(outs)
}

/// Checks a plan's length chain against the expected one using the layer
/// length formulas.
pub fn audit_chain(plan: &[LayerPlan], transposed: bool, expected: &[usize]) -> Result<()> {
    let mut len = expected[0];
    let mut chain = vec![len];
    for p in plan {
        len = if transposed {
            conv_transpose1d_out_len(len, p.kernel, p.stride, p.padding)?
        } else {
            conv1d_out_len(len, p.kernel, p.stride, p.padding)?
        };
        chain.push(len);
    }
    if chain != expected {
        return Err(Error::shape("architecture", "length", format!("chain {chain:?}, expected {expected:?}")));
    }
    Ok(())
}

pub(crate) fn gaussian(shape: Vec<usize>, rng: &mut StreamRng) -> Tensor {
    let n = shape.iter().product();
    let values = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape, values).expect("shape matches")
}

/// `[B, 1, L]` scores to `[B]` by averaging over positions.
pub(crate) fn scores_per_sample(tape: &mut Tape, out: Var) -> Result<Var> {
    let s = tape.shape(out).to_vec();
    let (batch, len) = (s[0], s[1] * s[2]);
    let flat = tape.reshape(out, vec![batch, len])?;
    if len == 1 {
        return tape.reshape(flat, vec![batch]);
    }
    let avg = tape.constant(vec![len, 1], vec![1.0 / len as f64; len])?;
    let y = tape.matmul(flat, avg)?;
    tape.reshape(y, vec![batch])
}

/// Concatenates equally shaped tensors along the batch axis.
pub fn stack_batch(tape: &mut Tape, xs: &[Var]) -> Result<Var> {
    let s = tape.shape(xs[0]).to_vec();
    let n = tape.value(xs[0]).len();
    let flat = xs.iter().map(|&x| tape.reshape(x, vec![1, n])).collect::<Result<Vec<_>>>()?;
    let cat = tape.concat_last(&flat)?;
    let mut shape = s;
    shape[0] *= xs.len();
    tape.reshape(cat, shape)
}

/// Splits a batch into `parts` equal pieces; inverse of [`stack_batch`].
pub fn split_batch(tape: &mut Tape, x: Var, parts: usize) -> Result<Vec<Var>> {
    let s = tape.shape(x).to_vec();
    if parts == 0 || s[0] % parts != 0 {
        return Err(Error::shape("split_batch", "batch", format!("{} rows into {parts} parts", s[0])));
    }
    let n = tape.value(x).len() / parts;
    let mut shape = s;
    shape[0] /= parts;
    let flat = tape.reshape(x, vec![1, n * parts])?;
    (0..parts)
        .map(|i| {
            let piece = tape.slice_last(flat, i * n, n)?;
            tape.reshape(piece, shape.clone())
        })
        .collect()
}

/// Generator/discriminator pair trained with the plain adversarial loop.
pub trait AdversarialGan {
    fn gen_params(&self) -> &ParamStore;
    fn gen_params_mut(&mut self) -> &mut ParamStore;
    fn disc_params(&self) -> &ParamStore;
    fn disc_params_mut(&mut self) -> &mut ParamStore;
    fn sample_noise(&self, batch: usize, rng: &mut StreamRng) -> Tensor;
    /// Noise to sequences `[B, 64, 8]`.
    fn generate(&self, tape: &mut Tape, bound: &Bound, noise: Var) -> Result<Var>;
    /// Sequences `[B, 64, 8]` to one score in (0, 1) per sample, `[B]`.
    fn discriminate(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var>;
}

#[derive(Clone, Debug)]
pub enum Model {
    Dcgan(Dcgan),
    Psgan(Psgan),
    Timegan(Timegan),
}

/// Architecture settings recorded in checkpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub timegan: TimeganConfig,
}

/// Splits a flat `[B, 64, 8]` output into sequences.
pub fn to_sequences(values: &[f64]) -> Result<Vec<ParametricSequence>> {
    values.chunks(SEQ_LEN * FEATURE_DIMS).map(ParametricSequence::from_flat).collect()
}

/// Stacks sequences into a `[B, 64, 8]` tensor.
pub fn batch_tensor(seqs: &[ParametricSequence]) -> Tensor {
    let values = seqs.iter().flat_map(|s| s.flat()).collect();
    Tensor::new(vec![seqs.len(), SEQ_LEN, FEATURE_DIMS], values).expect("sequences are 64 x 8")
}

impl Model {
    pub fn new(arch: Arch, config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = seeded(crate::rng::derive_seed(seed, "init", 0));
        Ok(match arch {
            Arch::Dcgan => Model::Dcgan(Dcgan::new(&mut rng)?),
            Arch::Psgan => Model::Psgan(Psgan::new(&mut rng)?),
            Arch::Timegan => Model::Timegan(Timegan::new(config.timegan, &mut rng)?),
        })
    }

    pub fn arch(&self) -> Arch {
        match self {
            Model::Dcgan(_) => Arch::Dcgan,
            Model::Psgan(_) => Arch::Psgan,
            Model::Timegan(_) => Arch::Timegan,
        }
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Timegan(m) => ModelConfig { timegan: m.config },
            _ => ModelConfig::default(),
        }
    }

    pub fn stores(&self) -> Vec<&ParamStore> {
        match self {
            Model::Dcgan(m) => vec![&m.gen, &m.disc],
            Model::Psgan(m) => vec![&m.gen, &m.disc],
            Model::Timegan(m) => m.stores().to_vec(),
        }
    }

    fn stores_mut(&mut self) -> Vec<&mut ParamStore> {
        match self {
            Model::Dcgan(m) => vec![&mut m.gen, &mut m.disc],
            Model::Psgan(m) => vec![&mut m.gen, &mut m.disc],
            Model::Timegan(m) => m.stores_mut().into_iter().collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.stores().iter().map(|s| s.numel()).sum()
    }

    /// Generates `count` sequences with frozen weights, in one batch.
    pub fn generate(&self, count: usize, rng: &mut StreamRng) -> Result<Vec<ParametricSequence>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let out = match self {
            Model::Dcgan(m) => frozen_generate(m, &mut tape, count, rng)?,
            Model::Psgan(m) => frozen_generate(m, &mut tape, count, rng)?,
            Model::Timegan(m) => {
                let bounds = m.bind(&mut tape, [false; 5]);
                let zg = tape.leaf(&m.sample_noise(count, rng));
                m.synthesize(&mut tape, &bounds, zg)?
            }
        };
        to_sequences(tape.value(out))
    }

    pub fn to_checkpoint(&self, seed: u64, iteration: u64, train: serde_json::Value) -> Checkpoint {
        let config = serde_json::json!({ "model": self.config(), "train": train });
        let tensors = self
            .stores()
            .into_iter()
            .flat_map(|s| s.iter())
            .map(|(name, t)| NamedTensor {
                name: name.to_string(),
                tensor: Tensor::new(t.shape().to_vec(), t.values().to_vec()).expect("valid tensor"),
            })
            .collect();
        Checkpoint { header: CheckpointHeader { arch: self.arch().id().to_string(), seed, iteration, config }, tensors }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let arch: Arch = ckpt.header.arch.parse()?;
        let config: ModelConfig = match ckpt.header.config.get("model") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::Checkpoint(format!("bad model config: {e}")))?,
            None => ModelConfig::default(),
        };
        let mut model = Model::new(arch, &config, ckpt.header.seed)?;
        let expected: usize = model.stores().iter().map(|s| s.len()).sum();
        if expected != ckpt.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{arch} expects {expected} tensors, checkpoint holds {}",
                ckpt.tensors.len()
            )));
        }
        for store in model.stores_mut() {
            store.load(|name| ckpt.get(name))?;
        }
        Ok(model)
    }
}

fn frozen_generate<G: AdversarialGan>(m: &G, tape: &mut Tape, count: usize, rng: &mut StreamRng) -> Result<Var> {
    let bound = m.gen_params().bind(tape, false);
    let z = tape.leaf(&m.sample_noise(count, rng));
    m.generate(tape, &bound, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arch_ids_round_trip() {
        for a in Arch::ALL {
            assert_eq!(a.id().parse::<Arch>().unwrap(), a);
        }
        assert!("gan".parse::<Arch>().is_err());
    }

    #[test]
    fn chain_audit_rejects_wrong_expectation() {
        assert!(audit_chain(&psgan::GENERATOR_PLAN, true, &[10, 13, 28, 31, 65]).is_err());
        audit_chain(&dcgan::GENERATOR_PLAN, true, &dcgan::GENERATOR_CHAIN).unwrap();
    }
}
