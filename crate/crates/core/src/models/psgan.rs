//! Periodic spatial GAN: transposed convolutions without padding expand a
//! length-10 global+periodic noise sequence to 64 steps.

use crate::codec::SEQ_LEN;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tensor::{Bound, ParamStore, Tape, Tensor, Var};

use super::noise::NoiseSpec;
use super::{audit_chain, conv_stack, scores_per_sample, AdversarialGan, LayerPlan, Stack};

pub const NOISE_LEN: usize = 10;

pub const GENERATOR_PLAN: [LayerPlan; 4] = [
    LayerPlan { c_in: 32, c_out: 128, kernel: 4, stride: 1, padding: 0 },
    LayerPlan { c_in: 128, c_out: 64, kernel: 4, stride: 2, padding: 0 },
    LayerPlan { c_in: 64, c_out: 32, kernel: 4, stride: 1, padding: 0 },
    LayerPlan { c_in: 32, c_out: 8, kernel: 4, stride: 2, padding: 0 },
];

pub const DISCRIMINATOR_PLAN: [LayerPlan; 4] = [
    LayerPlan { c_in: 8, c_out: 32, kernel: 4, stride: 2, padding: 0 },
    LayerPlan { c_in: 32, c_out: 64, kernel: 4, stride: 1, padding: 0 },
    LayerPlan { c_in: 64, c_out: 128, kernel: 4, stride: 2, padding: 0 },
    LayerPlan { c_in: 128, c_out: 1, kernel: 4, stride: 1, padding: 0 },
];

pub const GENERATOR_CHAIN: [usize; 5] = [10, 13, 28, 31, 64];
pub const DISCRIMINATOR_CHAIN: [usize; 5] = [64, 31, 28, 13, 10];

#[derive(Clone, Debug)]
pub struct Psgan {
    pub gen: ParamStore,
    pub disc: ParamStore,
    pub noise: NoiseSpec,
    g: Stack,
    d: Stack,
}

impl Psgan {
    pub fn new(rng: &mut StreamRng) -> Result<Self> {
        Self::with_noise_len(NOISE_LEN, rng)
    }

    /// Builds the networks for an arbitrary noise length. Only length 10
    /// yields a 64-step sequence; other lengths fail in `generate`.
    pub fn with_noise_len(noise_len: usize, rng: &mut StreamRng) -> Result<Self> {
        audit_chain(&GENERATOR_PLAN, true, &GENERATOR_CHAIN)?;
        audit_chain(&DISCRIMINATOR_PLAN, false, &DISCRIMINATOR_CHAIN)?;
        let mut gen = ParamStore::new();
        let mut disc = ParamStore::new();
        let noise = NoiseSpec::new(&mut gen, noise_len, rng)?;
        let g = Stack::new(&mut gen, "gen", &GENERATOR_PLAN, true, rng);
        let d = Stack::new(&mut disc, "disc", &DISCRIMINATOR_PLAN, false, rng);
        Ok(Psgan { gen, disc, noise, g, d })
    }

    /// Noise tensor followed by the activation of every generator layer,
    /// all in `[batch, channels, len]` layout. `zg` is `[batch, 16]`.
    pub fn generator_layers(&self, tape: &mut Tape, bound: &Bound, zg: Var) -> Result<Vec<Var>> {
        let z = self.noise.forward(tape, bound, zg)?;
        let z = tape.swap_last2(z)?;
        let mut out = vec![z];
        out.extend(conv_stack(tape, bound, &self.g, z)?);
        Ok(out)
    }

    /// Activations after every discriminator layer, input `[batch, 64, 8]`.
    pub fn discriminator_layers(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Vec<Var>> {
        let x = tape.swap_last2(x)?;
        conv_stack(tape, bound, &self.d, x)
    }
}

impl AdversarialGan for Psgan {
    fn gen_params(&self) -> &ParamStore {
        &self.gen
    }

    fn gen_params_mut(&mut self) -> &mut ParamStore {
        &mut self.gen
    }

    fn disc_params(&self) -> &ParamStore {
        &self.disc
    }

    fn disc_params_mut(&mut self) -> &mut ParamStore {
        &mut self.disc
    }

    fn sample_noise(&self, batch: usize, rng: &mut StreamRng) -> Tensor {
        NoiseSpec::sample_global(batch, rng)
    }

    fn generate(&self, tape: &mut Tape, bound: &Bound, noise: Var) -> Result<Var> {
        let out = *self.generator_layers(tape, bound, noise)?.last().expect("non-empty stack");
        let len = tape.shape(out)[2];
        if len != SEQ_LEN {
            return Err(Error::shape(
                "psgan_generate",
                "length",
                format!("noise length {} produced {len} steps, sequences have {SEQ_LEN}", self.noise.spatial_len),
            ));
        }
        tape.swap_last2(out)
    }

    /// Mean of the per-position scores.
    fn discriminate(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let out = *self.discriminator_layers(tape, bound, x)?.last().expect("non-empty stack");
        scores_per_sample(tape, out)
    }
}
