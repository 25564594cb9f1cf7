//! Convolutional GAN with a `100 x 1` latent and a 256-channel head.

use crate::error::Result;
use crate::rng::StreamRng;
use crate::tensor::{Bound, ParamStore, Tape, Tensor, Var};

use super::{audit_chain, conv_stack, gaussian, scores_per_sample, AdversarialGan, LayerPlan, Stack};

pub const LATENT_DIM: usize = 100;

pub const GENERATOR_PLAN: [LayerPlan; 5] = [
    LayerPlan { c_in: 100, c_out: 256, kernel: 4, stride: 1, padding: 0 },
    LayerPlan { c_in: 256, c_out: 128, kernel: 4, stride: 2, padding: 1 },
    LayerPlan { c_in: 128, c_out: 64, kernel: 4, stride: 2, padding: 1 },
    LayerPlan { c_in: 64, c_out: 32, kernel: 4, stride: 2, padding: 1 },
    LayerPlan { c_in: 32, c_out: 8, kernel: 4, stride: 2, padding: 1 },
];

pub const DISCRIMINATOR_PLAN: [LayerPlan; 5] = [
    LayerPlan { c_in: 8, c_out: 32, kernel: 4, stride: 2, padding: 1 },
    LayerPlan { c_in: 32, c_out: 64, kernel: 4, stride: 2, padding: 1 },
    LayerPlan { c_in: 64, c_out: 128, kernel: 4, stride: 2, padding: 1 },
    LayerPlan { c_in: 128, c_out: 256, kernel: 4, stride: 2, padding: 1 },
    LayerPlan { c_in: 256, c_out: 1, kernel: 4, stride: 1, padding: 0 },
];

pub const GENERATOR_CHAIN: [usize; 6] = [1, 4, 8, 16, 32, 64];
pub const DISCRIMINATOR_CHAIN: [usize; 6] = [64, 32, 16, 8, 4, 1];

#[derive(Clone, Debug)]
pub struct Dcgan {
    pub gen: ParamStore,
    pub disc: ParamStore,
    g: Stack,
    d: Stack,
}

impl Dcgan {
    pub fn new(rng: &mut StreamRng) -> Result<Self> {
        audit_chain(&GENERATOR_PLAN, true, &GENERATOR_CHAIN)?;
        audit_chain(&DISCRIMINATOR_PLAN, false, &DISCRIMINATOR_CHAIN)?;
        let mut gen = ParamStore::new();
        let mut disc = ParamStore::new();
        let g = Stack::new(&mut gen, "gen", &GENERATOR_PLAN, true, rng);
        let d = Stack::new(&mut disc, "disc", &DISCRIMINATOR_PLAN, false, rng);
        Ok(Dcgan { gen, disc, g, d })
    }

    /// Activations after every generator layer, input `[batch, 100, 1]`.
    pub fn generator_layers(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Vec<Var>> {
        conv_stack(tape, bound, &self.g, z)
    }

    /// Activations after every discriminator layer, input `[batch, 64, 8]`.
    pub fn discriminator_layers(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Vec<Var>> {
        let x = tape.swap_last2(x)?;
        conv_stack(tape, bound, &self.d, x)
    }
}

impl AdversarialGan for Dcgan {
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
        gaussian(vec![batch, LATENT_DIM, 1], rng)
    }

    fn generate(&self, tape: &mut Tape, bound: &Bound, noise: Var) -> Result<Var> {
        let out = *self.generator_layers(tape, bound, noise)?.last().expect("non-empty stack");
        tape.swap_last2(out)
    }

    fn discriminate(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let out = *self.discriminator_layers(tape, bound, x)?.last().expect("non-empty stack");
        scores_per_sample(tape, out)
    }
}
