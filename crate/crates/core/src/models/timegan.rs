//! Time-series GAN: embedder, reconstructor, generator, supervisor and a
//! latent-space discriminator, each a stacked LSTM with a logistic head.

use serde::{Deserialize, Serialize};

use crate::codec::{FEATURE_DIMS, SEQ_LEN};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tensor::{Bound, Linear, LstmStack, ParamStore, Tape, Tensor, Var};

use super::noise::{NoiseSpec, NOISE_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeganConfig {
    pub hidden: usize,
    pub layers: usize,
    pub latent: usize,
    pub noise_len: usize,
}

impl Default for TimeganConfig {
    fn default() -> Self {
        TimeganConfig { hidden: 128, layers: 3, latent: 24, noise_len: SEQ_LEN }
    }
}

/// Stacked LSTM followed by a per-step affine head and a logistic.
#[derive(Clone, Debug)]
pub struct Net {
    lstm: LstmStack,
    head: Linear,
}

impl Net {
    fn new(params: &mut ParamStore, name: &str, input: usize, output: usize, cfg: &TimeganConfig, rng: &mut StreamRng) -> Self {
        Net {
            lstm: LstmStack::new(params, &format!("{name}.lstm"), input, cfg.hidden, cfg.layers, rng),
            head: Linear::new(params, &format!("{name}.head"), cfg.hidden, output, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let h = self.lstm.forward(tape, bound, x)?;
        let y = self.head.forward(tape, bound, h)?;
        Ok(tape.sigmoid(y))
    }
}

#[derive(Clone, Debug)]
pub struct Timegan {
    pub config: TimeganConfig,
    pub emb: ParamStore,
    pub rec: ParamStore,
    pub gen: ParamStore,
    pub sup: ParamStore,
    pub disc: ParamStore,
    pub noise: NoiseSpec,
    embedder: Net,
    reconstructor: Net,
    generator: Net,
    supervisor: Net,
    discriminator: Net,
}

impl Timegan {
    pub fn new(config: TimeganConfig, rng: &mut StreamRng) -> Result<Self> {
        if config.hidden == 0 || config.layers == 0 || config.latent == 0 {
            return Err(Error::Config(format!("invalid TimeGAN configuration {config:?}")));
        }
        if config.noise_len != SEQ_LEN {
            return Err(Error::Config(format!(
                "TimeGAN emits one step per noise row; noise length must be {SEQ_LEN}, got {}",
                config.noise_len
            )));
        }
        let (mut emb, mut rec, mut gen, mut sup, mut disc) =
            (ParamStore::new(), ParamStore::new(), ParamStore::new(), ParamStore::new(), ParamStore::new());
        let z = config.latent;
        let embedder = Net::new(&mut emb, "emb", FEATURE_DIMS, z, &config, rng);
        let reconstructor = Net::new(&mut rec, "rec", z, FEATURE_DIMS, &config, rng);
        let noise = NoiseSpec::new(&mut gen, config.noise_len, rng)?;
        let generator = Net::new(&mut gen, "gen", NOISE_DIM, z, &config, rng);
        let supervisor = Net::new(&mut sup, "sup", z, z, &config, rng);
        let discriminator = Net::new(&mut disc, "disc", z, 1, &config, rng);
        Ok(Timegan {
            config,
            emb,
            rec,
            gen,
            sup,
            disc,
            noise,
            embedder,
            reconstructor,
            generator,
            supervisor,
            discriminator,
        })
    }

    pub fn sample_noise(&self, batch: usize, rng: &mut StreamRng) -> Tensor {
        NoiseSpec::sample_global(batch, rng)
    }

    /// `[B, 64, 8]` -> `[B, 64, latent]`.
    pub fn embed(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        self.embedder.forward(tape, bound, x)
    }

    /// `[B, 64, latent]` -> `[B, 64, 8]`.
    pub fn reconstruct(&self, tape: &mut Tape, bound: &Bound, h: Var) -> Result<Var> {
        self.reconstructor.forward(tape, bound, h)
    }

    /// Global noise `[B, 16]` -> latent sequence `[B, 64, latent]`.
    pub fn generate_latent(&self, tape: &mut Tape, bound: &Bound, zg: Var) -> Result<Var> {
        let z = self.noise.forward(tape, bound, zg)?;
        self.generator.forward(tape, bound, z)
    }

    pub fn supervise(&self, tape: &mut Tape, bound: &Bound, h: Var) -> Result<Var> {
        self.supervisor.forward(tape, bound, h)
    }

    /// Per-step scores `[B, 64, 1]` on latent sequences.
    pub fn discriminate(&self, tape: &mut Tape, bound: &Bound, h: Var) -> Result<Var> {
        self.discriminator.forward(tape, bound, h)
    }

    /// Generator, supervisor, reconstructor: `[B, 16]` -> `[B, 64, 8]`.
    pub fn synthesize(&self, tape: &mut Tape, bounds: &TimeganBounds, zg: Var) -> Result<Var> {
        let e = self.generate_latent(tape, &bounds.gen, zg)?;
        let h = self.supervise(tape, &bounds.sup, e)?;
        self.reconstruct(tape, &bounds.rec, h)
    }

    pub fn stores(&self) -> [&ParamStore; 5] {
        [&self.emb, &self.rec, &self.gen, &self.sup, &self.disc]
    }

    pub fn stores_mut(&mut self) -> [&mut ParamStore; 5] {
        [&mut self.emb, &mut self.rec, &mut self.gen, &mut self.sup, &mut self.disc]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: [bool; 5]) -> TimeganBounds {
        TimeganBounds {
            emb: self.emb.bind(tape, trainable[0]),
            rec: self.rec.bind(tape, trainable[1]),
            gen: self.gen.bind(tape, trainable[2]),
            sup: self.sup.bind(tape, trainable[3]),
            disc: self.disc.bind(tape, trainable[4]),
        }
    }
}

/// Tape handles of all five networks.
#[derive(Clone, Debug)]
pub struct TimeganBounds {
    pub emb: Bound,
    pub rec: Bound,
    pub gen: Bound,
    pub sup: Bound,
    pub disc: Bound,
}
