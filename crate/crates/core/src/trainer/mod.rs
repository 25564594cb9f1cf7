//! Training loops, the periodic evaluation protocol and curve output.

mod curves;
mod eval;

pub use curves::{
    emit_curves, load_population, parse_log_csv, parse_samples_csv, sequence_files, CurveRow, LogEntry, Population,
};
pub use eval::{evaluate_model, evaluate_sequences, EvalRow, MetricStats};

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{load_batch, CorpusManifest, AUGMENT_SCALE};
use crate::error::{Error, Result};
use crate::models::{batch_tensor, split_batch, stack_batch, AdversarialGan, Arch, Model, ModelConfig, Timegan};
use crate::rng::stream;
use crate::tensor::{OptimizerKind, OptimizerState, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: Arch,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Adversarial iterations (joint iterations for TimeGAN).
    pub iterations: usize,
    pub pretrain_iterations: usize,
    pub supervised_iterations: usize,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub seed: u64,
    /// Weight of the supervised loss in the joint generator objective.
    pub eta: f64,
    /// Weight of the supervised loss in the joint embedder objective.
    pub lambda: f64,
    pub augment_scale: f64,
    pub workers: usize,
    pub model: ModelConfig,
}

impl TrainConfig {
    /// Full-length schedule and optimizer for an architecture.
    pub fn for_arch(arch: Arch, seed: u64) -> Self {
        let (optimizer, pretrain, supervised) = match arch {
            Arch::Timegan => (OptimizerKind::rmsprop(2e-3), 5000, 500),
            _ => (OptimizerKind::adam(2e-4), 0, 0),
        };
        TrainConfig {
            arch,
            batch_size: 12,
            optimizer,
            iterations: 5000,
            pretrain_iterations: pretrain,
            supervised_iterations: supervised,
            eval_every: 20,
            eval_samples: 30,
            seed,
            eta: 1.0,
            lambda: 0.1,
            augment_scale: AUGMENT_SCALE,
            workers: 1,
            model: ModelConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = match self.optimizer {
            OptimizerKind::Adam { learning_rate, .. } | OptimizerKind::RmsProp { learning_rate, .. } => learning_rate,
        };
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.augment_scale >= 0.0) {
            return Err(Error::Config("augmentation scale must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iteration: usize,
    pub eval: EvalRow,
    pub g_loss: f64,
    pub d_loss: f64,
    /// Seconds since training started; kept out of the CSV so that logs are
    /// byte-reproducible.
    pub wall_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Supervised,
    Joint,
    Adversarial,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Supervised => "supervised",
            Phase::Joint => "joint",
            Phase::Adversarial => "adversarial",
        }
    }
}

/// Loss of one optimisation step, for phases without evaluation rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseLoss {
    pub phase: Phase,
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainOutcome {
    pub rows: Vec<TrainLogRow>,
    /// Per-sample metrics behind every evaluation row: (iteration, sf, mm, cov).
    pub samples: Vec<(usize, f64, f64, f64)>,
    pub phase_losses: Vec<PhaseLoss>,
    /// TimeGAN only: reconstruction MSE over the un-augmented corpus before
    /// and after autoencoder pretraining.
    pub pretrain_mse: Option<(f64, f64)>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("iter,sf_mean,sf_std,mm_mean,mm_std,cov_mean,cov_std,g_loss,d_loss\n");
        for r in &self.rows {
            let e = &r.eval;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.iteration, e.sf.mean, e.sf.std, e.mm.mean, e.mm.std, e.cov.mean, e.cov.std, r.g_loss, r.d_loss
            );
        }
        out
    }

    pub fn samples_csv(&self) -> String {
        let mut out = String::from("iter,sf,mm,cov\n");
        for (it, sf, mm, cov) in &self.samples {
            let _ = writeln!(out, "{it},{sf},{mm},{cov}");
        }
        out
    }

    pub fn phase_csv(&self) -> String {
        let mut out = String::from("phase,iter,loss\n");
        for p in &self.phase_losses {
            let _ = writeln!(out, "{},{},{}", p.phase.name(), p.iteration, p.loss);
        }
        out
    }
}

fn check_loss(value: f64, phase: Phase, iteration: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Diverged { phase: phase.name(), iteration })
    }
}

fn real_batch(corpus: &CorpusManifest, cfg: &TrainConfig, phase: Phase, iteration: usize) -> Result<Tensor> {
    let mut rng = stream(cfg.seed, &format!("batch.{}", phase.name()), iteration as u64);
    Ok(batch_tensor(&load_batch(corpus, cfg.batch_size, cfg.augment_scale, &mut rng)?))
}

fn apply(
    tape: &mut Tape,
    loss: Var,
    updates: &mut [(&mut ParamStore, &crate::tensor::Bound, &mut OptimizerState)],
    phase: Phase,
    iteration: usize,
) -> Result<f64> {
    let value = check_loss(tape.scalar(loss), phase, iteration)?;
    tape.backward(loss)?;
    for (store, bound, opt) in updates.iter_mut() {
        store.collect_grads(tape, bound)?;
        opt.step(store).map_err(|e| match e {
            Error::NonFinite { .. } => Error::Diverged { phase: phase.name(), iteration },
            other => other,
        })?;
    }
    Ok(value)
}

struct Evaluator<'a> {
    cfg: &'a TrainConfig,
    start: Instant,
    outcome: TrainOutcome,
}

impl Evaluator<'_> {
    fn maybe_eval(&mut self, model: &Model, iteration: usize, g_loss: f64, d_loss: f64) -> Result<()> {
        if self.cfg.eval_every == 0 || self.cfg.eval_samples == 0 || iteration % self.cfg.eval_every != 0 {
            return Ok(());
        }
        let mut rng = stream(self.cfg.seed, "eval", iteration as u64);
        let (eval, reports) = evaluate_model(model, self.cfg.eval_samples, &mut rng, self.cfg.workers)?;
        self.outcome.samples.extend(reports.iter().map(|r| (iteration, r.sf, r.mm, r.cov)));
        self.outcome.rows.push(TrainLogRow {
            iteration,
            eval,
            g_loss,
            d_loss,
            wall_seconds: self.start.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

/// Trains `model` in place. On error the model holds the weights reached so
/// far, which callers may dump for diagnosis.
pub fn train(model: &mut Model, corpus: &CorpusManifest, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.arch() != cfg.arch {
        return Err(Error::Config(format!("model is {} but config trains {}", model.arch(), cfg.arch)));
    }
    let mut ev = Evaluator { cfg, start: Instant::now(), outcome: TrainOutcome::default() };
    match model {
        Model::Timegan(_) => train_timegan(model, corpus, cfg, &mut ev)?,
        _ => train_adversarial(model, corpus, cfg, &mut ev)?,
    }
    Ok(ev.outcome)
}

fn adversarial_step<G: AdversarialGan>(
    m: &mut G,
    real: &Tensor,
    opts: &mut (OptimizerState, OptimizerState),
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<(f64, f64)> {
    let phase = Phase::Adversarial;
    let mut noise_rng = stream(cfg.seed, "noise", iteration as u64);

    let mut tape = Tape::new();
    let gb = m.gen_params().bind(&mut tape, false);
    let db = m.disc_params().bind(&mut tape, true);
    let x = tape.leaf(real);
    let z = tape.leaf(&m.sample_noise(cfg.batch_size, &mut noise_rng));
    let fake = m.generate(&mut tape, &gb, z)?;
    let pr = m.discriminate(&mut tape, &db, x)?;
    let pf = m.discriminate(&mut tape, &db, fake)?;
    let lr = tape.bce_const(pr, 1.0)?;
    let lf = tape.bce_const(pf, 0.0)?;
    let d_loss = tape.add(lr, lf)?;
    let d_value = apply(&mut tape, d_loss, &mut [(m.disc_params_mut(), &db, &mut opts.1)], phase, iteration)?;

    let mut tape = Tape::new();
    let gb = m.gen_params().bind(&mut tape, true);
    let db = m.disc_params().bind(&mut tape, false);
    let z = tape.leaf(&m.sample_noise(cfg.batch_size, &mut noise_rng));
    let fake = m.generate(&mut tape, &gb, z)?;
    let pf = m.discriminate(&mut tape, &db, fake)?;
    let g_loss = tape.bce_const(pf, 1.0)?;
    let g_value = apply(&mut tape, g_loss, &mut [(m.gen_params_mut(), &gb, &mut opts.0)], phase, iteration)?;
    Ok((g_value, d_value))
}

fn train_adversarial(model: &mut Model, corpus: &CorpusManifest, cfg: &TrainConfig, ev: &mut Evaluator) -> Result<()> {
    let stores = model.stores();
    let mut opts = (OptimizerState::new(cfg.optimizer, stores[0]), OptimizerState::new(cfg.optimizer, stores[1]));
    for it in 1..=cfg.iterations {
        let real = real_batch(corpus, cfg, Phase::Adversarial, it)?;
        let (g, d) = match model {
            Model::Dcgan(m) => adversarial_step(m, &real, &mut opts, cfg, it)?,
            Model::Psgan(m) => adversarial_step(m, &real, &mut opts, cfg, it)?,
            Model::Timegan(_) => unreachable!("handled by train_timegan"),
        };
        ev.maybe_eval(model, it, g, d)?;
    }
    Ok(())
}

/// `H[:, 1:]` against `S(H)[:, :-1]`.
fn supervised_loss(tape: &mut Tape, h: Var, h_sup: Var) -> Result<Var> {
    let steps = tape.shape(h)[1];
    let target = tape.step_range(h, 1, steps - 1)?;
    let pred = tape.step_range(h_sup, 0, steps - 1)?;
    tape.mse(target, pred)
}

fn timegan(model: &mut Model) -> &mut Timegan {
    match model {
        Model::Timegan(m) => m,
        _ => unreachable!("checked by caller"),
    }
}

/// Reconstruction MSE of a batch through the embedder and reconstructor.
pub fn reconstruction_mse(m: &Timegan, batch: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let b = m.bind(&mut tape, [false; 5]);
    let x = tape.leaf(batch);
    let h = m.embed(&mut tape, &b.emb, x)?;
    let xr = m.reconstruct(&mut tape, &b.rec, h)?;
    let loss = tape.mse(xr, x)?;
    Ok(tape.scalar(loss))
}

fn train_timegan(model: &mut Model, corpus: &CorpusManifest, cfg: &TrainConfig, ev: &mut Evaluator) -> Result<()> {
    let kind = cfg.optimizer;
    let m = timegan(model);

    // phase 1: autoencoder
    let corpus_batch = batch_tensor(&corpus.sequences()?);
    let mse_before = reconstruction_mse(m, &corpus_batch)?;
    let mut e_opt = OptimizerState::new(kind, &m.emb);
    let mut r_opt = OptimizerState::new(kind, &m.rec);
    for it in 1..=cfg.pretrain_iterations {
        let real = real_batch(corpus, cfg, Phase::Pretrain, it)?;
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, [true, true, false, false, false]);
        let x = tape.leaf(&real);
        let h = m.embed(&mut tape, &b.emb, x)?;
        let xr = m.reconstruct(&mut tape, &b.rec, h)?;
        let loss = tape.mse(xr, x)?;
        let v = apply(
            &mut tape,
            loss,
            &mut [(&mut m.emb, &b.emb, &mut e_opt), (&mut m.rec, &b.rec, &mut r_opt)],
            Phase::Pretrain,
            it,
        )?;
        ev.outcome.phase_losses.push(PhaseLoss { phase: Phase::Pretrain, iteration: it, loss: v });
    }

    if cfg.pretrain_iterations > 0 {
        ev.outcome.pretrain_mse = Some((mse_before, reconstruction_mse(m, &corpus_batch)?));
    }

    // phase 2: supervisor on real latents
    let mut s_opt = OptimizerState::new(kind, &m.sup);
    for it in 1..=cfg.supervised_iterations {
        let real = real_batch(corpus, cfg, Phase::Supervised, it)?;
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, [false, false, false, true, false]);
        let x = tape.leaf(&real);
        let h = m.embed(&mut tape, &b.emb, x)?;
        let hs = m.supervise(&mut tape, &b.sup, h)?;
        let loss = supervised_loss(&mut tape, h, hs)?;
        let v = apply(&mut tape, loss, &mut [(&mut m.sup, &b.sup, &mut s_opt)], Phase::Supervised, it)?;
        ev.outcome.phase_losses.push(PhaseLoss { phase: Phase::Supervised, iteration: it, loss: v });
    }

    // phase 3: joint
    let mut g_opt = OptimizerState::new(kind, &m.gen);
    let mut gs_opt = OptimizerState::new(kind, &m.sup);
    let mut e_opt = OptimizerState::new(kind, &m.emb);
    let mut r_opt = OptimizerState::new(kind, &m.rec);
    let mut d_opt = OptimizerState::new(kind, &m.disc);
    let phase = Phase::Joint;
    for it in 1..=cfg.iterations {
        let m = timegan(model);
        let real = real_batch(corpus, cfg, phase, it)?;
        let mut noise_rng = stream(cfg.seed, "noise", it as u64);
        let zg = m.sample_noise(cfg.batch_size, &mut noise_rng);

        // generator and supervisor
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, [false, false, true, true, false]);
        let x = tape.leaf(&real);
        let z = tape.leaf(&zg);
        let h = m.embed(&mut tape, &b.emb, x)?;
        let e_hat = m.generate_latent(&mut tape, &b.gen, z)?;
        // paired passes run as one double batch; the mean BCE over both
        // halves times two is the sum of the two per-half losses
        let pair = stack_batch(&mut tape, &[e_hat, h])?;
        let sup_out = m.supervise(&mut tape, &b.sup, pair)?;
        let halves = split_batch(&mut tape, sup_out, 2)?;
        let (h_hat, h_sup) = (halves[0], halves[1]);
        let fakes = stack_batch(&mut tape, &[h_hat, e_hat])?;
        let y_fake = m.discriminate(&mut tape, &b.disc, fakes)?;
        let adv = tape.bce_const(y_fake, 1.0)?;
        let adv = tape.scale(adv, 2.0);
        let sup = supervised_loss(&mut tape, h, h_sup)?;
        let sup = tape.scale(sup, cfg.eta);
        let g_loss = tape.add(adv, sup)?;
        let h_real = tape.to_tensor(h);
        let h_fake = tape.to_tensor(h_hat);
        let e_fake = tape.to_tensor(e_hat);
        let g_value = apply(
            &mut tape,
            g_loss,
            &mut [(&mut m.gen, &b.gen, &mut g_opt), (&mut m.sup, &b.sup, &mut gs_opt)],
            phase,
            it,
        )?;

        // embedder and reconstructor
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, [true, true, false, false, false]);
        let x = tape.leaf(&real);
        let h = m.embed(&mut tape, &b.emb, x)?;
        let xr = m.reconstruct(&mut tape, &b.rec, h)?;
        let h_sup = m.supervise(&mut tape, &b.sup, h)?;
        let rec = tape.mse(xr, x)?;
        let sup = supervised_loss(&mut tape, h, h_sup)?;
        let sup = tape.scale(sup, cfg.lambda);
        let e_loss = tape.add(rec, sup)?;
        apply(
            &mut tape,
            e_loss,
            &mut [(&mut m.emb, &b.emb, &mut e_opt), (&mut m.rec, &b.rec, &mut r_opt)],
            phase,
            it,
        )?;

        // discriminator on the latents of this iteration's generator pass
        let mut tape = Tape::new();
        let b = m.disc.bind(&mut tape, true);
        let parts = [&h_real, &h_fake, &e_fake].map(|t| tape.leaf(t));
        let v = stack_batch(&mut tape, &parts)?;
        let y = m.discriminate(&mut tape, &b, v)?;
        let n = tape.value(y).len() / 3;
        let mut target = vec![0.0; 3 * n];
        target[..n].fill(1.0);
        let d_loss = tape.bce(y, &target)?;
        let d_loss = tape.scale(d_loss, 3.0);
        let d_value = apply(&mut tape, d_loss, &mut [(&mut m.disc, &b, &mut d_opt)], phase, it)?;

        ev.maybe_eval(model, it, g_value, d_value)?;
    }
    Ok(())
}
