//! `danmaku` command-line front end.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use danmaku_core::agent::{playability, playability_program, AgentConfig};
use danmaku_core::codec::{unroll, DanmakuProgram, ParametricSequence, ShotEvent};
use danmaku_core::corpus::{build_corpus, CorpusManifest};
use danmaku_core::metrics::{compare, comparison_csv, report};
use danmaku_core::models::{Arch, Model};
use danmaku_core::rng::stream;
use danmaku_core::sim::render::render_frames;
use danmaku_core::sim::{run, run_recorded, SimConfig};
use danmaku_core::tensor::{Checkpoint, OptimizerKind};
use danmaku_core::trainer::{
    emit_curves, evaluate_sequences, load_population, parse_log_csv, parse_samples_csv, sequence_files, train,
    Population, TrainConfig,
};
use danmaku_core::Error;

use manifest::RunManifest;

#[derive(Debug, Parser, Serialize)]
#[command(name = "danmaku", version, about = "Bullet pattern encoding, simulation, metrics and GAN training")]
pub struct Cli {
    /// Worker threads for evaluation and batch scoring.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Build the synthetic training corpus.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Program or event list JSON to a parametric sequence.
    Encode(EncodeArgs),
    /// Parametric sequence to a shot-event list.
    Decode(DecodeArgs),
    /// Simulate a sequence and report its metrics.
    Simulate(SimulateArgs),
    /// Render simulated frames as PPM images.
    Render(RenderArgs),
    /// Train a model on a corpus directory.
    Train(TrainArgs),
    /// Sample sequences from a checkpoint.
    Generate(GenerateArgs),
    /// Compare metric distributions of two populations.
    Evaluate(EvaluateArgs),
    /// Plot a training log against a real-corpus baseline.
    Curves(CurvesArgs),
    /// Playability of a sequence or program for the dodging agent.
    Agent(AgentArgs),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum CorpusAction {
    Build(CorpusBuildArgs),
}

#[derive(Debug, Args, Serialize)]
struct CorpusBuildArgs {
    #[arg(long, default_value_t = 34)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Also write the trace summary here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Include per-frame momentum sums in the trace summary.
    #[arg(long)]
    momentum: bool,
}

#[derive(Debug, Args, Serialize)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write every n-th frame.
    #[arg(long, default_value_t = 60)]
    stride: usize,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    model: Arch,
    /// Corpus directory written by `corpus build`.
    #[arg(long)]
    data: PathBuf,
    /// Adversarial (or joint) iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    pretrain_iters: Option<usize>,
    #[arg(long)]
    supervised_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    eval_samples: Option<usize>,
    #[arg(long)]
    augment_scale: Option<f64>,
    /// TimeGAN hidden units per LSTM layer.
    #[arg(long)]
    hidden: Option<usize>,
    /// TimeGAN LSTM layers per network.
    #[arg(long)]
    layers: Option<usize>,
    /// TimeGAN latent dimension.
    #[arg(long)]
    latent: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 30)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    /// Sequence directory or population JSON.
    #[arg(long)]
    real: PathBuf,
    /// Sequence directory or population JSON.
    #[arg(long)]
    gen: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CurvesArgs {
    #[arg(long)]
    log: PathBuf,
    /// Population JSON or sequence directory of the real corpus.
    #[arg(long)]
    baseline: PathBuf,
    /// Per-sample metrics written by `train`, for the divergence column.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct AgentArgs {
    /// Sequence JSON, or program JSON for live aiming.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    horizon: Option<usize>,
}

/// A failed run: exit code plus a one-line record.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn validation(kind: &'static str, message: impl Into<String>) -> Self {
        Failure { code: 1, kind, message: message.into() }
    }

    fn runtime(kind: &'static str, message: impl Into<String>) -> Self {
        Failure { code: 2, kind, message: message.into() }
    }

    fn record(&self) -> String {
        serde_json::json!({ "error": self.kind, "exit": self.code, "message": self.message }).to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::Backward(_) => "backward",
            Error::OutOfRange { .. } => "out_of_range",
            Error::Stall { .. } => "stall",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Diverged { .. } => "diverged",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Format(_) => "format",
        };
        match e {
            Error::NonFinite { .. } | Error::Backward(_) | Error::Diverged { .. } | Error::Io { .. } => {
                Failure::runtime(kind, e.to_string())
            }
            _ => Failure::validation(kind, e.to_string()),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn require(path: &Path) -> Outcome<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Failure::validation("input", format!("{}: no such file or directory", path.display())))
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(require(path)?)
        .map_err(|e| Failure::validation("input", format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::runtime("io", format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::runtime("io", format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Outcome {
    fs::create_dir_all(path).map_err(|e| Failure::runtime("io", format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn load_sequence(path: &Path) -> Outcome<ParametricSequence> {
    Ok(ParametricSequence::from_json(&read_text(path)?)?)
}

/// Population of a sequence directory, scored on `workers` threads, or of a
/// population JSON file.
fn population(path: &Path, workers: usize) -> Outcome<Population> {
    require(path)?;
    if !path.is_dir() {
        return Ok(load_population(path)?);
    }
    let files = sequence_files(path)?;
    if files.is_empty() {
        return Err(Failure::validation("input", format!("{} holds no seq_*.json files", path.display())));
    }
    let seqs = files.iter().map(|f| load_sequence(f)).collect::<Outcome<Vec<_>>>()?;
    let (row, samples) = evaluate_sequences(&seqs, workers)?;
    if row.failed > 0 {
        return Err(Failure::validation("input", format!("{} sequences in {} failed to simulate", row.failed, path.display())));
    }
    Ok(Population { label: path.display().to_string(), samples })
}

enum Input {
    Program(DanmakuProgram),
    Sequence(ParametricSequence),
}

/// A program object (has a `template` key), an event array, or a sequence.
fn load_input(path: &Path) -> Outcome<Input> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::validation("json", format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| Failure::validation("json", format!("{}: {e}", path.display()));
    if value.get("template").is_some() {
        let p: DanmakuProgram = serde_json::from_value(value).map_err(bad)?;
        return Ok(Input::Program(DanmakuProgram::new(p.template, p.params, p.seed)?));
    }
    if value.is_array() {
        let events: Vec<ShotEvent> = serde_json::from_value(value).map_err(bad)?;
        return Ok(Input::Sequence(ParametricSequence::from_events(&events)?));
    }
    Ok(Input::Sequence(ParametricSequence::from_json(&text)?))
}

fn corpus_build(cli: &Cli, a: &CorpusBuildArgs) -> Outcome<RunManifest> {
    let corpus = build_corpus(a.count, a.seed)?;
    let seqs = corpus.sequences()?;
    let (_, samples) = evaluate_sequences(&seqs, cli.workers)?;
    corpus.write_dir(&a.out)?;
    write_file(&a.out.join("baseline.json"), to_json(&Population { label: "corpus".into(), samples }))?;
    Ok(RunManifest::new("corpus build", cli, vec![a.seed], vec![], vec![a.out.clone()]))
}

fn encode(a: &EncodeArgs) -> Outcome {
    let seq = match load_input(&a.input)? {
        Input::Program(p) => unroll(&p)?,
        Input::Sequence(s) => s,
    };
    write_file(&a.out, seq.to_json())
}

fn decode(a: &DecodeArgs) -> Outcome {
    let events = load_sequence(&a.input)?.to_events()?;
    write_file(&a.out, to_json(&events))
}

fn simulate(a: &SimulateArgs) -> Outcome {
    let seq = load_sequence(&a.input)?;
    let trace = run(&seq, &SimConfig::default())?;
    write_file(&a.report, to_json(&report(&trace)))?;
    if let Some(path) = &a.trace {
        write_file(path, to_json(&trace.summary(a.momentum)))?;
    }
    Ok(())
}

fn render(cli: &Cli, a: &RenderArgs) -> Outcome<RunManifest> {
    if a.stride == 0 {
        return Err(Failure::validation("config", "stride must be at least 1"));
    }
    let seq = load_sequence(&a.input)?;
    let cfg = SimConfig::default();
    let trace = run_recorded(&seq, &cfg)?;
    render_frames(&trace, a.stride, &cfg, &a.out)?;
    Ok(RunManifest::new("render", cli, vec![], vec![a.input.clone()], vec![a.out.clone()]))
}

fn train_config(cli: &Cli, a: &TrainArgs) -> TrainConfig {
    let mut cfg = TrainConfig::for_arch(a.model, a.seed);
    cfg.workers = cli.workers;
    if let Some(v) = a.iters {
        cfg.iterations = v;
    }
    if let Some(v) = a.pretrain_iters {
        cfg.pretrain_iterations = v;
    }
    if let Some(v) = a.supervised_iters {
        cfg.supervised_iterations = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(lr) = a.lr {
        cfg.optimizer = match cfg.optimizer {
            OptimizerKind::Adam { .. } => OptimizerKind::adam(lr),
            OptimizerKind::RmsProp { .. } => OptimizerKind::rmsprop(lr),
        };
    }
    if let Some(v) = a.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = a.eval_samples {
        cfg.eval_samples = v;
    }
    if let Some(v) = a.augment_scale {
        cfg.augment_scale = v;
    }
    let t = &mut cfg.model.timegan;
    t.hidden = a.hidden.unwrap_or(t.hidden);
    t.layers = a.layers.unwrap_or(t.layers);
    t.latent = a.latent.unwrap_or(t.latent);
    cfg
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Outcome<RunManifest> {
    require(&a.data)?;
    let corpus = CorpusManifest::load_dir(&a.data)?;
    let cfg = train_config(cli, a);
    cfg.validate()?;
    let mut model = Model::new(a.model, &cfg.model, a.seed)?;
    let train_json = serde_json::to_value(&cfg).expect("config serializes");
    let outcome = match train(&mut model, &corpus, &cfg) {
        Ok(o) => o,
        Err(e @ (Error::Diverged { .. } | Error::NonFinite { .. })) => {
            create_dir(&a.out)?;
            let path = a.out.join("diagnostics.ckpt");
            model.to_checkpoint(a.seed, 0, train_json).save(&path)?;
            let mut f = Failure::from(e);
            f.message = format!("{}; weights dumped to {}", f.message, path.display());
            return Err(f);
        }
        Err(e) => return Err(e.into()),
    };
    create_dir(&a.out)?;
    model.to_checkpoint(a.seed, cfg.iterations as u64, train_json).save(&a.out.join("model.ckpt"))?;
    write_file(&a.out.join("train_log.csv"), outcome.log_csv())?;
    write_file(&a.out.join("samples.csv"), outcome.samples_csv())?;
    if !outcome.phase_losses.is_empty() {
        write_file(&a.out.join("phases.csv"), outcome.phase_csv())?;
    }
    let summary = serde_json::json!({
        "model": a.model,
        "parameters": model.parameter_count(),
        "iterations": cfg.iterations,
        "pretrain_mse": outcome.pretrain_mse,
    });
    write_file(&a.out.join("summary.json"), to_json(&summary))?;
    let mut manifest = RunManifest::new("train", cli, vec![a.seed], vec![a.data.clone()], vec![a.out.clone()]);
    manifest.config = Some(serde_json::to_value(&cfg).expect("config serializes"));
    Ok(manifest)
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Outcome<RunManifest> {
    if a.count == 0 {
        return Err(Failure::validation("config", "count must be at least 1"));
    }
    require(&a.ckpt)?;
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let model = Model::from_checkpoint(&ckpt)?;
    let seqs = model.generate(a.count, &mut stream(a.seed, "generate", 0))?;
    create_dir(&a.out)?;
    for (i, s) in seqs.iter().enumerate() {
        s.save(&a.out.join(CorpusManifest::sequence_file_name(i)))?;
    }
    Ok(RunManifest::new("generate", cli, vec![a.seed, ckpt.header.seed], vec![a.ckpt.clone()], vec![a.out.clone()]))
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Outcome {
    let real = population(&a.real, cli.workers)?;
    let gen = population(&a.gen, cli.workers)?;
    write_file(&a.out, comparison_csv(&compare(&gen.samples, &real.samples)?))
}

fn curves(cli: &Cli, a: &CurvesArgs) -> Outcome<RunManifest> {
    let log = parse_log_csv(&read_text(&a.log)?)?;
    let samples = match &a.samples {
        Some(p) => Some(parse_samples_csv(&read_text(p)?)?),
        None => None,
    };
    let baseline = population(&a.baseline, cli.workers)?;
    emit_curves(&log, samples.as_deref(), &baseline, &a.out)?;
    let mut inputs = vec![a.log.clone(), a.baseline.clone()];
    inputs.extend(a.samples.clone());
    Ok(RunManifest::new("curves", cli, vec![], inputs, vec![a.out.clone()]))
}

fn agent(a: &AgentArgs) -> Outcome {
    let mut cfg = AgentConfig::default();
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;
    let screen = SimConfig::default();
    let report = match load_input(&a.input)? {
        Input::Program(p) => playability_program(&p, &cfg, &screen)?,
        Input::Sequence(s) => playability(&s, &cfg, &screen)?,
    };
    write_file(&a.report, to_json(&report))
}

fn dispatch(cli: &Cli) -> Outcome {
    let manifest = match &cli.command {
        Command::Corpus { action: CorpusAction::Build(a) } => Some((corpus_build(cli, a)?, &a.out)),
        Command::Encode(a) => encode(a).map(|_| None)?,
        Command::Decode(a) => decode(a).map(|_| None)?,
        Command::Simulate(a) => simulate(a).map(|_| None)?,
        Command::Render(a) => Some((render(cli, a)?, &a.out)),
        Command::Train(a) => Some((train_cmd(cli, a)?, &a.out)),
        Command::Generate(a) => Some((generate(cli, a)?, &a.out)),
        Command::Evaluate(a) => evaluate(cli, a).map(|_| None)?,
        Command::Curves(a) => Some((curves(cli, a)?, &a.out)),
        Command::Agent(a) => agent(a).map(|_| None)?,
    };
    if let Some((m, dir)) = manifest {
        write_file(&dir.join(manifest::FILE_NAME), to_json(&m))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", Failure::validation("usage", first).record());
            return ExitCode::from(1);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.record());
            ExitCode::from(f.code)
        }
    }
}
