use danmaku_core::corpus::build_corpus;
use danmaku_core::models::{Arch, Model, ModelConfig, TimeganConfig};
use danmaku_core::rng::seeded;
use danmaku_core::trainer::{evaluate_model, evaluate_sequences, train, TrainConfig};

fn small(arch: Arch, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::for_arch(arch, seed);
    cfg.model = ModelConfig { timegan: TimeganConfig { hidden: 8, layers: 1, latent: 4, noise_len: 64 } };
    cfg
}

#[test]
fn hundred_iterations_log_five_rows() {
    let corpus = build_corpus(34, 1).unwrap();
    let mut cfg = small(Arch::Psgan, 2);
    cfg.iterations = 100;
    cfg.eval_samples = 4;
    let mut model = Model::new(Arch::Psgan, &cfg.model, cfg.seed).unwrap();
    let out = train(&mut model, &corpus, &cfg).unwrap();
    let iters: Vec<usize> = out.rows.iter().map(|r| r.iteration).collect();
    assert_eq!(iters, [20, 40, 60, 80, 100]);
    assert_eq!(out.log_csv().lines().count(), 6);
    assert_eq!(out.samples.len(), 20);
    for r in &out.rows {
        assert!(r.g_loss.is_finite() && r.d_loss.is_finite());
        assert!(r.eval.sf.std >= 0.0 && r.eval.mm.std >= 0.0 && r.eval.cov.std >= 0.0);
    }
}

#[test]
fn single_sample_and_identical_samples_have_zero_spread() {
    let model = Model::new(Arch::Dcgan, &ModelConfig::default(), 3).unwrap();
    let (row, _) = evaluate_model(&model, 1, &mut seeded(4), 1).unwrap();
    assert_eq!((row.sf.std, row.mm.std, row.cov.std), (0.0, 0.0, 0.0));
    let seq = model.generate(1, &mut seeded(5)).unwrap().remove(0);
    let (row, reports) = evaluate_sequences(&vec![seq; 30], 2).unwrap();
    assert_eq!(reports.len(), 30);
    // the mean of thirty equal values can round, leaving a residue near 1 ulp
    for s in [row.sf, row.mm, row.cov] {
        assert!(s.std <= 1e-12 * s.mean.abs().max(1.0), "{s:?}");
    }
}

#[test]
fn evaluation_leaves_weights_untouched() {
    let model = Model::new(Arch::Psgan, &ModelConfig::default(), 6).unwrap();
    let before = model.to_checkpoint(6, 0, serde_json::Value::Null).to_bytes();
    evaluate_model(&model, 3, &mut seeded(7), 1).unwrap();
    assert_eq!(model.to_checkpoint(6, 0, serde_json::Value::Null).to_bytes(), before);
}

#[test]
fn worker_count_does_not_change_results() {
    let model = Model::new(Arch::Psgan, &ModelConfig::default(), 8).unwrap();
    let a = evaluate_model(&model, 6, &mut seeded(9), 1).unwrap();
    let b = evaluate_model(&model, 6, &mut seeded(9), 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn same_seed_same_checkpoint() {
    let corpus = build_corpus(34, 1).unwrap();
    for arch in Arch::ALL {
        let mut cfg = small(arch, 10);
        cfg.iterations = 3;
        cfg.pretrain_iterations = 2;
        cfg.supervised_iterations = 2;
        cfg.eval_every = 3;
        cfg.eval_samples = 2;
        let run = || {
            let mut m = Model::new(arch, &cfg.model, cfg.seed).unwrap();
            let out = train(&mut m, &corpus, &cfg).unwrap();
            (m.to_checkpoint(cfg.seed, 3, serde_json::Value::Null).to_bytes(), out.log_csv(), out.phase_csv())
        };
        assert_eq!(run(), run(), "{arch}");
    }
}

#[test]
fn timegan_phases_can_be_skipped() {
    let corpus = build_corpus(34, 1).unwrap();
    let mut cfg = small(Arch::Timegan, 11);
    cfg.pretrain_iterations = 0;
    cfg.supervised_iterations = 0;
    cfg.iterations = 2;
    cfg.eval_samples = 2;
    cfg.eval_every = 1;
    let mut m = Model::new(Arch::Timegan, &cfg.model, cfg.seed).unwrap();
    let out = train(&mut m, &corpus, &cfg).unwrap();
    assert_eq!(out.rows.len(), 2);
    assert!(out.pretrain_mse.is_none());
    let seqs = m.generate(3, &mut seeded(12)).unwrap();
    assert!(seqs.iter().all(|s| s.flat().iter().all(|&v| v > 0.0 && v < 1.0)));
}

#[test]
fn autoencoder_pretraining_lowers_reconstruction_error() {
    let corpus = build_corpus(34, 1).unwrap();
    let mut cfg = small(Arch::Timegan, 13);
    cfg.pretrain_iterations = 40;
    cfg.supervised_iterations = 0;
    cfg.iterations = 0;
    let mut m = Model::new(Arch::Timegan, &cfg.model, cfg.seed).unwrap();
    let out = train(&mut m, &corpus, &cfg).unwrap();
    let (before, after) = out.pretrain_mse.unwrap();
    assert!(after < before, "{before} -> {after}");
    assert_eq!(out.phase_losses.len(), 40);
}

#[test]
fn mismatched_model_is_rejected() {
    let corpus = build_corpus(2, 1).unwrap();
    let cfg = small(Arch::Dcgan, 1);
    let mut m = Model::new(Arch::Psgan, &cfg.model, 1).unwrap();
    assert!(train(&mut m, &corpus, &cfg).is_err());
}
