use super::*;
use crate::corpus::{make_synthetic_corpus_with, SyntheticConfig};
use crate::pose::ValidityThresholds;
use std::sync::OnceLock;

fn corpus() -> &'static ProcessedCorpus {
    static C: OnceLock<ProcessedCorpus> = OnceLock::new();
    C.get_or_init(|| {
        let cfg = SyntheticConfig { clip_seconds: 6.0, n_speakers: Some(3), ..SyntheticConfig::new(6) };
        let clips = make_synthetic_corpus_with(&cfg, 21);
        ProcessedCorpus::from_clips(&clips, vec![], [0.34, 0.33, 0.33], 21, &ValidityThresholds::default()).unwrap()
    })
}

fn small_model(use_speaker_id: bool) -> GestureModel {
    let cfg = ModelConfig {
        hidden_size: 16,
        num_layers: 1,
        disc_hidden_size: 8,
        disc_num_layers: 1,
        embedding_dim: 16,
        use_speaker_id,
        ..ModelConfig::default()
    };
    build_model(corpus(), cfg, 3, None).unwrap()
}

fn config(epochs: usize, warmup: usize) -> TrainConfig {
    TrainConfig { epochs, warmup_epochs: warmup, batch_size: 8, seed: 9, ..TrainConfig::default() }
}

#[test]
fn breakdown_identity_and_warmup_schedule() {
    let m = small_model(true);
    let cfg = config(2, 1);
    let w = LossWeights::default();
    let out = Trainer::new(cfg.clone(), w).train(&m, corpus()).unwrap();
    let per_epoch = corpus().windows(Part::Train).len().div_ceil(8);
    assert_eq!(out.breakdowns.len(), 2 * per_epoch);
    for (i, b) in out.breakdowns.iter().enumerate() {
        let warm = i < per_epoch;
        let beta = if warm { 0.0 } else { w.beta };
        assert_eq!(b.total_g, w.alpha * b.huber + beta * b.nsgan_g + w.gamma * b.style + w.lambda * b.kld);
        assert!(b.huber >= 0.0 && b.kld >= 0.0 && (-w.tau..=0.0).contains(&b.style));
        if warm {
            assert_eq!((b.nsgan_g, b.total_d), (0.0, 0.0));
        } else {
            assert!(b.nsgan_g > 0.0 && b.total_d > 0.0);
        }
    }
    assert!(out.history[0].warmup && !out.history[1].warmup);
    assert_eq!(out.history[0].nsgan_g, 0.0);
    assert!(alternation_holds(&out.steps, &cfg));
    let d = out.steps.iter().filter(|s| s.kind == UpdateKind::Discriminator).count();
    assert_eq!(d, per_epoch);
}

#[test]
fn discriminator_frozen_during_warmup() {
    let m = small_model(true);
    let before = discriminator_snapshot(&m).unwrap();
    Trainer::new(config(2, 2), LossWeights::default()).train(&m, corpus()).unwrap();
    assert_eq!(before, discriminator_snapshot(&m).unwrap());

    let m = small_model(true);
    Trainer::new(config(1, 0), LossWeights::default()).train(&m, corpus()).unwrap();
    assert_ne!(before, discriminator_snapshot(&m).unwrap());
}

#[test]
fn alternation_checker_rejects_bad_logs() {
    let cfg = config(2, 1);
    let d = |epoch, step| StepEvent { epoch, step, kind: UpdateKind::Discriminator };
    let g = |epoch, step| StepEvent { epoch, step, kind: UpdateKind::Generator };
    assert!(alternation_holds(&[g(1, 0), d(2, 0), g(2, 0)], &cfg));
    assert!(!alternation_holds(&[d(1, 0), g(1, 0)], &cfg));
    assert!(!alternation_holds(&[d(2, 0), d(2, 0), g(2, 0)], &cfg));
    assert!(!alternation_holds(&[d(2, 0)], &cfg));
}

#[test]
fn same_seed_same_history() {
    let a = Trainer::new(config(2, 1), LossWeights::default()).train(&small_model(true), corpus()).unwrap();
    let b = Trainer::new(config(2, 1), LossWeights::default()).train(&small_model(true), corpus()).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.breakdowns, b.breakdowns);
}

#[test]
fn reconstruction_improves() {
    let m = small_model(true);
    let cfg = TrainConfig { learning_rate: 2e-3, ..config(4, 4) };
    let out = Trainer::new(cfg, LossWeights::default()).train(&m, corpus()).unwrap();
    assert!(out.history[3].huber < out.history[0].huber, "{:?}", out.history);
}

#[test]
fn checkpoints_and_history_written() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_model(true);
    let mut fgd = [3.0, 1.0, 2.0].into_iter();
    let out = Trainer::new(config(3, 1), LossWeights::default())
        .with_out_dir(dir.path())
        .with_validator(|_, _| Ok(ValidationMetrics { fgd: fgd.next().unwrap(), maej: 0.5 }))
        .train(&m, corpus())
        .unwrap();
    assert_eq!(out.best_epoch, Some(2));
    for e in 1..=3 {
        assert!(dir.path().join(epoch_checkpoint_name(e)).exists());
    }
    let (best, extra) = GestureModel::load(&dir.path().join(BEST_CHECKPOINT)).unwrap();
    assert_eq!(extra["epoch"], 2);
    assert_eq!(best.config, m.config);
    let (last, _) = GestureModel::load(&dir.path().join(epoch_checkpoint_name(3))).unwrap();
    assert_eq!(discriminator_snapshot(&last).unwrap(), discriminator_snapshot(&m).unwrap());

    let back = read_history(&dir.path().join(HISTORY_FILE)).unwrap();
    assert_eq!(back, out.history);
    let text = std::fs::read_to_string(dir.path().join(HISTORY_FILE)).unwrap();
    assert!(text.starts_with("epoch,huber,nsgan_g,style,kld,total_g,total_d,fgd_val,warmup"));
}

#[test]
fn ablation_has_no_style_terms() {
    let m = small_model(false);
    let out = Trainer::new(config(1, 1), LossWeights::default().without_style()).train(&m, corpus()).unwrap();
    assert!(out.breakdowns.iter().all(|b| b.style == 0.0 && b.kld == 0.0));
}

#[test]
fn non_finite_loss_aborts() {
    let m = small_model(true);
    let var = m.params.get("gen.out.bias").unwrap();
    var.set(&var.as_tensor().affine(0.0, f64::NAN).unwrap()).unwrap();
    let err = Trainer::new(config(1, 1), LossWeights::default()).train(&m, corpus()).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 1, step: 0, .. }), "{err}");
}

#[test]
fn invalid_settings_rejected() {
    assert!(config(2, 3).validate().is_err());
    assert!(TrainConfig { learning_rate: 0.0, ..config(1, 0) }.validate().is_err());
    assert!(LossWeights { beta: -1.0, ..LossWeights::default() }.validate().is_err());
    assert!(config(10, 10).is_warmup(10) && !config(10, 10).is_warmup(11));
}
