//! Adversarial training of the gesture generator: a discriminator step and a
//! generator step per batch, with a warm-up during which the adversarial
//! term is off and the discriminator is frozen.

pub mod losses;

use std::fs;
use std::path::{Path, PathBuf};

use candle_core::backprop::GradStore;
use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use losses::{discriminator_loss, huber_loss, kld_loss, nsgan_generator_loss, style_diversity_loss};

use crate::corpus::{Part, ProcessedCorpus, WindowRef};
use crate::error::{Error, Result};
use crate::model::nn::clip_grad_norm;
use crate::model::{Batch, GestureModel, ModelConfig, Vocabulary, DISCRIMINATOR_PREFIXES, GENERATOR_PREFIXES};
use crate::rng::{indexed_seed, rng_from, sub_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 500.0, beta: 5.0, gamma: 0.05, lambda: 0.1, tau: 1000.0 }
    }
}

impl LossWeights {
    /// Weights for a model without speaker input: no style or KLD terms.
    pub fn without_style(self) -> Self {
        Self { gamma: 0.0, lambda: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.lambda, self.tau];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub huber_delta: f64,
    /// Global gradient-norm ceiling for both networks.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 5e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            warmup_epochs: 10,
            batch_size: 128,
            seed: 0,
            huber_delta: 1.0,
            grad_clip: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("epochs and batch_size must be positive".into()));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::InvalidInput(format!(
                "warmup_epochs {} exceeds epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        let rates = [self.learning_rate, self.huber_delta, self.grad_clip];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidInput("learning_rate, huber_delta and grad_clip must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidInput("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Epochs are numbered from 1; the first `warmup_epochs` are warm-up.
    pub fn is_warmup(&self, epoch: usize) -> bool {
        epoch <= self.warmup_epochs
    }
}

/// Loss values of one step. `total_g` is recomputed from the components in
/// f64 so the weighted-sum identity holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub huber: f64,
    pub nsgan_g: f64,
    pub style: f64,
    pub kld: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossBreakdown {
    pub fn total(w: &LossWeights, beta: f64, huber: f64, nsgan_g: f64, style: f64, kld: f64) -> f64 {
        w.alpha * huber + beta * nsgan_g + w.gamma * style + w.lambda * kld
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub fgd: f64,
    pub maej: f64,
}

/// One history row. Loss columns are epoch means over steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub huber: f64,
    pub nsgan_g: f64,
    pub style: f64,
    pub kld: f64,
    pub total_g: f64,
    pub total_d: f64,
    pub fgd_val: Option<f64>,
    pub warmup: bool,
    pub maej_val: Option<f64>,
    pub clipped_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateKind {
    Discriminator,
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvent {
    pub epoch: usize,
    pub step: usize,
    pub kind: UpdateKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub steps: Vec<StepEvent>,
    /// Epoch with the lowest validation FGD, if validation ran.
    pub best_epoch: Option<usize>,
    /// Every step loss, in order.
    pub breakdowns: Vec<LossBreakdown>,
}

/// A fresh model sized for `corpus`: vocabulary from the training words,
/// mean pose and skeleton from the training split.
pub fn build_model(
    corpus: &ProcessedCorpus,
    config: ModelConfig,
    seed: u64,
    pretrained: Option<&std::collections::HashMap<String, Vec<f32>>>,
) -> Result<GestureModel> {
    let vocab = Vocabulary::build(corpus.train_words());
    let config = ModelConfig { n_speakers: corpus.n_speakers.max(1), ..config };
    GestureModel::new(config, vocab, corpus.mean_pose, corpus.skeleton.clone(), sub_seed(seed, "model-init"), pretrained)
}

/// Checkpoint file name for an epoch.
pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const HISTORY_FILE: &str = "history.csv";

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in history {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    crate::archive::write_atomic(path, &bytes)
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub type Validator<'a> = dyn FnMut(&GestureModel, usize) -> Result<ValidationMetrics> + 'a;

pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub weights: LossWeights,
    /// Where checkpoints and the history go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    pub validator: Option<Box<Validator<'a>>>,
}

struct Optimizers {
    gen_vars: Vec<candle_core::Var>,
    disc_vars: Vec<candle_core::Var>,
    gen: AdamW,
    disc: AdamW,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, weights: LossWeights) -> Self {
        Self { config, weights, out_dir: None, validator: None }
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    pub fn with_validator(mut self, f: impl FnMut(&GestureModel, usize) -> Result<ValidationMetrics> + 'a) -> Self {
        self.validator = Some(Box::new(f));
        self
    }

    fn optimizers(&self, model: &GestureModel) -> Result<Optimizers> {
        let params = ParamsAdamW {
            lr: self.config.learning_rate,
            beta1: self.config.adam_beta1,
            beta2: self.config.adam_beta2,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let gen_vars = model.params.vars_with_prefix(&GENERATOR_PREFIXES);
        let disc_vars = model.params.vars_with_prefix(&DISCRIMINATOR_PREFIXES);
        Ok(Optimizers {
            gen: AdamW::new(gen_vars.clone(), params.clone())?,
            disc: AdamW::new(disc_vars.clone(), params)?,
            gen_vars,
            disc_vars,
        })
    }

    pub fn train(&mut self, model: &GestureModel, corpus: &ProcessedCorpus) -> Result<TrainOutcome> {
        self.config.validate()?;
        self.weights.validate()?;
        let windows = corpus.windows(Part::Train);
        if windows.is_empty() {
            return Err(Error::Corpus("the training split has no windows".into()));
        }
        let speakers = corpus.train_speakers();
        if let Some(dir) = &self.out_dir {
            fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
        }
        let mut opt = self.optimizers(model)?;
        let mut out = TrainOutcome { history: Vec::new(), steps: Vec::new(), best_epoch: None, breakdowns: Vec::new() };
        let mut best_fgd = f64::INFINITY;
        let seed = self.config.seed;
        for epoch in 1..=self.config.epochs {
            let warmup = self.config.is_warmup(epoch);
            let mut order = windows.clone();
            order.shuffle(&mut rng_from(indexed_seed(seed, "shuffle", epoch as u64)));
            let mut rng = rng_from(indexed_seed(seed, "train-step", epoch as u64));
            let mut sums = LossBreakdown::default();
            let mut clipped = 0;
            let n_steps = order.len().div_ceil(self.config.batch_size);
            for (step, chunk) in order.chunks(self.config.batch_size).enumerate() {
                let (b, was_clipped) = self.step(model, corpus, chunk, &speakers, warmup, &mut rng, &mut opt, epoch, step, &mut out.steps)?;
                clipped += was_clipped;
                sums.huber += b.huber;
                sums.nsgan_g += b.nsgan_g;
                sums.style += b.style;
                sums.kld += b.kld;
                sums.total_g += b.total_g;
                sums.total_d += b.total_d;
                out.breakdowns.push(b);
            }
            if clipped > 0 {
                log::info!("epoch {epoch}: gradient norm clipped in {clipped} updates");
            }
            let n = n_steps as f64;
            let metrics = match self.validator.as_mut() {
                Some(v) => Some(v(model, epoch)?),
                None => None,
            };
            let record = EpochRecord {
                epoch,
                huber: sums.huber / n,
                nsgan_g: sums.nsgan_g / n,
                style: sums.style / n,
                kld: sums.kld / n,
                total_g: sums.total_g / n,
                total_d: sums.total_d / n,
                fgd_val: metrics.map(|m| m.fgd),
                warmup,
                maej_val: metrics.map(|m| m.maej),
                clipped_steps: clipped,
            };
            log::info!(
                "epoch {epoch}{}: huber {:.5} g {:.4} d {:.4} fgd {:?}",
                if warmup { " (warm-up)" } else { "" },
                record.huber,
                record.total_g,
                record.total_d,
                record.fgd_val
            );
            let improved = metrics.is_some_and(|m| m.fgd < best_fgd);
            if improved {
                best_fgd = metrics.map_or(best_fgd, |m| m.fgd);
                out.best_epoch = Some(epoch);
            }
            if let Some(dir) = &self.out_dir {
                let extra = serde_json::json!({
                    "epoch": epoch,
                    "fgd_val": record.fgd_val,
                    "train_config": self.config,
                    "loss_weights": self.weights,
                });
                let archive = model.to_archive(extra)?;
                let bytes = archive.to_bytes()?;
                crate::archive::write_atomic(&dir.join(epoch_checkpoint_name(epoch)), &bytes)?;
                if improved || (metrics.is_none() && epoch == self.config.epochs) {
                    crate::archive::write_atomic(&dir.join(BEST_CHECKPOINT), &bytes)?;
                }
            }
            out.history.push(record);
            if let Some(dir) = &self.out_dir {
                write_history(&dir.join(HISTORY_FILE), &out.history)?;
            }
        }
        Ok(out)
    }

    fn clip(&self, grads: &mut GradStore, vars: &[candle_core::Var]) -> Result<bool> {
        let norm = clip_grad_norm(grads, vars, self.config.grad_clip)?;
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient norm {norm}")));
        }
        Ok(norm > self.config.grad_clip)
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        model: &GestureModel,
        corpus: &ProcessedCorpus,
        windows: &[WindowRef],
        speakers: &[usize],
        warmup: bool,
        rng: &mut Rng,
        opt: &mut Optimizers,
        epoch: usize,
        step: usize,
        log: &mut Vec<StepEvent>,
    ) -> Result<(LossBreakdown, usize)> {
        let w = &self.weights;
        let delta = self.config.huber_delta;
        let samples = windows.iter().map(|&r| corpus.sample(r)).collect::<Result<Vec<_>>>()?;
        let ids: Vec<usize> = samples.iter().map(|s| s.speaker_id).collect();
        let batch = Batch::new(&samples, ids, &model.vocab)?;
        let use_style = model.config.use_speaker_id && (w.gamma > 0.0 || w.lambda > 0.0);

        let ctx = model.context(&batch.word_ids, &batch.audio)?;
        let style_a = model.style_tensors(&batch.speakers, Some(rng))?;
        // identical dropout masks for both members of the style pair
        let dropout_rng = rng.clone();
        let fake = model.generate(&ctx, &style_a.sample, &batch.seeds, Some(rng))?;
        let mut clipped = 0;

        let mut total_d = 0.0;
        if !warmup {
            let d_loss = discriminator_loss(&model.discriminate(&batch.target)?, &model.discriminate(&fake.detach())?)?;
            total_d = d_loss.to_scalar::<f32>()? as f64;
            let mut grads = d_loss.backward()?;
            clipped += self.clip(&mut grads, &opt.disc_vars)? as usize;
            opt.disc.step(&grads)?;
            log.push(StepEvent { epoch, step, kind: UpdateKind::Discriminator });
        }

        let huber = huber_loss(&batch.target, &fake, delta)?;
        let mut g_loss = (&huber * w.alpha)?;
        let beta = if warmup { 0.0 } else { w.beta };
        let mut nsgan_v = 0.0;
        if !warmup {
            let nsgan = nsgan_generator_loss(&model.discriminate(&fake)?)?;
            nsgan_v = nsgan.to_scalar::<f32>()? as f64;
            g_loss = (g_loss + (nsgan * beta)?)?;
        }
        let (mut style_v, mut kld_v) = (0.0, 0.0);
        if use_style {
            let other: Vec<usize> = (0..batch.len()).map(|_| speakers[rng.random_range(0..speakers.len())]).collect();
            let style_b = model.style_tensors(&other, Some(rng))?;
            let mut drop_b = dropout_rng;
            let fake_b = model.generate(&ctx, &style_b.sample, &batch.seeds, Some(&mut drop_b))?;
            let style = style_diversity_loss(&fake, &fake_b, &style_a.sample, &style_b.sample, w.tau, delta)?;
            let kld = kld_loss(&style_a.mean, &style_a.log_variance)?;
            style_v = style.to_scalar::<f32>()? as f64;
            kld_v = kld.to_scalar::<f32>()? as f64;
            g_loss = ((g_loss + (style * w.gamma)?)? + (kld * w.lambda)?)?;
        }
        let huber_v = huber.to_scalar::<f32>()? as f64;
        let total_g = LossBreakdown::total(w, beta, huber_v, nsgan_v, style_v, kld_v);
        if !total_g.is_finite() || !total_d.is_finite() {
            return Err(Error::Divergence {
                epoch,
                step,
                detail: format!("total_g {total_g} (huber {huber_v}, nsgan {nsgan_v}, style {style_v}, kld {kld_v}), total_d {total_d}"),
            });
        }
        let mut grads = g_loss.backward()?;
        clipped += self.clip(&mut grads, &opt.gen_vars)? as usize;
        opt.gen.step(&grads)?;
        log.push(StepEvent { epoch, step, kind: UpdateKind::Generator });
        Ok((LossBreakdown { huber: huber_v, nsgan_g: nsgan_v, style: style_v, kld: kld_v, total_g, total_d }, clipped))
    }
}

/// Checks the step log: every discriminator update is immediately followed
/// by a generator update in the same step, and warm-up epochs contain no
/// discriminator updates.
pub fn alternation_holds(steps: &[StepEvent], config: &TrainConfig) -> bool {
    let mut i = 0;
    while i < steps.len() {
        let e = steps[i];
        match e.kind {
            UpdateKind::Generator => i += 1,
            UpdateKind::Discriminator => {
                if config.is_warmup(e.epoch) {
                    return false;
                }
                match steps.get(i + 1) {
                    Some(n) if n.kind == UpdateKind::Generator && n.step == e.step && n.epoch == e.epoch => i += 2,
                    _ => return false,
                }
            }
        }
    }
    true
}

/// Flat f32 copy of every discriminator parameter, for freeze checks.
pub fn discriminator_snapshot(model: &GestureModel) -> Result<Vec<f32>> {
    let mut v = Vec::new();
    for var in model.params.vars_with_prefix(&DISCRIMINATOR_PREFIXES) {
        v.extend(var.as_tensor().flatten_all()?.to_vec1::<f32>()?);
    }
    Ok(v)
}

/// Mean discriminator scores on real training windows and on the
/// generator's output for the same windows.
pub fn discriminator_scores(model: &GestureModel, corpus: &ProcessedCorpus, max_windows: usize) -> Result<(f64, f64)> {
    let windows: Vec<WindowRef> = corpus.windows(Part::Train).into_iter().take(max_windows).collect();
    let (mut real, mut fake, mut n) = (0.0, 0.0, 0usize);
    for chunk in windows.chunks(32) {
        let samples = chunk.iter().map(|&r| corpus.sample(r)).collect::<Result<Vec<_>>>()?;
        let ids: Vec<usize> = samples.iter().map(|s| s.speaker_id).collect();
        let batch = Batch::new(&samples, ids, &model.vocab)?;
        let ctx = model.context(&batch.word_ids, &batch.audio)?;
        let style = model.style_tensors(&batch.speakers, None)?;
        let gen = model.generate(&ctx, &style.sample, &batch.seeds, None)?;
        real += sum(&model.discriminate(&batch.target)?)?;
        fake += sum(&model.discriminate(&gen)?)?;
        n += chunk.len();
    }
    Ok((real / n as f64, fake / n as f64))
}

fn sum(t: &Tensor) -> Result<f64> {
    Ok(t.sum_all()?.to_scalar::<f32>()? as f64)
}

#[cfg(test)]
mod tests;
