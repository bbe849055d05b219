//! Trimodal gesture generator: text, audio and speaker-style encoders feeding
//! a bidirectional GRU that emits directional-vector poses, plus the
//! sequence discriminator used for adversarial training.

mod encoders;
pub mod nn;
mod synth;

pub use encoders::{
    load_pretrained_embeddings, AudioEncoder, StyleEncoder, TextEncoder, Vocabulary, PAD_ID, TEXT_RECEPTIVE_FIELD,
    UNK_ID,
};
pub use synth::{synthesize_long, ChunkRecord, LongSynthesis, SpeechInput};

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Tensor};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::corpus::{window_samples, PaddedWordSeq, TrainingSample, SAMPLE_RATE, SEED_FRAMES, WINDOW_FRAMES};
use crate::error::{Error, Result};
use crate::pose::{DirVecSequence, Skeleton, Vec3, DEFAULT_FPS, DIRVEC_DIM, NUM_BONES};
use crate::rng::Rng;
use encoders::sum_directions;
use nn::{device, leaky_relu, sigmoid, BiGru, Linear, ParamStore};

const CHECKPOINT_FORMAT: &str = "gesture-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub disc_hidden_size: usize,
    pub disc_num_layers: usize,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub dropout: f64,
    pub n_speakers: usize,
    /// When false the style input is a constant zero vector (ablation).
    pub use_speaker_id: bool,
    pub text_dim: usize,
    pub audio_dim: usize,
    pub style_dim: usize,
    pub style_hidden: usize,
    pub n_frames: usize,
    pub n_seed: usize,
    pub sample_rate: u32,
    pub fps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_size: 256,
            num_layers: 4,
            disc_hidden_size: 256,
            disc_num_layers: 4,
            vocab_size: 2,
            embedding_dim: 300,
            dropout: 0.1,
            n_speakers: 1,
            use_speaker_id: true,
            text_dim: 32,
            audio_dim: 32,
            style_dim: 8,
            style_hidden: 16,
            n_frames: WINDOW_FRAMES,
            n_seed: SEED_FRAMES,
            sample_rate: SAMPLE_RATE,
            fps: DEFAULT_FPS,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("hidden_size", self.hidden_size),
            ("num_layers", self.num_layers),
            ("disc_hidden_size", self.disc_hidden_size),
            ("disc_num_layers", self.disc_num_layers),
            ("vocab_size", self.vocab_size),
            ("embedding_dim", self.embedding_dim),
            ("n_speakers", self.n_speakers),
            ("text_dim", self.text_dim),
            ("audio_dim", self.audio_dim),
            ("style_dim", self.style_dim),
            ("style_hidden", self.style_hidden),
            ("n_frames", self.n_frames),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("model config: {name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!("model config: dropout {} outside [0, 1)", self.dropout)));
        }
        if self.n_seed >= self.n_frames || self.hidden_size < 2 {
            return Err(Error::InvalidInput("model config: inconsistent frame counts or hidden size".into()));
        }
        Ok(())
    }

    pub fn generator_input_dim(&self) -> usize {
        self.text_dim + self.audio_dim + self.style_dim + DIRVEC_DIM + 1
    }

    pub fn audio_samples(&self) -> usize {
        window_samples(self.sample_rate, self.fps, self.n_frames)
    }
}

/// Style embedding for one synthesis. `sample = mean + exp(log_variance / 2) · epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleVector {
    pub mean: Vec<f32>,
    pub log_variance: Vec<f32>,
    pub epsilon: Vec<f32>,
    pub sample: Vec<f32>,
}

impl StyleVector {
    /// A fixed point of the style space, bypassing the encoder.
    pub fn explicit(v: Vec<f32>) -> Self {
        let n = v.len();
        Self { mean: v.clone(), log_variance: vec![0.0; n], epsilon: vec![0.0; n], sample: v }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StyleSource {
    Speaker(usize),
    Vector(Vec<f32>),
}

/// Batched generator inputs.
pub struct Batch {
    pub word_ids: Tensor,
    pub audio: Tensor,
    pub speakers: Vec<usize>,
    /// `(b, t, 28)`: seed directional vectors then the seed flag.
    pub seeds: Tensor,
    /// `(b, t, 27)` ground truth, seed frames included.
    pub target: Tensor,
}

pub fn seed_rows(seeds: &[[Vec3; NUM_BONES]], t: usize) -> Vec<f32> {
    let mut v = vec![0f32; t * (DIRVEC_DIM + 1)];
    for (i, f) in seeds.iter().enumerate().take(t) {
        let row = &mut v[i * (DIRVEC_DIM + 1)..(i + 1) * (DIRVEC_DIM + 1)];
        for b in 0..NUM_BONES {
            for a in 0..3 {
                row[b * 3 + a] = f[b][a] as f32;
            }
        }
        row[DIRVEC_DIM] = 1.0;
    }
    v
}

impl Batch {
    /// `speakers[i]` overrides the speaker of `samples[i]` (unseen speakers
    /// are remapped by the caller).
    pub fn new(samples: &[TrainingSample], speakers: Vec<usize>, vocab: &Vocabulary) -> Result<Self> {
        let b = samples.len();
        if b == 0 || speakers.len() != b {
            return Err(Error::Shape(format!("batch of {b} samples with {} speakers", speakers.len())));
        }
        let t = samples[0].seed_poses.len() + samples[0].target.len();
        let n = samples[0].audio_window.len();
        let mut ids = Vec::with_capacity(b * t);
        let mut audio = Vec::with_capacity(b * n);
        let mut seeds = Vec::with_capacity(b * t * (DIRVEC_DIM + 1));
        let mut target = Vec::with_capacity(b * t * DIRVEC_DIM);
        for s in samples {
            if s.padded_words.len() != t || s.audio_window.len() != n {
                return Err(Error::Shape("samples in a batch differ in length".into()));
            }
            ids.extend(vocab.ids(&s.padded_words));
            audio.extend_from_slice(&s.audio_window);
            seeds.extend(seed_rows(&s.seed_poses.frames, t));
            target.extend(s.window().to_flat_f32());
        }
        let dev = device();
        Ok(Self {
            word_ids: Tensor::from_vec(ids, (b, t), &dev)?,
            audio: Tensor::from_vec(audio, (b, n), &dev)?,
            speakers,
            seeds: Tensor::from_vec(seeds, (b, t, DIRVEC_DIM + 1), &dev)?,
            target: Tensor::from_vec(target, (b, t, DIRVEC_DIM), &dev)?,
        })
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }
}

/// Style tensors for a batch, each `(b, style_dim)`.
pub struct StyleTensors {
    pub mean: Tensor,
    pub log_variance: Tensor,
    pub sample: Tensor,
}

pub struct GestureModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    /// Mean training pose used as the first-chunk seed.
    pub mean_pose: [Vec3; NUM_BONES],
    pub skeleton: Skeleton,
    pub params: ParamStore,
    text: TextEncoder,
    audio: AudioEncoder,
    style: StyleEncoder,
    gen_gru: BiGru,
    gen_fc: Linear,
    gen_out: Linear,
    disc_gru: BiGru,
    disc_step: Linear,
    disc_agg: Linear,
}

/// Parameter-name prefixes trained by the generator objective.
pub const GENERATOR_PREFIXES: [&str; 4] = ["text.", "audio.", "style.", "gen."];
pub const DISCRIMINATOR_PREFIXES: [&str; 1] = ["disc."];

impl GestureModel {
    pub fn new(
        mut config: ModelConfig,
        vocab: Vocabulary,
        mean_pose: [Vec3; NUM_BONES],
        skeleton: Skeleton,
        seed: u64,
        pretrained: Option<&HashMap<String, Vec<f32>>>,
    ) -> Result<Self> {
        config.vocab_size = vocab.len();
        config.validate()?;
        let mut ps = ParamStore::new(seed);
        let c = &config;
        let text = TextEncoder::new(&mut ps, &vocab, c.embedding_dim, c.text_dim, pretrained)?;
        let audio = AudioEncoder::new(&mut ps, c.audio_dim)?;
        let style = StyleEncoder::new(&mut ps, c.n_speakers, c.style_hidden, c.style_dim)?;
        let gen_gru = BiGru::new(&mut ps, "gen.gru", c.generator_input_dim(), c.hidden_size, c.num_layers)?;
        let gen_fc = Linear::new(&mut ps, "gen.fc", c.hidden_size, c.hidden_size / 2)?;
        let gen_out = Linear::new(&mut ps, "gen.out", c.hidden_size / 2, DIRVEC_DIM)?;
        let disc_gru = BiGru::new(&mut ps, "disc.gru", DIRVEC_DIM, c.disc_hidden_size, c.disc_num_layers)?;
        let disc_step = Linear::new(&mut ps, "disc.step", c.disc_hidden_size, 1)?;
        let disc_agg = Linear::new(&mut ps, "disc.aggregate", c.n_frames, 1)?;
        Ok(Self {
            config,
            vocab,
            mean_pose,
            skeleton,
            params: ps,
            text,
            audio,
            style,
            gen_gru,
            gen_fc,
            gen_out,
            disc_gru,
            disc_step,
            disc_agg,
        })
    }

    /// Text and audio features concatenated, `(b, t, text_dim + audio_dim)`.
    pub fn context(&self, word_ids: &Tensor, audio: &Tensor) -> Result<Tensor> {
        let t = word_ids.dim(1)?;
        let text = self.text.forward(word_ids)?;
        let audio = self.audio.forward(audio, t)?;
        Ok(Tensor::cat(&[text, audio], 2)?)
    }

    /// Style mean/log-variance/sample for a batch of speakers. Sampling draws
    /// ε from `rng`; without it the sample is the mean. The ablated model
    /// returns zeros.
    pub fn style_tensors(&self, speakers: &[usize], rng: Option<&mut Rng>) -> Result<StyleTensors> {
        let b = speakers.len();
        let d = self.config.style_dim;
        if !self.config.use_speaker_id {
            let z = Tensor::zeros((b, d), DType::F32, &device())?;
            return Ok(StyleTensors { mean: z.clone(), log_variance: z.clone(), sample: z });
        }
        let (mean, log_variance) = self.style.forward(speakers)?;
        let sample = match rng {
            Some(rng) => {
                let eps: Vec<f32> = (0..b * d).map(|_| StandardNormal.sample(rng)).collect();
                let eps = Tensor::from_vec(eps, (b, d), &device())?;
                (&mean + ((&log_variance * 0.5)?.exp()? * eps)?)?
            }
            None => mean.clone(),
        };
        Ok(StyleTensors { mean, log_variance, sample })
    }

    /// Raw (unnormalized) poses `(b, t, 27)`.
    pub fn generate(
        &self,
        context: &Tensor,
        style: &Tensor,
        seeds: &Tensor,
        dropout: Option<&mut Rng>,
    ) -> Result<Tensor> {
        let (b, t, _) = context.dims3()?;
        let style = style.reshape((b, 1, self.config.style_dim))?.broadcast_as((b, t, self.config.style_dim))?;
        let x = Tensor::cat(&[context, &style, seeds], 2)?;
        let dropout = dropout.map(|r| (r, self.config.dropout));
        let h = self.gen_gru.forward(&x, dropout)?;
        let h = sum_directions(&h, self.config.hidden_size)?;
        let h = leaky_relu(&self.gen_fc.forward(&h)?)?;
        self.gen_out.forward(&h)
    }

    /// Probability that each `(b, t, 27)` sequence is real, shape `(b,)`.
    pub fn discriminate(&self, poses: &Tensor) -> Result<Tensor> {
        let (b, t, _) = poses.dims3()?;
        if t != self.config.n_frames {
            return Err(Error::Shape(format!("discriminator expects {} frames, got {t}", self.config.n_frames)));
        }
        let h = self.disc_gru.forward(poses, None)?;
        let h = sum_directions(&h, self.config.disc_hidden_size)?;
        let steps = self.disc_step.forward(&h)?.reshape((b, t))?;
        sigmoid(&self.disc_agg.forward(&steps)?.reshape(b)?)
    }

    // ---- single-window conveniences -------------------------------------

    pub fn encode_text(&self, words: &PaddedWordSeq) -> Result<Vec<Vec<f32>>> {
        let t = words.len();
        if t != self.config.n_frames {
            return Err(Error::Shape(format!("expected {} word slots, got {t}", self.config.n_frames)));
        }
        let ids = Tensor::from_vec(self.vocab.ids(words), (1, t), &device())?;
        Ok(self.text.forward(&ids)?.get(0)?.to_vec2::<f32>()?)
    }

    pub fn encode_audio(&self, samples: &[f32]) -> Result<Vec<Vec<f32>>> {
        let n = self.config.audio_samples();
        if samples.len() != n {
            return Err(Error::Shape(format!("expected {n} audio samples, got {}", samples.len())));
        }
        let x = Tensor::from_slice(samples, (1, n), &device())?;
        Ok(self.audio.forward(&x, self.config.n_frames)?.get(0)?.to_vec2::<f32>()?)
    }

    pub fn encode_style(&self, source: &StyleSource, rng: Option<&mut Rng>) -> Result<StyleVector> {
        let d = self.config.style_dim;
        match source {
            StyleSource::Vector(v) => {
                if v.len() != d {
                    return Err(Error::Shape(format!("style vector needs {d} values, got {}", v.len())));
                }
                Ok(StyleVector::explicit(v.clone()))
            }
            StyleSource::Speaker(id) => {
                if *id >= self.config.n_speakers {
                    return Err(Error::SpeakerOutOfRange { id: *id, count: self.config.n_speakers });
                }
                let s = self.style_tensors(&[*id], None)?;
                let mean = s.mean.get(0)?.to_vec1::<f32>()?;
                let log_variance = s.log_variance.get(0)?.to_vec1::<f32>()?;
                let epsilon: Vec<f32> = match rng {
                    Some(rng) => (0..d).map(|_| StandardNormal.sample(rng)).collect(),
                    None => vec![0.0; d],
                };
                let sample = mean
                    .iter()
                    .zip(&log_variance)
                    .zip(&epsilon)
                    .map(|((m, lv), e)| m + (lv * 0.5).exp() * e)
                    .collect();
                Ok(StyleVector { mean, log_variance, epsilon, sample })
            }
        }
    }

    /// One window of raw generator output from seeds (at most `n_seed` frames).
    pub fn generate_window(
        &self,
        words: &PaddedWordSeq,
        audio: &[f32],
        style: &StyleVector,
        seeds: &[[Vec3; NUM_BONES]],
    ) -> Result<DirVecSequence> {
        let t = self.config.n_frames;
        if seeds.len() > self.config.n_seed {
            return Err(Error::Shape(format!("at most {} seed frames, got {}", self.config.n_seed, seeds.len())));
        }
        if words.len() != t {
            return Err(Error::Shape(format!("expected {t} word slots, got {}", words.len())));
        }
        let n = self.config.audio_samples();
        if audio.len() != n {
            return Err(Error::Shape(format!("expected {n} audio samples, got {}", audio.len())));
        }
        let dev = device();
        let ids = Tensor::from_vec(self.vocab.ids(words), (1, t), &dev)?;
        let audio = Tensor::from_slice(audio, (1, n), &dev)?;
        let ctx = self.context(&ids, &audio)?;
        let style = Tensor::from_slice(&style.sample, (1, self.config.style_dim), &dev)?;
        let style = if self.config.use_speaker_id { style } else { style.zeros_like()? };
        let seeds = Tensor::from_vec(seed_rows(seeds, t), (1, t, DIRVEC_DIM + 1), &dev)?;
        let out = self.generate(&ctx, &style, &seeds, None)?;
        let flat = out.flatten_all()?.to_vec1::<f32>()?;
        DirVecSequence::from_flat_f32(&flat, self.config.fps)
    }

    pub fn discriminate_seq(&self, seq: &DirVecSequence) -> Result<f64> {
        let t = seq.len();
        let x = Tensor::from_vec(seq.to_flat_f32(), (1, t, DIRVEC_DIM), &device())?;
        Ok(self.discriminate(&x)?.to_vec1::<f32>()?[0] as f64)
    }

    // ---- checkpoints -----------------------------------------------------

    pub fn to_archive(&self, extra: serde_json::Value) -> Result<Archive> {
        let mut a = Archive::new(serde_json::json!({
            "format": CHECKPOINT_FORMAT,
            "config": self.config,
            "vocab": self.vocab,
            "mean_pose": self.mean_pose,
            "skeleton": self.skeleton,
            "extra": extra,
        }));
        self.params.write_to(&mut a)?;
        Ok(a)
    }

    pub fn from_archive(a: &Archive) -> Result<(Self, serde_json::Value)> {
        let h = &a.header;
        if h.get("format").and_then(|f| f.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint("not a gesture model checkpoint".into()));
        }
        let config: ModelConfig = serde_json::from_value(h["config"].clone())?;
        let vocab: Vocabulary = serde_json::from_value(h["vocab"].clone())?;
        let mean_pose: [Vec3; NUM_BONES] = serde_json::from_value(h["mean_pose"].clone())?;
        let skeleton: Skeleton = serde_json::from_value(h["skeleton"].clone())?;
        let model = Self::new(config, vocab, mean_pose, skeleton, 0, None)?;
        model.params.read_from(a)?;
        Ok((model, h.get("extra").cloned().unwrap_or(serde_json::Value::Null)))
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        self.to_archive(extra)?.save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        Self::from_archive(&Archive::load(path)?)
    }
}
