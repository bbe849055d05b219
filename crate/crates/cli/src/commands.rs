use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use gesture_core::archive::write_atomic;
use gesture_core::corpus::{
    load_corpus_dir, make_synthetic_corpus_with, read_wav_mono, write_corpus_dir, Part, ProcessedCorpus,
    SyntheticConfig, TimedWord,
};
use gesture_core::evaluation::{self, parse_substitutions};
use gesture_core::fgd::{ExtractorConfig, FeatureExtractor};
use gesture_core::model::{
    load_pretrained_embeddings, synthesize_long, GestureModel, ModelConfig, SpeechInput, StyleSource,
};
use gesture_core::noisebench::{default_grid, run_validation, NoiseGrid};
use gesture_core::pose::{export_animation, AnimationFormat, ValidityThresholds};
use gesture_core::rng::{rng_from, sub_seed};
use gesture_core::training::{
    build_model, epoch_checkpoint_name, LossWeights, TrainConfig, Trainer, BEST_CHECKPOINT, HISTORY_FILE,
};

use crate::run::{sha256_file, OutLock, Run};

/// Declares a settings struct with defaults plus the matching flag set, in
/// which every setting is an optional `--flag`.
macro_rules! settings {
    ($name:ident / $flags:ident { $( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr ),* $(,)? }) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for $name {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        #[derive(Debug, Clone, clap::Args, Serialize)]
        pub struct $flags {
            /// Settings file: `key = value` lines or JSON (a run manifest works too)
            #[arg(long)]
            #[serde(skip)]
            pub config: Option<PathBuf>,
            $(
                $(#[doc = $doc])*
                #[arg(long)]
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}

fn required<'a>(p: &'a Path, flag: &str) -> Result<&'a Path> {
    if p.as_os_str().is_empty() {
        bail!("missing --{flag}");
    }
    Ok(p)
}

fn parse_part(s: &str) -> Result<Part> {
    match s {
        "train" => Ok(Part::Train),
        "val" => Ok(Part::Val),
        "test" => Ok(Part::Test),
        other => bail!("unknown split `{other}` (train, val or test)"),
    }
}

fn cap(n: usize) -> Option<usize> {
    (n > 0).then_some(n)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())?;
    Ok(())
}

fn load_model(path: &Path) -> Result<GestureModel> {
    if !path.is_file() {
        bail!("checkpoint {} does not exist", path.display());
    }
    Ok(GestureModel::load(path)?.0)
}

fn load_extractor(path: &Path) -> Result<(FeatureExtractor, String)> {
    if !path.is_file() {
        bail!("extractor {} does not exist", path.display());
    }
    Ok((FeatureExtractor::load(path)?, sha256_file(path)?))
}

fn load_corpus(path: &Path) -> Result<ProcessedCorpus> {
    if !path.is_file() {
        bail!("processed corpus {} does not exist (run `gesture preprocess` first)", path.display());
    }
    Ok(ProcessedCorpus::load(path)?)
}

pub const CORPUS_FILE: &str = "corpus.gpc";
pub const EXTRACTOR_FILE: &str = "extractor.gfx";

// ---- make-corpus -----------------------------------------------------------

settings!(MakeCorpusSettings / MakeCorpusFlags {
    /// Output directory for the clip folders
    out: PathBuf = PathBuf::new(),
    clips: usize = 8,
    /// Number of speakers; 0 gives one speaker per clip
    speakers: usize = 0,
    seconds: f64 = 12.0,
    seed: u64 = 0,
});

pub fn make_corpus(flags: MakeCorpusFlags) -> Result<()> {
    let s: MakeCorpusSettings = crate::config::resolve(flags.config.as_deref(), &flags)?;
    let out = required(&s.out, "out")?;
    let _lock = OutLock::acquire(out)?;
    let mut run = Run::start("make-corpus", &s, Some(s.seed))?;
    let cfg = SyntheticConfig {
        clip_seconds: s.seconds,
        n_speakers: (s.speakers > 0).then_some(s.speakers),
        ..SyntheticConfig::new(s.clips)
    };
    let clips = make_synthetic_corpus_with(&cfg, s.seed);
    write_corpus_dir(&clips, out)?;
    for c in &clips {
        run.output(&out.join(&c.clip_id));
    }
    run.finish(out)?;
    println!("wrote {} clips to {}", clips.len(), out.display());
    Ok(())
}

// ---- preprocess ------------------------------------------------------------

settings!(PreprocessSettings / PreprocessFlags {
    /// Corpus directory: one folder per clip with words.json, audio.wav and poses.csv
    corpus: PathBuf = PathBuf::new(),
    out: PathBuf = PathBuf::new(),
    seed: u64 = 0,
    /// Train/validation/test fractions, comma separated
    split: String = "0.8,0.1,0.1".into(),
    min_motion_variance: f64 = ValidityThresholds::default().min_motion_variance,
    /// Minimum spine-neck elevation in degrees
    min_spine_neck_angle_deg: f64 = ValidityThresholds::default().min_spine_neck_angle.to_degrees(),
});

fn parse_ratios(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad split `{s}`"))?;
    v.try_into().map_err(|_| anyhow!("split needs three fractions, got `{s}`"))
}

pub fn preprocess(flags: PreprocessFlags) -> Result<()> {
    let s: PreprocessSettings = crate::config::resolve(flags.config.as_deref(), &flags)?;
    let corpus_dir = required(&s.corpus, "corpus")?;
    let out = required(&s.out, "out")?;
    if !corpus_dir.is_dir() {
        bail!("corpus directory {} does not exist", corpus_dir.display());
    }
    let _lock = OutLock::acquire(out)?;
    let mut run = Run::start("preprocess", &s, Some(s.seed))?;
    run.input(corpus_dir);
    let thresholds = ValidityThresholds {
        min_motion_variance: s.min_motion_variance,
        min_spine_neck_angle: s.min_spine_neck_angle_deg.to_radians(),
    };
    let (clips, failures) = load_corpus_dir(corpus_dir)?;
    let corpus = ProcessedCorpus::from_clips(&clips, failures, parse_ratios(&s.split)?, s.seed, &thresholds)?;
    let corpus_path = out.join(CORPUS_FILE);
    corpus.save(&corpus_path)?;
    let report_path = out.join("ingestion_report.json");
    write_json(&report_path, &corpus.report)?;
    run.output(&corpus_path);
    run.output(&report_path);
    run.finish(out)?;
    let r = &corpus.report;
    println!(
        "{} clips ({} failed), {} windows kept of {} (train {}, val {}, test {}) -> {}",
        r.clips,
        r.failed_clips.len(),
        r.windows_kept,
        r.windows_total,
        r.train_windows,
        r.val_windows,
        r.test_windows,
        corpus_path.display()
    );
    Ok(())
}

// ---- train -----------------------------------------------------------------

settings!(TrainSettings / TrainFlags {
    /// Processed corpus file written by `preprocess`
    corpus: PathBuf = PathBuf::new(),
    out: PathBuf = PathBuf::new(),
    /// Feature extractor for per-epoch validation FGD
    extractor: Option<PathBuf> = None,
    /// Word vectors, one `word v1 v2 ...` line each
    pretrained_embeddings: Option<PathBuf> = None,
    epochs: usize = TrainConfig::default().epochs,
    warmup_epochs: usize = TrainConfig::default().warmup_epochs,
    batch_size: usize = TrainConfig::default().batch_size,
    learning_rate: f64 = TrainConfig::default().learning_rate,
    adam_beta1: f64 = TrainConfig::default().adam_beta1,
    adam_beta2: f64 = TrainConfig::default().adam_beta2,
    huber_delta: f64 = TrainConfig::default().huber_delta,
    grad_clip: f64 = TrainConfig::default().grad_clip,
    seed: u64 = 0,
    hidden_size: usize = ModelConfig::default().hidden_size,
    num_layers: usize = ModelConfig::default().num_layers,
    disc_hidden_size: usize = ModelConfig::default().disc_hidden_size,
    disc_num_layers: usize = ModelConfig::default().disc_num_layers,
    embedding_dim: usize = ModelConfig::default().embedding_dim,
    dropout: f64 = ModelConfig::default().dropout,
    /// Condition on speaker identity (false trains the no-style ablation)
    use_speaker_id: bool = true,
    alpha: f64 = LossWeights::default().alpha,
    beta: f64 = LossWeights::default().beta,
    gamma: f64 = LossWeights::default().gamma,
    lambda: f64 = LossWeights::default().lambda,
    tau: f64 = LossWeights::default().tau,
    /// Validation windows per epoch; 0 uses all
    val_max_windows: usize = 0,
});

impl TrainSettings {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            warmup_epochs: self.warmup_epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            huber_delta: self.huber_delta,
            grad_clip: self.grad_clip,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden_size: self.hidden_size,
            num_layers: self.num_layers,
            disc_hidden_size: self.disc_hidden_size,
            disc_num_layers: self.disc_num_layers,
            embedding_dim: self.embedding_dim,
            dropout: self.dropout,
            use_speaker_id: self.use_speaker_id,
            ..ModelConfig::default()
        }
    }

    pub fn weights(&self) -> LossWeights {
        let w = LossWeights { alpha: self.alpha, beta: self.beta, gamma: self.gamma, lambda: self.lambda, tau: self.tau };
        if self.use_speaker_id {
            w
        } else {
            w.without_style()
        }
    }
}

pub fn train(flags: TrainFlags) -> Result<()> {
    let s: TrainSettings = crate::config::resolve(flags.config.as_deref(), &flags)?;
    let corpus_path = required(&s.corpus, "corpus")?;
    let out = required(&s.out, "out")?;
    let corpus = load_corpus(corpus_path)?;
    let extractor = s.extractor.as_deref().map(load_extractor).transpose()?;
    let pretrained = s
        .pretrained_embeddings
        .as_deref()
        .map(|p| load_pretrained_embeddings(p, s.embedding_dim))
        .transpose()?;
    let _lock = OutLock::acquire(out)?;
    let mut run = Run::start("train", &s, Some(s.seed))?;
    run.input(corpus_path);
    if let Some(p) = &s.extractor {
        run.input(p);
    }
    let model = build_model(&corpus, s.model_config(), s.seed, pretrained.as_ref())?;
    let mut trainer = Trainer::new(s.train_config(), s.weights()).with_out_dir(out);
    if let Some((ex, _)) = &extractor {
        let (corpus, seed, max) = (&corpus, s.seed, cap(s.val_max_windows));
        trainer = trainer.with_validator(move |m, _| evaluation::validation_metrics(m, ex, corpus, seed, max));
    }
    let outcome = trainer.train(&model, &corpus)?;
    for e in 1..=s.epochs {
        run.output(&out.join(epoch_checkpoint_name(e)));
    }
    run.output(&out.join(BEST_CHECKPOINT));
    run.output(&out.join(HISTORY_FILE));
    run.finish(out)?;
    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "trained {} epochs; final huber {:.5}, best epoch {:?} -> {}",
        outcome.history.len(),
        last.huber,
        outcome.best_epoch,
        out.join(BEST_CHECKPOINT).display()
    );
    Ok(())
}

// ---- train-extractor -------------------------------------------------------

settings!(ExtractorSettings / ExtractorFlags {
    corpus: PathBuf = PathBuf::new(),
    out: PathBuf = PathBuf::new(),
    latent_dim: usize = ExtractorConfig::default().latent_dim,
    channels: usize = ExtractorConfig::default().channels,
    epochs: usize = ExtractorConfig::default().epochs,
    batch_size: usize = ExtractorConfig::default().batch_size,
    learning_rate: f64 = ExtractorConfig::default().learning_rate,
    /// Refuse to train on fewer windows than this
    min_sequences: usize = ExtractorConfig::default().min_sequences,
    seed: u64 = 0,
});

pub fn train_extractor(flags: ExtractorFlags) -> Result<()> {
    let s: ExtractorSettings = crate::config::resolve(flags.config.as_deref(), &flags)?;
    let corpus_path = required(&s.corpus, "corpus")?;
    let out = required(&s.out, "out")?;
    let corpus = load_corpus(corpus_path)?;
    let _lock = OutLock::acquire(out)?;
    let mut run = Run::start("train-extractor", &s, Some(s.seed))?;
    run.input(corpus_path);
    let windows: Vec<_> = corpus.samples(Part::Train)?.iter().map(|w| w.window()).collect();
    let cfg = ExtractorConfig {
        latent_dim: s.latent_dim,
        channels: s.channels,
        epochs: s.epochs,
        batch_size: s.batch_size,
        learning_rate: s.learning_rate,
        min_sequences: s.min_sequences,
        seed: s.seed,
    };
    let (ex, report) = FeatureExtractor::train(cfg, &windows)?;
    let path = out.join(EXTRACTOR_FILE);
    ex.save(&path)?;
    let report_path = out.join("extractor_report.json");
    write_json(&report_path, &report)?;
    run.output(&path);
    run.output(&report_path);
    run.finish(out)?;
    println!(
        "extractor trained on {} windows; reconstruction MSE {:.5} -> {:.5} ({})",
        report.n_sequences,
        report.initial_mse,
        report.final_mse,
        path.display()
    );
    Ok(())
}

// ---- synthesize ------------------------------------------------------------

settings!(SynthesizeSettings / SynthesizeFlags {
    checkpoint: PathBuf = PathBuf::new(),
    /// Transcript JSON: a list of {text, start, end} or an object with `words`
    words: PathBuf = PathBuf::new(),
    /// Speech audio (WAV)
    audio: PathBuf = PathBuf::new(),
    out: PathBuf = PathBuf::new(),
    speaker_id: Option<usize> = None,
    /// Explicit style vector, comma separated
    style_vector: Option<String> = None,
    /// csv, json or bvh
    format: String = "bvh".into(),
    /// Sample the style from the speaker's distribution instead of its mean
    sample_style: bool = false,
    seed: u64 = 0,
});

/// Seconds of disagreement between transcript and audio length that trigger
/// a warning.
pub const DURATION_TOLERANCE: f64 = 2.0;

#[derive(Deserialize)]
#[serde(untagged)]
enum WordsInput {
    List(Vec<TimedWord>),
    Object { words: Vec<TimedWord> },
}

fn read_words(path: &Path) -> Result<Vec<TimedWord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let words = match serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))? {
        WordsInput::List(w) | WordsInput::Object { words: w } => w,
    };
    for w in &words {
        w.validate()?;
    }
    Ok(words)
}

fn read_speech(words: &Path, audio: &Path) -> Result<SpeechInput> {
    let words = read_words(required(words, "words")?)?;
    let audio = read_wav_mono(required(audio, "audio")?)?;
    let spoken = words.iter().map(|w| w.end).fold(0.0, f64::max);
    let gap = (audio.duration() - spoken).abs();
    if !words.is_empty() && gap > DURATION_TOLERANCE {
        log::warn!(
            "transcript ends at {spoken:.2} s but the audio lasts {:.2} s; check that they belong together",
            audio.duration()
        );
    }
    Ok(SpeechInput { words, audio })
}

fn parse_vector(s: &str) -> Result<Vec<f32>> {
    s.split(',')
        .map(|p| p.trim().parse::<f32>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad style vector `{s}`"))
}

pub fn synthesize(flags: SynthesizeFlags) -> Result<()> {
    let s: SynthesizeSettings = crate::config::resolve(flags.config.as_deref(), &flags)?;
    let source = match (s.speaker_id, &s.style_vector) {
        (Some(id), None) => StyleSource::Speaker(id),
        (None, Some(v)) => StyleSource::Vector(parse_vector(v)?),
        _ => bail!("give exactly one of --speaker-id or --style-vector"),
    };
    let format: AnimationFormat = s.format.parse()?;
    let out = required(&s.out, "out")?;
    let model = load_model(required(&s.checkpoint, "checkpoint")?)?;
    let input = read_speech(&s.words, &s.audio)?;
    let _lock = OutLock::acquire(out)?;
    let mut run = Run::start("synthesize", &s, Some(s.seed))?;
    for p in [&s.checkpoint, &s.words, &s.audio] {
        run.input(p);
    }
    let mut rng = rng_from(sub_seed(s.seed, "synthesize-style"));
    let style = model.encode_style(&source, s.sample_style.then_some(&mut rng))?;
    let result = synthesize_long(&model, &input, &style)?;
    let ext = match format {
        AnimationFormat::Csv => "csv",
        AnimationFormat::Json => "json",
        AnimationFormat::Bvh => "bvh",
    };
    let path = out.join(format!("animation.{ext}"));
    export_animation(&result.poses, &model.skeleton, &path, format)?;
    run.output(&path);
    run.finish(out)?;
    println!("{} frames in {} chunks -> {}", result.poses.len(), result.chunks.len(), path.display());
    Ok(())
}

// ---- evaluate --------------------------------------------------------------

settings!(EvaluateSettings / EvaluateFlags {
    checkpoint: PathBuf = PathBuf::new(),
    extractor: PathBuf = PathBuf::new(),
    corpus: PathBuf = PathBuf::new(),
    out: PathBuf = PathBuf::new(),
    /// train, val or test
    part: String = "test".into(),
    /// Windows to evaluate, evenly spaced; 0 uses all
    max_windows: usize = 0,
    seed: u64 = 0,
});

pub fn evaluate(flags: EvaluateFlags) -> Result<()> {
    let s: EvaluateSettings = crate::config::resolve(flags.config.as_deref(), &flags)?;
    let out = required(&s.out, "out")?;
    let part = parse_part(&s.part)?;
    let model = load_model(required(&s.checkpoint, "checkpoint")?)?;
    let (ex, ex_id) = load_extractor(required(&s.extractor, "extractor")?)?;
    let corpus = load_corpus(required(&s.corpus, "corpus")?)?;
    let _lock = OutLock::acquire(out)?;
    let mut run = Run::start("evaluate", &s, Some(s.seed))?;
    for p in [&s.checkpoint, &s.extractor, &s.corpus] {
        run.input(p);
    }
    let report = evaluation::evaluate(&model, &ex, &ex_id, &corpus, part, s.seed, cap(s.max_windows))?;
    let path = out.join("metrics.json");
    write_json(&path, &report)?;
    run.output(&path);
    run.finish(out)?;
    println!(
        "FGD {:.4}  MAEJ {:.5}  accel MAE {:.5} over {} windows -> {}",
        report.fgd,
        report.maej,
        report.mae_accel,
        report.n_real,
        path.display()
    );
    Ok(())
}

// ---- noise-bench -----------------------------------------------------------

settings!(NoiseBenchSettings / NoiseBenchFlags {
    extractor: PathBuf = PathBuf::new(),
    corpus: PathBuf = PathBuf::new(),
    out: PathBuf = PathBuf::new(),
    /// JSON object mapping noise kinds to lists of ζ values
    grid: Option<PathBuf> = None,
    part: String = "test".into(),
    max_windows: usize = 0,
    seed: u64 = 0,
});

pub fn noise_bench(flags: NoiseBenchFlags) -> Result<()> {
    let s: NoiseBenchSettings = crate::config::resolve(flags.config.as_deref(), &flags)?;
    let out = required(&s.out, "out")?;
    let part = parse_part(&s.part)?;
    let (ex, ex_id) = load_extractor(required(&s.extractor, "extractor")?)?;
    let corpus = load_corpus(required(&s.corpus, "corpus")?)?;
    let grid: NoiseGrid = match &s.grid {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing grid {}", p.display()))?
        }
        None => default_grid(),
    };
    let _lock = OutLock::acquire(out)?;
    let mut run = Run::start("noise-bench", &s, Some(s.seed))?;
    for p in [Some(&s.extractor), Some(&s.corpus), s.grid.as_ref()].into_iter().flatten() {
        run.input(p);
    }
    let refs = evaluation::subsample(corpus.windows(part), cap(s.max_windows));
    let windows = refs
        .iter()
        .map(|&w| corpus.to_coords(&corpus.sample(w)?.window()))
        .collect::<gesture_core::Result<Vec<_>>>()?;
    let report = run_validation(&windows, &grid, &ex, &ex_id, s.seed)?;
    let json_path = out.join("noise_report.json");
    let csv_path = out.join("noise_report.csv");
    write_json(&json_path, &report)?;
    write_atomic(&csv_path, &report.to_csv()?)?;
    run.output(&json_path);
    run.output(&csv_path);
    run.finish(out)?;
    for r in &report.rows {
        println!("{:<15} ζ={:<8} FGD {:>10.4}  MAEJ {:.5}", r.kind.name(), r.zeta, r.fgd, r.maej);
    }
    Ok(())
}

// ---- style-map -------------------------------------------------------------

settings!(StyleMapSettings / StyleMapFlags {
    checkpoint: PathBuf = PathBuf::new(),
    words: PathBuf = PathBuf::new(),
    audio: PathBuf = PathBuf::new(),
    out: PathBuf = PathBuf::new(),
});

pub fn style_map(flags: StyleMapFlags) -> Result<()> {
    let s: StyleMapSettings = crate::config::resolve(flags.config.as_deref(), &flags)?;
    let out = required(&s.out, "out")?;
    let model = load_model(required(&s.checkpoint, "checkpoint")?)?;
    let input = read_speech(&s.words, &s.audio)?;
    let _lock = OutLock::acquire(out)?;
    let mut run = Run::start("style-map", &s, None)?;
    for p in [&s.checkpoint, &s.words, &s.audio] {
        run.input(p);
    }
    let report = evaluation::style_map(&model, &input)?;
    let path = out.join("style_map.json");
    write_json(&path, &report)?;
    run.output(&path);
    run.finish(out)?;
    for r in &report.rows {
        println!(
            "speaker {:>3}: motion variance {:.5}, right/left {:.5}/{:.5} ({:?})",
            r.speaker_id, r.motion_variance, r.right_arm_variance, r.left_arm_variance, r.handedness
        );
    }
    Ok(())
}

// ---- text-alter ------------------------------------------------------------

settings!(TextAlterSettings / TextAlterFlags {
    checkpoint: PathBuf = PathBuf::new(),
    extractor: PathBuf = PathBuf::new(),
    corpus: PathBuf = PathBuf::new(),
    /// `word replacement` per line
    substitutions: PathBuf = PathBuf::new(),
    out: PathBuf = PathBuf::new(),
    part: String = "test".into(),
    max_windows: usize = 0,
    seed: u64 = 0,
});

pub fn text_alter(flags: TextAlterFlags) -> Result<()> {
    let s: TextAlterSettings = crate::config::resolve(flags.config.as_deref(), &flags)?;
    let out = required(&s.out, "out")?;
    let part = parse_part(&s.part)?;
    let model = load_model(required(&s.checkpoint, "checkpoint")?)?;
    let (ex, ex_id) = load_extractor(required(&s.extractor, "extractor")?)?;
    let corpus = load_corpus(required(&s.corpus, "corpus")?)?;
    let subs_path = required(&s.substitutions, "substitutions")?;
    let text = fs::read_to_string(subs_path).with_context(|| format!("reading {}", subs_path.display()))?;
    let subs = parse_substitutions(&text)?;
    let _lock = OutLock::acquire(out)?;
    let mut run = Run::start("text-alter", &s, Some(s.seed))?;
    for p in [&s.checkpoint, &s.extractor, &s.corpus, &s.substitutions] {
        run.input(p);
    }
    let report = evaluation::text_alter(&model, &ex, &ex_id, &corpus, part, &subs, s.seed, cap(s.max_windows))?;
    let path = out.join("text_alter.json");
    write_json(&path, &report)?;
    run.output(&path);
    run.finish(out)?;
    match report.fgd {
        Some(f) => println!("{} altered windows of {}; FGD(before, after) {f:.4}", report.n_pairs, report.n_windows),
        None => println!("{} altered windows of {}; too few for FGD", report.n_pairs, report.n_windows),
    }
    Ok(())
}
