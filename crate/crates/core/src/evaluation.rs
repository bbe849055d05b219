//! Generation over corpus windows and the derived reports: metric
//! evaluation, per-speaker style maps and text-alteration FGD.

use std::collections::{BTreeMap, HashMap};

use candle_core::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Part, PaddedWordSeq, ProcessedCorpus, TrainingSample, WindowRef};
use crate::error::{Error, Result};
use crate::fgd::{fgd, mae_accel, maej, FeatureExtractor, MetricReport};
use crate::model::{synthesize_long, Batch, GestureModel, SpeechInput, StyleVector};
use crate::pose::{motion_variance, DirVecSequence, ALL_JOINTS, LEFT_ARM, RIGHT_ARM};
use crate::rng::{indexed_seed, rng_from};
use crate::training::ValidationMetrics;

const GEN_BATCH: usize = 32;

/// Real windows and the model's output for them, in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSet {
    pub windows: Vec<WindowRef>,
    pub real: Vec<DirVecSequence>,
    pub generated: Vec<DirVecSequence>,
}

/// At most `max` windows, evenly spaced through `windows`.
pub fn subsample(windows: Vec<WindowRef>, max: Option<usize>) -> Vec<WindowRef> {
    match max {
        Some(m) if m < windows.len() && m > 0 => {
            let n = windows.len();
            (0..m).map(|i| windows[i * n / m]).collect()
        }
        _ => windows,
    }
}

/// Speaker ID used for a window: its own if the model was trained on it,
/// otherwise a training speaker drawn with a per-window seed.
pub fn conditioning_speaker(speaker: usize, train_speakers: &[usize], seed: u64, window_index: usize) -> usize {
    if train_speakers.is_empty() || train_speakers.contains(&speaker) {
        return speaker;
    }
    let mut rng = rng_from(indexed_seed(seed, "unseen-speaker", window_index as u64));
    train_speakers[rng.random_range(0..train_speakers.len())]
}

fn batch_outputs(model: &GestureModel, samples: &[TrainingSample], speakers: Vec<usize>) -> Result<Vec<DirVecSequence>> {
    let batch = Batch::new(samples, speakers, &model.vocab)?;
    let ctx = model.context(&batch.word_ids, &batch.audio)?;
    let style = model.style_tensors(&batch.speakers, None)?;
    let out = model.generate(&ctx, &style.sample, &batch.seeds, None)?;
    split_windows(&out, model.config.fps)
}

fn split_windows(out: &Tensor, fps: f64) -> Result<Vec<DirVecSequence>> {
    let (b, t, d) = out.dims3()?;
    let flat = out.flatten_all()?.to_vec1::<f32>()?;
    (0..b).map(|i| DirVecSequence::from_flat_f32(&flat[i * t * d..(i + 1) * t * d], fps)?.normalized()).collect()
}

/// Generates every selected window of `part` from its ground-truth seed
/// poses, text and audio, with the style mean of its speaker.
pub fn generate_part(
    model: &GestureModel,
    corpus: &ProcessedCorpus,
    part: Part,
    seed: u64,
    max_windows: Option<usize>,
) -> Result<GeneratedSet> {
    let windows = subsample(corpus.windows(part), max_windows);
    let train = corpus.train_speakers();
    let mut real = Vec::with_capacity(windows.len());
    let mut generated = Vec::with_capacity(windows.len());
    for (c, chunk) in windows.chunks(GEN_BATCH).enumerate() {
        let samples = chunk.iter().map(|&w| corpus.sample(w)).collect::<Result<Vec<_>>>()?;
        let speakers = samples
            .iter()
            .enumerate()
            .map(|(i, s)| conditioning_speaker(s.speaker_id, &train, seed, c * GEN_BATCH + i))
            .collect();
        generated.extend(batch_outputs(model, &samples, speakers)?);
        real.extend(samples.iter().map(TrainingSample::window));
    }
    Ok(GeneratedSet { windows, real, generated })
}

/// FGD, MAEJ and acceleration MAE of generated against real windows.
pub fn score_sets(
    corpus: &ProcessedCorpus,
    real: &[DirVecSequence],
    generated: &[DirVecSequence],
    extractor: &FeatureExtractor,
    extractor_id: &str,
) -> Result<MetricReport> {
    let to_coords = |s: &[DirVecSequence]| s.iter().map(|w| corpus.to_coords(w)).collect::<Result<Vec<_>>>();
    let (rc, gc) = (to_coords(real)?, to_coords(generated)?);
    Ok(MetricReport {
        fgd: fgd(real, generated, extractor)?,
        maej: maej(&rc, &gc)?,
        mae_accel: mae_accel(&rc, &gc)?,
        n_real: real.len(),
        n_generated: generated.len(),
        extractor_id: extractor_id.to_string(),
    })
}

pub fn evaluate(
    model: &GestureModel,
    extractor: &FeatureExtractor,
    extractor_id: &str,
    corpus: &ProcessedCorpus,
    part: Part,
    seed: u64,
    max_windows: Option<usize>,
) -> Result<MetricReport> {
    let set = generate_part(model, corpus, part, seed, max_windows)?;
    score_sets(corpus, &set.real, &set.generated, extractor, extractor_id)
}

/// Per-epoch validation for the trainer: FGD and MAEJ on the validation split.
pub fn validation_metrics(
    model: &GestureModel,
    extractor: &FeatureExtractor,
    corpus: &ProcessedCorpus,
    seed: u64,
    max_windows: Option<usize>,
) -> Result<ValidationMetrics> {
    let r = evaluate(model, extractor, "validation", corpus, Part::Val, seed, max_windows)?;
    Ok(ValidationMetrics { fgd: r.fgd, maej: r.maej })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Handedness {
    Right,
    Left,
    Balanced,
}

/// Right/left variance ratio beyond which a style counts as one-handed.
pub const HANDEDNESS_RATIO: f64 = 1.2;

pub fn handedness(right_variance: f64, left_variance: f64) -> Handedness {
    if right_variance > HANDEDNESS_RATIO * left_variance {
        Handedness::Right
    } else if left_variance > HANDEDNESS_RATIO * right_variance {
        Handedness::Left
    } else {
        Handedness::Balanced
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerStyleRow {
    pub speaker_id: usize,
    pub style_mean: Vec<f32>,
    pub motion_variance: f64,
    pub right_arm_variance: f64,
    pub left_arm_variance: f64,
    pub handedness: Handedness,
    /// Position of the style mean on the first two principal axes.
    pub projection: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleReport {
    pub frames: usize,
    pub rows: Vec<SpeakerStyleRow>,
}

/// Projects rows onto their two leading principal axes.
pub fn pca_2d(rows: &[Vec<f32>]) -> Vec<[f64; 2]> {
    let n = rows.len();
    if n < 2 {
        return vec![[0.0; 2]; n];
    }
    let d = rows[0].len();
    let m = DMatrix::from_fn(n, d, |i, j| rows[i][j] as f64);
    let mean = m.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (0..n)
        .map(|i| {
            std::array::from_fn(|k| match order.get(k) {
                Some(&c) => (0..d).map(|j| centered[(i, j)] * eig.eigenvectors[(j, c)]).sum(),
                None => 0.0,
            })
        })
        .collect()
}

/// Synthesizes `input` once per speaker ID with the style mean and measures
/// the resulting motion.
pub fn style_map(model: &GestureModel, input: &SpeechInput) -> Result<StyleReport> {
    let mut rows = Vec::with_capacity(model.config.n_speakers);
    let mut frames = 0;
    for id in 0..model.config.n_speakers {
        let style = model.encode_style(&crate::model::StyleSource::Speaker(id), None)?;
        let out = synthesize_long(model, input, &style)?;
        frames = out.poses.len();
        let coords = crate::pose::dirvecs_to_coords(&out.poses, &model.skeleton, [0.0; 3])?;
        let right = motion_variance(&coords, &RIGHT_ARM)?;
        let left = motion_variance(&coords, &LEFT_ARM)?;
        rows.push(SpeakerStyleRow {
            speaker_id: id,
            style_mean: style.mean,
            motion_variance: motion_variance(&coords, &ALL_JOINTS)?,
            right_arm_variance: right,
            left_arm_variance: left,
            handedness: handedness(right, left),
            projection: [0.0; 2],
        });
    }
    let proj = pca_2d(&rows.iter().map(|r| r.style_mean.clone()).collect::<Vec<_>>());
    for (r, p) in rows.iter_mut().zip(proj) {
        r.projection = p;
    }
    Ok(StyleReport { frames, rows })
}

/// Lower-cased word → replacement.
pub type Substitutions = BTreeMap<String, String>;

/// Reads `word replacement` pairs, one per line; `#` starts a comment.
pub fn parse_substitutions(text: &str) -> Result<Substitutions> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::InvalidInput(format!("substitution line {}: expected `word replacement`", n + 1)));
        }
        map.insert(parts[0].to_lowercase(), parts[1].to_lowercase());
    }
    Ok(map)
}

/// Applies `subs` to every word slot; returns `None` when nothing matched.
pub fn substitute(words: &PaddedWordSeq, subs: &Substitutions) -> Option<PaddedWordSeq> {
    let mut changed = false;
    let tokens = words
        .tokens
        .iter()
        .map(|t| {
            t.as_ref().map(|w| match subs.get(&w.to_lowercase()) {
                Some(r) => {
                    changed = true;
                    r.clone()
                }
                None => w.clone(),
            })
        })
        .collect();
    changed.then_some(PaddedWordSeq { tokens })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextAlterReport {
    pub n_windows: usize,
    pub n_pairs: usize,
    pub substituted_words: usize,
    /// FGD between the outputs before and after substitution; absent with
    /// fewer than two pairs.
    pub fgd: Option<f64>,
    pub extractor_id: String,
}

/// Generates each window of `part` containing a substitutable word twice,
/// with the original and with the altered transcript, keeping audio, seeds
/// and style fixed.
pub fn text_alter(
    model: &GestureModel,
    extractor: &FeatureExtractor,
    extractor_id: &str,
    corpus: &ProcessedCorpus,
    part: Part,
    subs: &Substitutions,
    seed: u64,
    max_windows: Option<usize>,
) -> Result<TextAlterReport> {
    let windows = subsample(corpus.windows(part), max_windows);
    let train = corpus.train_speakers();
    let (mut before, mut after) = (Vec::new(), Vec::new());
    let mut substituted_words = 0;
    let mut originals = Vec::new();
    let mut altered = Vec::new();
    let mut speakers = Vec::new();
    for (i, &w) in windows.iter().enumerate() {
        let s = corpus.sample(w)?;
        if let Some(words) = substitute(&s.padded_words, subs) {
            substituted_words += s.padded_words.tokens.iter().zip(&words.tokens).filter(|(a, b)| a != b).count();
            speakers.push(conditioning_speaker(s.speaker_id, &train, seed, i));
            let mut alt = s.clone();
            alt.padded_words = words;
            originals.push(s);
            altered.push(alt);
        }
    }
    for ((o, a), sp) in originals.chunks(GEN_BATCH).zip(altered.chunks(GEN_BATCH)).zip(speakers.chunks(GEN_BATCH)) {
        before.extend(batch_outputs(model, o, sp.to_vec())?);
        after.extend(batch_outputs(model, a, sp.to_vec())?);
    }
    let fgd = if before.len() >= 2 { Some(fgd(&before, &after, extractor)?) } else { None };
    Ok(TextAlterReport {
        n_windows: windows.len(),
        n_pairs: before.len(),
        substituted_words,
        fgd,
        extractor_id: extractor_id.to_string(),
    })
}

/// Word frequencies over a split, most frequent first, for building
/// substitution files.
pub fn word_counts(corpus: &ProcessedCorpus, part: Part) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for c in corpus.clips_in(part) {
        for w in &c.words {
            *counts.entry(w.text.to_lowercase()).or_default() += 1;
        }
    }
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// Style vector for synthesis with a given speaker or an explicit vector.
pub fn style_for(model: &GestureModel, speaker: Option<usize>, vector: Option<Vec<f32>>) -> Result<StyleVector> {
    match (speaker, vector) {
        (Some(id), None) => model.encode_style(&crate::model::StyleSource::Speaker(id), None),
        (None, Some(v)) => model.encode_style(&crate::model::StyleSource::Vector(v), None),
        _ => Err(Error::InvalidInput("give exactly one of a speaker ID or a style vector".into())),
    }
}
