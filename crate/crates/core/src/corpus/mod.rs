//! Speech/gesture corpus handling: word padding, fixed-length training
//! windows, speaker-disjoint splits and a procedural fixture corpus.

mod io;
mod processed;
mod synthetic;

pub use io::{
    load_corpus_dir, read_wav_mono, resample_audio, write_clip_dir, write_corpus_dir, write_wav, ClipLoadFailure,
};
pub use processed::{normalize_body, IngestionReport, Part, ProcessedClip, ProcessedCorpus, WindowRef};
pub use synthetic::{
    make_synthetic_corpus, make_synthetic_corpus_with, speaker_style, SpeakerStyle, SyntheticConfig,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{
    coords_to_dirvecs, is_valid_sample, DirVecSequence, PoseSequence, ValidityThresholds, Validity,
};
use crate::rng;

/// Frames per training window.
pub const WINDOW_FRAMES: usize = 34;
/// Leading frames of a window used as seed poses.
pub const SEED_FRAMES: usize = 4;
/// Frames the generator must produce after the seeds.
pub const TARGET_FRAMES: usize = WINDOW_FRAMES - SEED_FRAMES;
pub const WINDOW_STRIDE: usize = 10;
pub const SAMPLE_RATE: u32 = 16_000;
pub const PAD_DISPLAY: &str = "◇";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWord {
    pub text: String,
    pub start: f64,
    pub end: f64,
}

impl TimedWord {
    pub fn new(text: impl Into<String>, start: f64, end: f64) -> Result<Self> {
        let w = Self { text: text.into(), start, end };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.is_empty() || !(self.start >= 0.0) || !(self.end > self.start) {
            return Err(Error::InvalidInput(format!(
                "bad word `{}` [{}, {}]",
                self.text, self.start, self.end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audio {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Audio {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechClip {
    pub clip_id: String,
    pub speaker_id: usize,
    pub words: Vec<TimedWord>,
    pub audio: Audio,
    pub poses: PoseSequence,
}

impl SpeechClip {
    pub fn validate(&self) -> Result<()> {
        for w in &self.words {
            w.validate()?;
        }
        if self.words.windows(2).any(|p| p[1].start < p[0].start) {
            return Err(Error::InvalidInput(format!("{}: word starts are not monotone", self.clip_id)));
        }
        self.poses.validate()?;
        let pose_duration = self.poses.len() as f64 / self.poses.fps;
        if (pose_duration - self.audio.duration()).abs() > 0.5 {
            return Err(Error::InvalidInput(format!(
                "{}: audio lasts {:.2} s but poses last {:.2} s",
                self.clip_id,
                self.audio.duration(),
                pose_duration
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.poses.len() as f64 / self.poses.fps
    }
}

/// Frame-aligned word slots; `None` is the padding token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddedWordSeq {
    pub tokens: Vec<Option<String>>,
}

impl PaddedWordSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().flatten().map(String::as_str)
    }
}

impl fmt::Display for PaddedWordSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.tokens.iter().map(|t| t.as_deref().unwrap_or(PAD_DISPLAY)).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Places each word starting inside `[window_start, window_end)` at the slot
/// proportional to its onset; a word landing on an occupied slot moves right
/// to the next free one.
pub fn build_padded_words(
    words: &[TimedWord],
    window_start: f64,
    window_end: f64,
    t: usize,
) -> Result<PaddedWordSeq> {
    if !(window_end > window_start) || t == 0 {
        return Err(Error::InvalidInput(format!(
            "bad window [{window_start}, {window_end}) with {t} slots"
        )));
    }
    let inside: Vec<&TimedWord> =
        words.iter().filter(|w| w.start >= window_start && w.start < window_end).collect();
    if inside.len() > t {
        return Err(Error::WindowOverflow { words: inside.len(), slots: t });
    }
    let span = window_end - window_start;
    let mut tokens: Vec<Option<String>> = vec![None; t];
    let mut last_slot: Option<usize> = None;
    for (k, w) in inside.iter().enumerate() {
        let proportional = ((w.start - window_start) / span * t as f64).floor() as usize;
        let mut slot = proportional.min(t - 1);
        // keep order and leave room for the remaining words
        if let Some(prev) = last_slot {
            slot = slot.max(prev + 1);
        }
        slot = slot.min(t - (inside.len() - k));
        while tokens[slot].is_some() {
            slot += 1;
        }
        tokens[slot] = Some(w.text.clone());
        last_slot = Some(slot);
    }
    Ok(PaddedWordSeq { tokens })
}

/// Audio samples covering frames `[frame_start, frame_start + t)` at `fps`,
/// zero-padded where the interval leaves the clip.
pub fn slice_audio(audio: &Audio, fps: f64, frame_start: i64, t: usize) -> Vec<f32> {
    let sr = audio.sample_rate as f64;
    let n = window_samples(audio.sample_rate, fps, t);
    let first = (frame_start as f64 * sr / fps).round() as i64;
    (0..n as i64)
        .map(|k| {
            let idx = first + k;
            if idx >= 0 && (idx as usize) < audio.samples.len() {
                audio.samples[idx as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// `round(sample_rate · t / fps)`.
pub fn window_samples(sample_rate: u32, fps: f64, t: usize) -> usize {
    (sample_rate as f64 * t as f64 / fps).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub clip_id: String,
    pub start_frame: usize,
    pub seed_poses: DirVecSequence,
    pub target: DirVecSequence,
    pub padded_words: PaddedWordSeq,
    pub audio_window: Vec<f32>,
    pub speaker_id: usize,
}

impl TrainingSample {
    /// Seeds followed by targets: the full window.
    pub fn window(&self) -> DirVecSequence {
        let mut frames = self.seed_poses.frames.clone();
        frames.extend_from_slice(&self.target.frames);
        DirVecSequence { frames, fps: self.target.fps }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkStats {
    pub windows_total: usize,
    pub dropped_low_motion: usize,
    pub dropped_lying: usize,
    pub dropped_word_overflow: usize,
}

impl ChunkStats {
    pub fn accumulate(&mut self, other: &ChunkStats) {
        self.windows_total += other.windows_total;
        self.dropped_low_motion += other.dropped_low_motion;
        self.dropped_lying += other.dropped_lying;
        self.dropped_word_overflow += other.dropped_word_overflow;
    }

    pub fn kept(&self) -> usize {
        self.windows_total - self.dropped_low_motion - self.dropped_lying - self.dropped_word_overflow
    }
}

/// Start frames of windows `[s, s + t)` stepping by `stride`.
pub fn window_starts(n_frames: usize, t: usize, stride: usize) -> impl Iterator<Item = usize> {
    let last = n_frames.checked_sub(t);
    (0..).map(move |k| k * stride).take_while(move |&s| last.is_some_and(|l| s <= l))
}

/// Valid window starts of a clip together with drop counts.
pub fn valid_window_starts(
    clip: &SpeechClip,
    t: usize,
    stride: usize,
    th: &ValidityThresholds,
) -> (Vec<usize>, ChunkStats) {
    let mut stats = ChunkStats::default();
    let mut starts = Vec::new();
    for s in window_starts(clip.poses.len(), t, stride) {
        stats.windows_total += 1;
        match is_valid_sample(&clip.poses.slice(s, t), th) {
            Validity::LowMotion => stats.dropped_low_motion += 1,
            Validity::LyingPose => stats.dropped_lying += 1,
            Validity::Valid => {
                let t0 = s as f64 / clip.poses.fps;
                let t1 = (s + t) as f64 / clip.poses.fps;
                match build_padded_words(&clip.words, t0, t1, t) {
                    Ok(_) => starts.push(s),
                    Err(_) => stats.dropped_word_overflow += 1,
                }
            }
        }
    }
    (starts, stats)
}

/// Builds the training sample for the window starting at `start`.
pub fn make_sample(clip: &SpeechClip, dirvecs: &DirVecSequence, start: usize, t: usize) -> Result<TrainingSample> {
    if start + t > dirvecs.len() || t <= SEED_FRAMES {
        return Err(Error::Shape(format!(
            "window [{start}, {}) outside {} frames",
            start + t,
            dirvecs.len()
        )));
    }
    let fps = clip.poses.fps;
    let t0 = start as f64 / fps;
    let t1 = (start + t) as f64 / fps;
    Ok(TrainingSample {
        clip_id: clip.clip_id.clone(),
        start_frame: start,
        seed_poses: dirvecs.slice(start, SEED_FRAMES),
        target: dirvecs.slice(start + SEED_FRAMES, t - SEED_FRAMES),
        padded_words: build_padded_words(&clip.words, t0, t1, t)?,
        audio_window: slice_audio(&clip.audio, fps, start as i64, t),
        speaker_id: clip.speaker_id,
    })
}

/// Cuts a clip into overlapping windows, dropping the ones that fail the
/// validity filters. Clips shorter than `t` yield nothing.
pub fn extract_chunks(
    clip: &SpeechClip,
    t: usize,
    stride: usize,
    th: &ValidityThresholds,
) -> Result<(Vec<TrainingSample>, ChunkStats)> {
    if clip.poses.len() < t {
        return Ok((Vec::new(), ChunkStats::default()));
    }
    let dirvecs = coords_to_dirvecs(&clip.poses)?;
    let (starts, stats) = valid_window_starts(clip, t, stride, th);
    let samples = starts
        .into_iter()
        .map(|s| make_sample(clip, &dirvecs, s, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, stats))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl CorpusSplit {
    pub fn part_of(&self, clip_id: &str) -> Option<&'static str> {
        if self.train.iter().any(|c| c == clip_id) {
            Some("train")
        } else if self.val.iter().any(|c| c == clip_id) {
            Some("val")
        } else if self.test.iter().any(|c| c == clip_id) {
            Some("test")
        } else {
            None
        }
    }
}

/// Splits clips into train/val/test. All clips of a speaker land in the same
/// part, so the split is disjoint both by clip and by speaker.
pub fn split_corpus(clips: &[SpeechClip], ratios: [f64; 3], seed: u64) -> Result<CorpusSplit> {
    let keys: Vec<(String, usize)> = clips.iter().map(|c| (c.clip_id.clone(), c.speaker_id)).collect();
    split_by_speaker(&keys, ratios, seed)
}

pub(crate) fn split_by_speaker(clips: &[(String, usize)], ratios: [f64; 3], seed: u64) -> Result<CorpusSplit> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (id, speaker) in clips {
        groups.entry(*speaker).or_default().push(id.clone());
    }
    let parts_needed = ratios.iter().filter(|r| **r > 0.0).count();
    if groups.len() < parts_needed.max(3) {
        return Err(Error::Corpus(format!(
            "{} speaker groups cannot fill {} splits",
            groups.len(),
            parts_needed.max(3)
        )));
    }
    let n = groups.len();
    let count = |r: f64| if r > 0.0 { ((n as f64 * r).round() as usize).max(1) } else { 0 };
    let n_val = count(ratios[1]);
    let n_test = count(ratios[2]);
    if n_val + n_test >= n && ratios[0] > 0.0 {
        return Err(Error::Corpus(format!("{n} speaker groups leave no training data")));
    }
    let mut order: Vec<Vec<String>> = groups.into_values().collect();
    order.shuffle(&mut rng::rng_from(rng::sub_seed(seed, "split")));
    let mut split = CorpusSplit::default();
    for (k, group) in order.into_iter().enumerate() {
        let part = if k < n_val {
            &mut split.val
        } else if k < n_val + n_test {
            &mut split.test
        } else {
            &mut split.train
        };
        part.extend(group);
    }
    for part in [&mut split.train, &mut split.val, &mut split.test] {
        part.sort();
    }
    Ok(split)
}

/// Speakers present in the given clip ids.
pub fn speakers_of<'a>(clips: impl IntoIterator<Item = &'a SpeechClip>, ids: &[String]) -> BTreeSet<usize> {
    clips
        .into_iter()
        .filter(|c| ids.contains(&c.clip_id))
        .map(|c| c.speaker_id)
        .collect()
}
