//! Normalized corpus ready for training: per-clip directional vectors and
//! 16 kHz audio, valid window starts, the speaker-disjoint split and
//! corpus-level statistics. Persisted as a single archive file.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    make_sample, split_corpus, valid_window_starts, Audio, ChunkStats, ClipLoadFailure, CorpusSplit,
    SpeechClip, TimedWord, TrainingSample, WINDOW_FRAMES, WINDOW_STRIDE,
};
use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::pose::{
    coords_to_dirvecs, dirvecs_to_coords, norm, spine_center, sub, DirVecSequence, PoseSequence, Skeleton,
    ValidityThresholds, Vec3, NECK, NUM_BONES, SPINE,
};

const FORMAT: &str = "processed-corpus/1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub clips: usize,
    pub windows_total: usize,
    pub windows_dropped_low_motion: usize,
    pub windows_dropped_lying: usize,
    pub windows_dropped_word_overflow: usize,
    pub windows_kept: usize,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
    pub failed_clips: Vec<ClipLoadFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedClip {
    pub clip_id: String,
    pub speaker_id: usize,
    pub words: Vec<TimedWord>,
    pub window_starts: Vec<usize>,
    #[serde(skip)]
    pub audio: Audio,
    #[serde(skip)]
    pub dirvecs: DirVecSequence,
}

impl Default for Audio {
    fn default() -> Self {
        Audio { samples: Vec::new(), sample_rate: super::SAMPLE_RATE }
    }
}

impl Default for DirVecSequence {
    fn default() -> Self {
        DirVecSequence { frames: Vec::new(), fps: crate::pose::DEFAULT_FPS }
    }
}

/// Reference to one training window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowRef {
    pub clip: usize,
    pub start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedCorpus {
    pub clips: Vec<ProcessedClip>,
    pub split: CorpusSplit,
    pub report: IngestionReport,
    /// Mean bone lengths over the training clips.
    pub skeleton: Skeleton,
    /// Mean training pose in directional-vector form (unit bones).
    pub mean_pose: [Vec3; NUM_BONES],
    /// Size of the speaker-ID space (largest ID + 1).
    pub n_speakers: usize,
    pub seed: u64,
    pub thresholds: ValidityThresholds,
}

/// Moves the spine to the origin and scales so that the mean spine–neck
/// distance is 1.
pub fn normalize_body(seq: &PoseSequence) -> Result<PoseSequence> {
    let centered = spine_center(seq)?;
    let mean = centered.frames.iter().map(|f| norm(sub(f[NECK], f[SPINE]))).sum::<f64>() / seq.len() as f64;
    if !(mean > 1e-8) {
        return Err(Error::DegenerateBone { frame: 0, bone: 0, name: crate::pose::BONE_NAMES[0] });
    }
    Ok(centered.scaled(1.0 / mean))
}

fn round_f32(seq: DirVecSequence) -> DirVecSequence {
    let flat: Vec<f32> = seq.to_flat_f32();
    DirVecSequence::from_flat_f32(&flat, seq.fps).expect("same shape")
}

impl ProcessedCorpus {
    pub fn from_clips(
        clips: &[SpeechClip],
        failures: Vec<ClipLoadFailure>,
        ratios: [f64; 3],
        seed: u64,
        thresholds: &ValidityThresholds,
    ) -> Result<Self> {
        thresholds.validate()?;
        if clips.is_empty() {
            return Err(Error::Corpus("no usable clips".into()));
        }
        let split = split_corpus(clips, ratios, seed)?;
        let mut report = IngestionReport { clips: clips.len(), failed_clips: failures, ..Default::default() };
        let mut processed = Vec::with_capacity(clips.len());
        let mut train_bodies = Vec::new();
        for clip in clips {
            let body = normalize_body(&clip.poses)?;
            let normalized = SpeechClip { poses: body.clone(), ..clip.clone() };
            let (starts, stats) = valid_window_starts(&normalized, WINDOW_FRAMES, WINDOW_STRIDE, thresholds);
            accumulate(&mut report, &stats);
            match split.part_of(&clip.clip_id) {
                Some("train") => report.train_windows += starts.len(),
                Some("val") => report.val_windows += starts.len(),
                _ => report.test_windows += starts.len(),
            }
            let dirvecs = round_f32(coords_to_dirvecs(&body)?);
            if split.part_of(&clip.clip_id) == Some("train") {
                train_bodies.push(body);
            }
            processed.push(ProcessedClip {
                clip_id: clip.clip_id.clone(),
                speaker_id: clip.speaker_id,
                words: clip.words.clone(),
                window_starts: starts,
                audio: clip.audio.clone(),
                dirvecs,
            });
        }
        let skeleton = Skeleton::from_mean_lengths(&train_bodies)?;
        let n_speakers = clips.iter().map(|c| c.speaker_id).max().unwrap_or(0) + 1;
        let mut corpus = Self {
            clips: processed,
            split,
            report,
            skeleton,
            mean_pose: [[0.0; 3]; NUM_BONES],
            n_speakers,
            seed,
            thresholds: *thresholds,
        };
        corpus.mean_pose = corpus.compute_mean_pose()?;
        if corpus.report.train_windows == 0 {
            return Err(Error::Corpus("no valid training windows after filtering".into()));
        }
        Ok(corpus)
    }

    fn compute_mean_pose(&self) -> Result<[Vec3; NUM_BONES]> {
        let mut sum = [[0.0; 3]; NUM_BONES];
        let mut n = 0usize;
        for c in self.clips_in(Part::Train) {
            for f in &c.dirvecs.frames {
                for b in 0..NUM_BONES {
                    for a in 0..3 {
                        sum[b][a] += f[b][a];
                    }
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Corpus("training split has no frames".into()));
        }
        let mean = DirVecSequence { frames: vec![sum.map(|v| v.map(|x| x / n as f64))], fps: 15.0 };
        Ok(mean.normalized()?.frames[0])
    }

    pub fn clips_in(&self, part: Part) -> impl Iterator<Item = &ProcessedClip> {
        let ids = self.part_ids(part);
        self.clips.iter().filter(move |c| ids.contains(&c.clip_id))
    }

    fn part_ids(&self, part: Part) -> &[String] {
        match part {
            Part::Train => &self.split.train,
            Part::Val => &self.split.val,
            Part::Test => &self.split.test,
        }
    }

    pub fn windows(&self, part: Part) -> Vec<WindowRef> {
        let ids = self.part_ids(part);
        self.clips
            .iter()
            .enumerate()
            .filter(|(_, c)| ids.contains(&c.clip_id))
            .flat_map(|(i, c)| c.window_starts.iter().map(move |&s| WindowRef { clip: i, start: s }))
            .collect()
    }

    pub fn sample(&self, w: WindowRef) -> Result<TrainingSample> {
        let c = self
            .clips
            .get(w.clip)
            .ok_or_else(|| Error::InvalidInput(format!("clip index {} out of range", w.clip)))?;
        let as_clip = SpeechClip {
            clip_id: c.clip_id.clone(),
            speaker_id: c.speaker_id,
            words: c.words.clone(),
            audio: Audio { samples: Vec::new(), sample_rate: c.audio.sample_rate },
            poses: PoseSequence { frames: Vec::new(), fps: c.dirvecs.fps },
        };
        let mut s = make_sample(&as_clip, &c.dirvecs, w.start, WINDOW_FRAMES)?;
        s.audio_window = super::slice_audio(&c.audio, c.dirvecs.fps, w.start as i64, WINDOW_FRAMES);
        Ok(s)
    }

    pub fn samples(&self, part: Part) -> Result<Vec<TrainingSample>> {
        self.windows(part).into_iter().map(|w| self.sample(w)).collect()
    }

    /// Speaker IDs that occur in the training split.
    pub fn train_speakers(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.clips_in(Part::Train).map(|c| c.speaker_id).collect();
        set.into_iter().collect()
    }

    /// All training words, for vocabulary construction.
    pub fn train_words(&self) -> impl Iterator<Item = &str> {
        self.clips_in(Part::Train).flat_map(|c| c.words.iter().map(|w| w.text.as_str()))
    }

    /// Joint coordinates of a directional-vector window using the corpus skeleton.
    pub fn to_coords(&self, seq: &DirVecSequence) -> Result<PoseSequence> {
        dirvecs_to_coords(seq, &self.skeleton, [0.0; 3])
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut a = Archive::new(serde_json::json!({
            "format": FORMAT,
            "corpus": serde_json::to_value(self)?,
        }));
        for (i, c) in self.clips.iter().enumerate() {
            a.insert(format!("clip{i:05}/audio"), vec![c.audio.samples.len()], c.audio.samples.clone())?;
            a.insert(format!("clip{i:05}/dirvecs"), vec![c.dirvecs.len(), 27], c.dirvecs.to_flat_f32())?;
        }
        Ok(a)
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        if a.header.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
            return Err(Error::Checkpoint("not a processed corpus archive".into()));
        }
        let mut corpus: ProcessedCorpus = serde_json::from_value(a.header["corpus"].clone())?;
        for (i, c) in corpus.clips.iter_mut().enumerate() {
            let audio = a.get(&format!("clip{i:05}/audio"))?;
            c.audio = Audio { samples: audio.data.clone(), sample_rate: super::SAMPLE_RATE };
            let dv = a.get(&format!("clip{i:05}/dirvecs"))?;
            c.dirvecs = DirVecSequence::from_flat_f32(&dv.data, crate::pose::DEFAULT_FPS)?;
        }
        Ok(corpus)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}

fn accumulate(report: &mut IngestionReport, stats: &ChunkStats) {
    report.windows_total += stats.windows_total;
    report.windows_dropped_low_motion += stats.dropped_low_motion;
    report.windows_dropped_lying += stats.dropped_lying;
    report.windows_dropped_word_overflow += stats.dropped_word_overflow;
    report.windows_kept += stats.kept();
}
