//! Long-form synthesis by chaining fixed-length windows through seed poses.

use serde::{Deserialize, Serialize};

use super::{GestureModel, StyleVector};
use crate::corpus::{build_padded_words, resample_audio, slice_audio, Audio, SpeechClip, TimedWord};
use crate::error::{Error, Result};
use crate::pose::{DirVecSequence, Vec3, NUM_BONES};

/// Speech to animate: a transcript with word timings and the audio.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechInput {
    pub words: Vec<TimedWord>,
    pub audio: Audio,
}

impl From<&SpeechClip> for SpeechInput {
    fn from(c: &SpeechClip) -> Self {
        Self { words: c.words.clone(), audio: c.audio.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    /// First output frame produced by this chunk.
    pub first_frame: usize,
    pub seeds: Vec<[Vec3; NUM_BONES]>,
    /// The newly generated frames, normalized.
    pub generated: Vec<[Vec3; NUM_BONES]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongSynthesis {
    pub poses: DirVecSequence,
    pub chunks: Vec<ChunkRecord>,
}

/// Generates `round(duration · fps)` frames. Chunk `k` spans clip frames
/// `[30k − 4, 30k + 30)`; its four seeds are the corpus mean pose for the
/// first chunk and the last four generated frames of chunk `k − 1` after that.
pub fn synthesize_long(model: &GestureModel, input: &SpeechInput, style: &StyleVector) -> Result<LongSynthesis> {
    let cfg = &model.config;
    let audio = resample_audio(&input.audio, cfg.sample_rate);
    let duration = audio.duration();
    let step = cfg.n_frames - cfg.n_seed;
    let n_frames = (duration * cfg.fps).round() as usize;
    if n_frames < step {
        return Err(Error::InvalidInput(format!(
            "speech lasts {duration:.2} s; at least {:.2} s is needed",
            step as f64 / cfg.fps
        )));
    }
    let n_chunks = n_frames.div_ceil(step);
    let mut seeds: Vec<[Vec3; NUM_BONES]> = vec![model.mean_pose; cfg.n_seed];
    let mut frames = Vec::with_capacity(n_chunks * step);
    let mut chunks = Vec::with_capacity(n_chunks);
    for k in 0..n_chunks {
        let start = (k * step) as i64 - cfg.n_seed as i64;
        let t0 = start as f64 / cfg.fps;
        let t1 = (start + cfg.n_frames as i64) as f64 / cfg.fps;
        let words = build_padded_words(&input.words, t0, t1, cfg.n_frames)?;
        let window = slice_audio(&audio, cfg.fps, start, cfg.n_frames);
        let raw = model.generate_window(&words, &window, style, &seeds)?;
        let generated = raw.slice(cfg.n_seed, step).normalized()?;
        chunks.push(ChunkRecord { first_frame: k * step, seeds: seeds.clone(), generated: generated.frames.clone() });
        seeds = generated.frames[step - cfg.n_seed..].to_vec();
        frames.extend(generated.frames);
    }
    frames.truncate(n_frames);
    Ok(LongSynthesis { poses: DirVecSequence { frames, fps: cfg.fps }, chunks })
}
