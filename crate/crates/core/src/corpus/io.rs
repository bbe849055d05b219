//! On-disk corpus layout: one directory per clip holding `words.json`,
//! `audio.wav` and `poses.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Audio, SpeechClip, TimedWord, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::pose::{import_csv, write_pose_csv, Resample, DEFAULT_FPS};

#[derive(Debug, Serialize, Deserialize)]
struct WordsFile {
    speaker_id: usize,
    words: Vec<TimedWord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fps: Option<f64>,
}

/// A clip directory that could not be ingested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipLoadFailure {
    pub clip_dir: String,
    pub class: String,
    pub message: String,
}

pub fn read_wav_mono(path: &Path) -> Result<Audio> {
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::Path { path: path.to_path_buf(), source: io },
        other => Error::Wav(other),
    })?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let full = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / full))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    Ok(Audio { samples, sample_rate: spec.sample_rate })
}

/// 16-bit mono PCM.
pub fn write_wav(audio: &Audio, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::Path { path: path.to_path_buf(), source: io },
        other => Error::Wav(other),
    })?;
    for &s in &audio.samples {
        w.write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Linear-interpolation resampling.
pub fn resample_audio(audio: &Audio, dst_rate: u32) -> Audio {
    if audio.sample_rate == dst_rate || audio.samples.is_empty() {
        return Audio { samples: audio.samples.clone(), sample_rate: dst_rate };
    }
    let ratio = audio.sample_rate as f64 / dst_rate as f64;
    let n = (audio.samples.len() as f64 / ratio).round() as usize;
    let last = audio.samples.len() - 1;
    let samples = (0..n)
        .map(|k| {
            let x = k as f64 * ratio;
            let i = (x.floor() as usize).min(last);
            let j = (i + 1).min(last);
            let f = (x - i as f64) as f32;
            audio.samples[i] * (1.0 - f) + audio.samples[j] * f
        })
        .collect();
    Audio { samples, sample_rate: dst_rate }
}

fn load_clip(dir: &Path) -> Result<SpeechClip> {
    let words_path = dir.join("words.json");
    let text = fs::read_to_string(&words_path).map_err(Error::at_path(&words_path))?;
    let words: WordsFile = serde_json::from_str(&text)?;
    let fps = words.fps.unwrap_or(DEFAULT_FPS);
    let mut poses = import_csv(&dir.join("poses.csv"), fps)?;
    if fps != DEFAULT_FPS {
        poses = poses.resample(DEFAULT_FPS)?;
    }
    let audio = resample_audio(&read_wav_mono(&dir.join("audio.wav"))?, SAMPLE_RATE);
    let clip_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let clip = SpeechClip { clip_id, speaker_id: words.speaker_id, words: words.words, audio, poses };
    clip.validate()?;
    Ok(clip)
}

/// Loads every clip directory under `root`, sorted by name. Malformed clips
/// are returned separately instead of aborting the whole load.
pub fn load_corpus_dir(root: &Path) -> Result<(Vec<SpeechClip>, Vec<ClipLoadFailure>)> {
    let entries = fs::read_dir(root).map_err(Error::at_path(root))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Corpus(format!(
            "{} contains no clip directories (expected <clip>/words.json, audio.wav, poses.csv)",
            root.display()
        )));
    }
    let mut clips = Vec::new();
    let mut failures = Vec::new();
    for dir in dirs {
        match load_clip(&dir) {
            Ok(c) => clips.push(c),
            Err(e) => {
                log::warn!("skipping {}: {e}", dir.display());
                failures.push(ClipLoadFailure {
                    clip_dir: dir.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                    class: e.class().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok((clips, failures))
}

pub fn write_clip_dir(clip: &SpeechClip, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
    let words = WordsFile { speaker_id: clip.speaker_id, words: clip.words.clone(), fps: Some(clip.poses.fps) };
    let path = dir.join("words.json");
    fs::write(&path, serde_json::to_string_pretty(&words)?).map_err(Error::at_path(&path))?;
    write_wav(&clip.audio, &dir.join("audio.wav"))?;
    write_pose_csv(&clip.poses, &dir.join("poses.csv"))
}

pub fn write_corpus_dir(clips: &[SpeechClip], root: &Path) -> Result<()> {
    for clip in clips {
        write_clip_dir(clip, &root.join(&clip.clip_id))?;
    }
    Ok(())
}
