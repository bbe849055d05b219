//! Procedural fixture corpus: speech-like harmonic audio, a word timeline and
//! upper-body motion driven by the same timeline. Each speaker has its own
//! motion amplitude, handedness and bone proportions.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Audio, SpeechClip, TimedWord, SAMPLE_RATE};
use crate::pose::{
    add, norm, scale, PoseSequence, Skeleton, Vec3, BONES, DEFAULT_FPS, NUM_BONES, NUM_JOINTS,
};
use crate::rng::{indexed_seed, rng_from, sub_seed, Rng};

const FILLER: [&str; 40] = [
    "the", "a", "and", "so", "this", "that", "is", "was", "of", "to", "in", "it", "what", "when",
    "people", "think", "about", "really", "just", "very", "time", "know", "going", "make", "thing",
    "idea", "change", "year", "story", "little", "few", "many", "good", "new", "work", "look",
    "here", "there", "then", "because",
];
const WIDE: [&str; 6] = ["big", "huge", "all", "everything", "world", "hundreds"];
const DEICTIC: [&str; 5] = ["i", "me", "my", "we", "us"];
const RAISE: [&str; 4] = ["up", "high", "rise", "top"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WordKind {
    Filler,
    Wide,
    Deictic,
    Raise,
}

fn word_kind(text: &str) -> WordKind {
    if WIDE.contains(&text) {
        WordKind::Wide
    } else if DEICTIC.contains(&text) {
        WordKind::Deictic
    } else if RAISE.contains(&text) {
        WordKind::Raise
    } else {
        WordKind::Filler
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_clips: usize,
    /// Defaults to one speaker per clip.
    pub n_speakers: Option<usize>,
    pub clip_seconds: f64,
    pub fps: f64,
    pub sample_rate: u32,
}

impl SyntheticConfig {
    pub fn new(n_clips: usize) -> Self {
        Self { n_clips, n_speakers: None, clip_seconds: 12.0, fps: DEFAULT_FPS, sample_rate: SAMPLE_RATE }
    }
}

/// Ground-truth style parameters of a synthetic speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerStyle {
    pub amplitude: f64,
    pub right_gain: f64,
    pub left_gain: f64,
    pub pitch_hz: f64,
    pub bone_scale: [f64; NUM_BONES],
}

/// Amplitudes are an evenly spaced ladder over [0.35, 1.35] assigned by a
/// seeded permutation, so any two speakers differ noticeably.
pub fn speaker_style(seed: u64, speaker: usize, n_speakers: usize) -> SpeakerStyle {
    let mut ladder: Vec<usize> = (0..n_speakers).collect();
    ladder.shuffle(&mut rng_from(sub_seed(seed, "amplitude_ladder")));
    let rank = ladder[speaker] as f64;
    let amplitude = if n_speakers > 1 { 0.35 + rank / (n_speakers - 1) as f64 } else { 0.85 };

    let mut rng = rng_from(indexed_seed(seed, "speaker_style", speaker as u64));
    let (right_gain, left_gain) = match speaker % 3 {
        0 => (1.0, 1.0),
        1 => (1.0, 0.4),
        _ => (0.4, 1.0),
    };
    let pitch_hz = rng.random_range(95.0..230.0);
    let mut bone_scale = [1.0; NUM_BONES];
    for s in bone_scale.iter_mut() {
        *s = rng.random_range(0.95..1.05);
    }
    // keep the body symmetric
    for (r, l) in [(3, 4), (5, 6), (7, 8)] {
        bone_scale[l] = bone_scale[r];
    }
    SpeakerStyle { amplitude, right_gain, left_gain, pitch_hz, bone_scale }
}

pub fn make_synthetic_corpus(n_clips: usize, seed: u64) -> Vec<SpeechClip> {
    make_synthetic_corpus_with(&SyntheticConfig::new(n_clips), seed)
}

pub fn make_synthetic_corpus_with(cfg: &SyntheticConfig, seed: u64) -> Vec<SpeechClip> {
    let n_speakers = cfg.n_speakers.unwrap_or(cfg.n_clips).max(1);
    (0..cfg.n_clips)
        .map(|i| {
            let speaker = i % n_speakers;
            let style = speaker_style(seed, speaker, n_speakers);
            let mut rng = rng_from(indexed_seed(seed, "synthetic_clip", i as u64));
            let words = word_timeline(&mut rng, cfg.clip_seconds);
            let audio = render_audio(&mut rng, &words, &style, cfg);
            let poses = render_motion(&mut rng, &words, &style, cfg);
            SpeechClip {
                clip_id: format!("clip{i:03}"),
                speaker_id: speaker,
                words: words.into_iter().map(|w| w.word).collect(),
                audio,
                poses,
            }
        })
        .collect()
}

struct SpokenWord {
    word: TimedWord,
    stress: f64,
    formant: f64,
}

fn word_timeline(rng: &mut Rng, duration: f64) -> Vec<SpokenWord> {
    let mut out = Vec::new();
    let mut t = rng.random_range(0.1..0.4);
    let mut phrase_left: usize = rng.random_range(4..10);
    loop {
        let roll: f64 = rng.random();
        let text = if roll < 0.1 {
            WIDE[rng.random_range(0..WIDE.len())]
        } else if roll < 0.2 {
            DEICTIC[rng.random_range(0..DEICTIC.len())]
        } else if roll < 0.27 {
            RAISE[rng.random_range(0..RAISE.len())]
        } else {
            FILLER[rng.random_range(0..FILLER.len())]
        };
        let len = 0.12 + 0.045 * text.len() as f64 + rng.random_range(0.0..0.1);
        if t + len > duration - 0.05 {
            break;
        }
        let formant = 300.0 + 60.0 * (text.bytes().map(u32::from).sum::<u32>() % 17) as f64;
        out.push(SpokenWord {
            word: TimedWord { text: text.to_string(), start: t, end: t + len },
            stress: rng.random_range(0.55..1.0),
            formant,
        });
        t += len + rng.random_range(0.04..0.14);
        phrase_left -= 1;
        if phrase_left == 0 {
            t += rng.random_range(0.35..1.1);
            phrase_left = rng.random_range(4..10);
        }
    }
    out
}

fn envelope(t: f64, start: f64, end: f64) -> f64 {
    if t <= start || t >= end {
        return 0.0;
    }
    let ramp = ((end - start) * 0.25).min(0.04);
    let a = ((t - start) / ramp).min(1.0);
    let b = ((end - t) / ramp).min(1.0);
    a.min(b)
}

fn render_audio(rng: &mut Rng, words: &[SpokenWord], style: &SpeakerStyle, cfg: &SyntheticConfig) -> Audio {
    let sr = cfg.sample_rate as f64;
    let n = (cfg.clip_seconds * sr).round() as usize;
    let hiss = Normal::new(0.0, 0.004).unwrap();
    let mut samples: Vec<f32> = (0..n).map(|_| hiss.sample(rng) as f32).collect();
    for w in words {
        let first = (w.word.start * sr).floor() as usize;
        let last = ((w.word.end * sr).ceil() as usize).min(n);
        let f0 = style.pitch_hz * (1.0 + 0.15 * (w.stress - 0.75));
        for (k, s) in samples.iter_mut().enumerate().take(last).skip(first) {
            let t = k as f64 / sr;
            let env = envelope(t, w.word.start, w.word.end) * w.stress * 0.45;
            if env == 0.0 {
                continue;
            }
            let local = t - w.word.start;
            let glide = 1.0 + 0.05 * (2.0 * PI * 3.0 * local).sin();
            let mut v = 0.0;
            for h in 1..=5 {
                let f = f0 * h as f64 * glide;
                // crude formant emphasis
                let gain = 1.0 / h as f64 * (1.0 + 1.5 * (-((f - w.formant) / 150.0).powi(2)).exp());
                v += gain * (2.0 * PI * f * local).sin();
            }
            *s += (env * v * 0.5) as f32;
        }
    }
    Audio { samples, sample_rate: cfg.sample_rate }
}

/// Smooth random drift: AR(1) noise, one value per frame.
fn drift(rng: &mut Rng, n: usize, sigma: f64) -> Vec<f64> {
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x = 0.85 * x + noise.sample(rng);
            x
        })
        .collect()
}

fn gauss(x: f64, mu: f64, width: f64) -> f64 {
    (-((x - mu) / width).powi(2)).exp()
}

fn arm_dir(side: f64, abduction: f64, flexion: f64) -> Vec3 {
    let v = [side * abduction.sin(), -abduction.cos() * flexion.cos(), abduction.cos() * flexion.sin()];
    scale(v, 1.0 / norm(v))
}

fn render_motion(rng: &mut Rng, words: &[SpokenWord], style: &SpeakerStyle, cfg: &SyntheticConfig) -> PoseSequence {
    let n = (cfg.clip_seconds * cfg.fps).round() as usize;
    let std = Skeleton::standard();
    let mut lengths = [0.0; NUM_BONES];
    for (b, l) in lengths.iter_mut().enumerate() {
        *l = std.bone_lengths[b] * style.bone_scale[b];
    }
    let jitter: Vec<Vec<f64>> = (0..8).map(|_| drift(rng, n, 0.02)).collect();
    let sway_phase: f64 = rng.random_range(0.0..2.0 * PI);
    let sway_period: f64 = rng.random_range(2.5..4.5);
    // small independent head and shoulder motion; real poses never hold these rigid
    let settle: Vec<Vec<f64>> = (0..6).map(|_| drift(rng, n, 0.01)).collect();

    let frames = (0..n)
        .map(|i| {
            let t = i as f64 / cfg.fps;
            let (mut act, mut beat, mut wide, mut deictic, mut raise) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for w in words {
                let (s, e) = (w.word.start, w.word.end);
                if t < s - 1.0 || t > e + 1.0 {
                    continue;
                }
                act += w.stress * gauss(t, 0.5 * (s + e), 0.5 * (e - s) + 0.2);
                beat += w.stress * gauss(t, s + 0.1, 0.1);
                let hold = gauss(t, 0.5 * (s + e), 0.45);
                match word_kind(&w.word.text) {
                    WordKind::Wide => wide += hold,
                    WordKind::Deictic => deictic += hold,
                    WordKind::Raise => raise += hold,
                    WordKind::Filler => {}
                }
            }
            let act = act.min(1.5);
            let sway = (2.0 * PI * t / sway_period + sway_phase).sin();
            let sway2 = (2.0 * PI * t / (sway_period * 1.7) + 0.5 * sway_phase).cos();

            let mut d = [[0.0; 3]; NUM_BONES];
            d[0] = unit([0.04 * sway + jitter[0][i], 1.0, 0.03 * sway2]);
            d[1] = unit([0.05 * sway2, 0.55, 0.8 + 0.15 * beat.min(1.0) * style.amplitude + jitter[1][i]]);
            d[2] = unit([settle[0][i], 1.0, -0.3 + settle[1][i]]);
            let shrug = 0.08 * raise.min(1.0) * style.amplitude;
            d[3] = unit([-1.0, 0.05 + shrug + settle[2][i], settle[3][i]]);
            d[4] = unit([1.0, 0.05 + shrug + settle[4][i], settle[5][i]]);

            for (side, gain, upper, lower, j) in
                [(-1.0, style.right_gain, 5, 7, 2), (1.0, style.left_gain, 6, 8, 5)]
            {
                let g = style.amplitude * gain;
                let abduction = 0.12 + g * (0.25 * act + 0.9 * wide - 0.25 * deictic) + 0.04 * sway + jitter[j][i];
                let flexion = 0.2 + g * (0.55 * act + 0.5 * beat + 0.5 * deictic + 1.4 * raise)
                    + 0.04 * sway2
                    + jitter[j + 1][i];
                let elbow = 0.35 + g * (0.6 * beat + 1.1 * deictic + 0.3 * act) + jitter[j + 2][i];
                d[upper] = arm_dir(side, abduction.max(0.0), flexion);
                d[lower] = arm_dir(side, (0.8 * abduction - 0.5 * g * deictic).max(-0.6), flexion + elbow);
            }

            let mut p = [[0.0; 3]; NUM_JOINTS];
            for (b, &(parent, child)) in BONES.iter().enumerate() {
                p[child] = add(p[parent], scale(d[b], lengths[b]));
            }
            p
        })
        .collect();
    PoseSequence { frames, fps: cfg.fps }
}

fn unit(v: Vec3) -> Vec3 {
    scale(v, 1.0 / norm(v))
}
