//! Text, audio and speaker-identity encoders.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use super::nn::{device, leaky_relu, Conv1d, Embedding, Linear, ParamStore};
use crate::corpus::PaddedWordSeq;
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Word index: 0 is the padding token, 1 the unknown word, then the training
/// words in sorted order. Lookup is case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        Self::from_words(words)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = words.into_iter().map(|w| w.to_lowercase()).collect();
        Self::from_words(set.into_iter().collect())
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32 + 2)).collect();
        Self { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(&word.to_lowercase()).copied().unwrap_or(UNK_ID)
    }

    pub fn ids(&self, seq: &PaddedWordSeq) -> Vec<u32> {
        seq.tokens.iter().map(|t| t.as_deref().map_or(PAD_ID, |w| self.id(w))).collect()
    }
}

/// Reads whitespace-separated `word v1 … vD` lines (fastText `.vec` style; a
/// leading `count dim` header line is skipped).
pub fn load_pretrained_embeddings(path: &Path, dim: usize) -> Result<HashMap<String, Vec<f32>>> {
    let text = fs::read_to_string(path).map_err(Error::at_path(path))?;
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Vec<f32> = parts
            .map(|p| p.parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidInput(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if n == 0 && values.len() == 1 {
            continue;
        }
        if values.len() != dim {
            return Err(Error::InvalidInput(format!(
                "{}:{}: expected {dim} values, found {}",
                path.display(),
                n + 1,
                values.len()
            )));
        }
        out.insert(word.to_lowercase(), values);
    }
    Ok(out)
}

pub const TEXT_DILATIONS: [usize; 4] = [1, 2, 4, 8];
/// Tokens seen by one text feature: 1 + Σ dilation·(kernel − 1).
pub const TEXT_RECEPTIVE_FIELD: usize = 16;
const TEXT_PAD_LEFT: usize = TEXT_RECEPTIVE_FIELD / 2;
const TEXT_PAD_RIGHT: usize = TEXT_RECEPTIVE_FIELD - 1 - TEXT_PAD_LEFT;

/// Word embeddings followed by four dilated convolutions of width 2. The
/// sequence is zero-padded once up front so every layer is a valid
/// convolution and feature `i` sees tokens `i − 8 ..= i + 7`.
#[derive(Clone)]
pub struct TextEncoder {
    emb: Embedding,
    convs: Vec<Conv1d>,
}

impl TextEncoder {
    pub fn new(
        ps: &mut ParamStore,
        vocab: &Vocabulary,
        emb_dim: usize,
        out_dim: usize,
        pretrained: Option<&HashMap<String, Vec<f32>>>,
    ) -> Result<Self> {
        let emb = match pretrained {
            None => Embedding::new(ps, "text.embedding", vocab.len(), emb_dim)?,
            Some(table) => {
                // random rows for words without a pretrained vector
                let base = Embedding::new(&mut ParamStore::new(0x7e47), "e", vocab.len(), emb_dim)?;
                let ids = Tensor::arange(0u32, vocab.len() as u32, &device())?.reshape((1, vocab.len()))?;
                let mut values = base.forward(&ids)?.flatten_all()?.to_vec1::<f32>()?;
                for (i, w) in vocab.words().iter().enumerate() {
                    if let Some(v) = table.get(w) {
                        let row = (i + 2) * emb_dim;
                        values[row..row + emb_dim].copy_from_slice(v);
                    }
                }
                Embedding::from_values(ps, "text.embedding", vocab.len(), emb_dim, values)?
            }
        };
        let mut convs = Vec::new();
        let mut c_in = emb_dim;
        for (k, &d) in TEXT_DILATIONS.iter().enumerate() {
            convs.push(Conv1d::new(ps, &format!("text.conv{k}"), c_in, out_dim, 2, 1, 0, d)?);
            c_in = out_dim;
        }
        Ok(Self { emb, convs })
    }

    /// `(b, t)` u32 ids → `(b, t, out_dim)`.
    pub fn forward(&self, ids: &Tensor) -> Result<Tensor> {
        let x = self.emb.forward(ids)?.transpose(1, 2)?;
        let mut x = x.pad_with_zeros(2, TEXT_PAD_LEFT, TEXT_PAD_RIGHT)?;
        for (k, conv) in self.convs.iter().enumerate() {
            x = conv.forward(&x)?;
            if k + 1 < self.convs.len() {
                x = leaky_relu(&x)?;
            }
        }
        Ok(x.transpose(1, 2)?.contiguous()?)
    }
}

const AUDIO_CHANNELS: [usize; 5] = [16, 32, 32, 32, 32];
const AUDIO_KERNELS: [usize; 5] = [8, 8, 8, 8, 15];
const AUDIO_STRIDES: [usize; 5] = [4, 4, 4, 4, 1];

/// Raw-waveform encoder: four strided convolutions (total stride 256) and a
/// wide fifth layer, read out at the position nearest each frame centre.
#[derive(Clone)]
pub struct AudioEncoder {
    convs: Vec<Conv1d>,
}

/// Layer-4 stride and receptive field in samples.
const AUDIO_L4_STRIDE: usize = 256;
const AUDIO_L4_FIELD: usize = 8 + 7 * 4 + 7 * 16 + 7 * 64;
const AUDIO_L5_HALF: usize = 7;

impl AudioEncoder {
    pub fn new(ps: &mut ParamStore, out_dim: usize) -> Result<Self> {
        let mut convs = Vec::new();
        let mut c_in = 1;
        for k in 0..5 {
            let c_out = if k == 4 { out_dim } else { AUDIO_CHANNELS[k] };
            let pad = if k == 4 { AUDIO_L5_HALF } else { 0 };
            convs.push(Conv1d::new(ps, &format!("audio.conv{k}"), c_in, c_out, AUDIO_KERNELS[k], AUDIO_STRIDES[k], pad, 1)?);
            c_in = c_out;
        }
        Ok(Self { convs })
    }

    fn layer4_len(n_samples: usize) -> usize {
        let mut l = n_samples;
        for k in 0..4 {
            l = (l.saturating_sub(AUDIO_KERNELS[k])) / AUDIO_STRIDES[k] + 1;
        }
        l
    }

    /// Output position read for each of `t` frames.
    pub fn positions(n_samples: usize, t: usize) -> Vec<usize> {
        let last = Self::layer4_len(n_samples) - 1;
        (0..t)
            .map(|i| {
                let centre = (i as f64 + 0.5) * n_samples as f64 / t as f64;
                let q = ((centre - (AUDIO_L4_FIELD as f64 - 1.0) / 2.0) / AUDIO_L4_STRIDE as f64).round();
                (q.max(0.0) as usize).min(last)
            })
            .collect()
    }

    /// Half-open sample interval that can influence feature `i`.
    pub fn receptive_interval(n_samples: usize, t: usize, i: usize) -> (i64, i64) {
        let q = Self::positions(n_samples, t)[i] as i64;
        let half = AUDIO_L5_HALF as i64;
        let s = AUDIO_L4_STRIDE as i64;
        ((q - half) * s, (q + half) * s + AUDIO_L4_FIELD as i64)
    }

    /// `(b, n_samples)` → `(b, t, out_dim)`.
    pub fn forward(&self, audio: &Tensor, t: usize) -> Result<Tensor> {
        let (b, n) = audio.dims2()?;
        let min_len = AUDIO_L4_FIELD;
        if n < min_len {
            return Err(Error::Shape(format!("audio window of {n} samples is shorter than {min_len}")));
        }
        let mut x = audio.reshape((b, 1, n))?;
        for (k, conv) in self.convs.iter().enumerate() {
            x = conv.forward(&x)?;
            if k < 4 {
                x = leaky_relu(&x)?;
            }
        }
        let pos: Vec<u32> = Self::positions(n, t).into_iter().map(|p| p as u32).collect();
        let idx = Tensor::from_vec(pos, t, &device())?;
        Ok(x.index_select(&idx, 2)?.transpose(1, 2)?.contiguous()?)
    }
}

/// One-hot speaker ID → hidden layer → (mean, log-variance).
#[derive(Clone)]
pub struct StyleEncoder {
    fc: Linear,
    mean: Linear,
    logvar: Linear,
    pub n_speakers: usize,
}

impl StyleEncoder {
    pub fn new(ps: &mut ParamStore, n_speakers: usize, hidden: usize, style_dim: usize) -> Result<Self> {
        Ok(Self {
            fc: Linear::new(ps, "style.fc", n_speakers, hidden)?,
            mean: Linear::new(ps, "style.mean", hidden, style_dim)?,
            logvar: Linear::new(ps, "style.logvar", hidden, style_dim)?,
            n_speakers,
        })
    }

    pub fn one_hot(&self, ids: &[usize]) -> Result<Tensor> {
        let mut v = vec![0f32; ids.len() * self.n_speakers];
        for (r, &id) in ids.iter().enumerate() {
            if id >= self.n_speakers {
                return Err(Error::SpeakerOutOfRange { id, count: self.n_speakers });
            }
            v[r * self.n_speakers + id] = 1.0;
        }
        Ok(Tensor::from_vec(v, (ids.len(), self.n_speakers), &device())?)
    }

    /// `(mean, log_variance)`, each `(b, style_dim)`.
    pub fn forward(&self, ids: &[usize]) -> Result<(Tensor, Tensor)> {
        let h = leaky_relu(&self.fc.forward(&self.one_hot(ids)?)?)?;
        Ok((self.mean.forward(&h)?, self.logvar.forward(&h)?))
    }
}

/// Sum of the forward and backward halves of a bidirectional output.
pub(crate) fn sum_directions(x: &Tensor, hidden: usize) -> Result<Tensor> {
    Ok((x.narrow(D::Minus1, 0, hidden)? + x.narrow(D::Minus1, hidden, hidden)?)?)
}
