//! Convolutional autoencoder over 34-frame directional-vector windows. The
//! encoder half is the FGD feature extractor.

use std::path::Path;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::corpus::WINDOW_FRAMES;
use crate::error::{Error, Result};
use crate::model::nn::{device, leaky_relu, Conv1d, Linear, ParamStore};
use crate::pose::{DirVecSequence, DIRVEC_DIM};
use crate::rng::{indexed_seed, rng_from, sub_seed};

const FORMAT: &str = "gesture-extractor/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub latent_dim: usize,
    pub channels: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_sequences: usize,
    pub seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            channels: 64,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            min_sequences: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorTrainReport {
    pub initial_mse: f64,
    pub final_mse: f64,
    pub epoch_mse: Vec<f64>,
    pub n_sequences: usize,
}

/// Frame count after the two stride-2 layers: 34 → 17 → 9.
const MID_FRAMES: usize = WINDOW_FRAMES / 2;
const LOW_FRAMES: usize = MID_FRAMES / 2 + 1;

pub struct FeatureExtractor {
    pub config: ExtractorConfig,
    pub params: ParamStore,
    enc: [Conv1d; 4],
    enc_fc: Linear,
    dec_fc: Linear,
    dec: [Conv1d; 3],
}

impl FeatureExtractor {
    pub fn new(config: ExtractorConfig) -> Result<Self> {
        if config.latent_dim == 0 || config.channels == 0 || config.batch_size == 0 {
            return Err(Error::InvalidInput("extractor sizes must be positive".into()));
        }
        let c = config.channels;
        let l = config.latent_dim;
        let mut ps = ParamStore::new(sub_seed(config.seed, "extractor-init"));
        let enc = [
            Conv1d::new(&mut ps, "enc.conv0", DIRVEC_DIM, c, 3, 1, 1, 1)?,
            Conv1d::new(&mut ps, "enc.conv1", c, c, 4, 2, 1, 1)?,
            Conv1d::new(&mut ps, "enc.conv2", c, c, 3, 2, 1, 1)?,
            Conv1d::new(&mut ps, "enc.conv3", c, l, 3, 1, 1, 1)?,
        ];
        let enc_fc = Linear::new(&mut ps, "enc.fc", l * LOW_FRAMES, l)?;
        let dec_fc = Linear::new(&mut ps, "dec.fc", l, c * MID_FRAMES)?;
        let dec = [
            Conv1d::new(&mut ps, "dec.conv0", c, c, 3, 1, 1, 1)?,
            Conv1d::new(&mut ps, "dec.conv1", c, c, 3, 1, 1, 1)?,
            Conv1d::new(&mut ps, "dec.conv2", c, DIRVEC_DIM, 3, 1, 1, 1)?,
        ];
        Ok(Self { config, params: ps, enc, enc_fc, dec_fc, dec })
    }

    /// `(b, 34, 27)` → `(b, latent)`.
    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let b = x.dim(0)?;
        let mut h = x.transpose(1, 2)?.contiguous()?;
        for (k, conv) in self.enc.iter().enumerate() {
            h = conv.forward(&h)?;
            if k + 1 < self.enc.len() {
                h = leaky_relu(&h)?;
            }
        }
        self.enc_fc.forward(&h.reshape((b, ()))?)
    }

    /// `(b, latent)` → `(b, 34, 27)`.
    fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let b = z.dim(0)?;
        let h = leaky_relu(&self.dec_fc.forward(z)?)?.reshape((b, self.config.channels, MID_FRAMES))?;
        let mut h = h.upsample_nearest1d(WINDOW_FRAMES)?;
        for (k, conv) in self.dec.iter().enumerate() {
            h = conv.forward(&h)?;
            if k + 1 < self.dec.len() {
                h = leaky_relu(&h)?;
            }
        }
        Ok(h.transpose(1, 2)?.contiguous()?)
    }

    fn batch(seqs: &[&DirVecSequence]) -> Result<Tensor> {
        let mut v = Vec::with_capacity(seqs.len() * WINDOW_FRAMES * DIRVEC_DIM);
        for s in seqs {
            v.extend(s.to_flat_f32());
        }
        Ok(Tensor::from_vec(v, (seqs.len(), WINDOW_FRAMES, DIRVEC_DIM), &device())?)
    }

    fn check_lengths(seqs: &[DirVecSequence]) -> Result<()> {
        if let Some((i, s)) = seqs.iter().enumerate().find(|(_, s)| s.len() != WINDOW_FRAMES) {
            return Err(Error::Shape(format!("sequence {i} has {} frames, expected {WINDOW_FRAMES}", s.len())));
        }
        Ok(())
    }

    /// Latent features, one row per input sequence.
    pub fn extract_features(&self, seqs: &[DirVecSequence]) -> Result<DMatrix<f64>> {
        Self::check_lengths(seqs)?;
        let l = self.config.latent_dim;
        let mut out = Vec::with_capacity(seqs.len() * l);
        for chunk in seqs.chunks(256) {
            let refs: Vec<&DirVecSequence> = chunk.iter().collect();
            let z = self.encode(&Self::batch(&refs)?)?;
            out.extend(z.flatten_all()?.to_vec1::<f32>()?.into_iter().map(f64::from));
        }
        Ok(DMatrix::from_row_slice(seqs.len(), l, &out))
    }

    /// Reconstructions of `seqs` through the full autoencoder.
    pub fn reconstruct(&self, seqs: &[DirVecSequence]) -> Result<Vec<DirVecSequence>> {
        Self::check_lengths(seqs)?;
        let refs: Vec<&DirVecSequence> = seqs.iter().collect();
        let y = self.decode(&self.encode(&Self::batch(&refs)?)?)?;
        let flat = y.flatten_all()?.to_vec1::<f32>()?;
        flat.chunks(WINDOW_FRAMES * DIRVEC_DIM)
            .map(|c| DirVecSequence::from_flat_f32(c, seqs[0].fps))
            .collect()
    }

    fn mse(&self, x: &Tensor) -> Result<Tensor> {
        Ok((self.decode(&self.encode(x)?)? - x)?.sqr()?.mean_all()?)
    }

    /// Mean reconstruction MSE over `seqs`.
    pub fn reconstruction_mse(&self, seqs: &[DirVecSequence]) -> Result<f64> {
        Self::check_lengths(seqs)?;
        let mut sum = 0.0;
        for chunk in seqs.chunks(256) {
            let refs: Vec<&DirVecSequence> = chunk.iter().collect();
            let x = Self::batch(&refs)?;
            sum += self.mse(&x)?.to_scalar::<f32>()? as f64 * chunk.len() as f64;
        }
        Ok(sum / seqs.len() as f64)
    }

    /// Trains a fresh autoencoder on `seqs` to minimize reconstruction MSE.
    pub fn train(config: ExtractorConfig, seqs: &[DirVecSequence]) -> Result<(Self, ExtractorTrainReport)> {
        if seqs.len() < config.min_sequences {
            return Err(Error::InvalidInput(format!(
                "extractor training needs at least {} sequences, got {}",
                config.min_sequences,
                seqs.len()
            )));
        }
        Self::check_lengths(seqs)?;
        let model = Self::new(config)?;
        let cfg = model.config.clone();
        let initial_mse = model.reconstruction_mse(seqs)?;
        let params = ParamsAdamW { lr: cfg.learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 };
        let mut opt = AdamW::new(model.params.vars_with_prefix(&["enc.", "dec."]), params)?;
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        let mut epoch_mse = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng_from(indexed_seed(cfg.seed, "extractor-shuffle", epoch as u64)));
            let (mut sum, mut n) = (0.0, 0usize);
            for idx in order.chunks(cfg.batch_size) {
                let refs: Vec<&DirVecSequence> = idx.iter().map(|&i| &seqs[i]).collect();
                let loss = model.mse(&Self::batch(&refs)?)?;
                let v = loss.to_scalar::<f32>()? as f64;
                if !v.is_finite() {
                    return Err(Error::Divergence { epoch: epoch + 1, step: n, detail: format!("reconstruction loss {v}") });
                }
                opt.backward_step(&loss)?;
                sum += v * idx.len() as f64;
                n += idx.len();
            }
            epoch_mse.push(sum / n as f64);
            log::info!("extractor epoch {}: mse {:.6}", epoch + 1, sum / n as f64);
        }
        let final_mse = model.reconstruction_mse(seqs)?;
        let report = ExtractorTrainReport { initial_mse, final_mse, epoch_mse, n_sequences: seqs.len() };
        Ok((model, report))
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut a = Archive::new(serde_json::json!({ "format": FORMAT, "config": self.config }));
        self.params.write_to(&mut a)?;
        Ok(a)
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        if a.header.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
            return Err(Error::Checkpoint("not a feature-extractor checkpoint".into()));
        }
        let config: ExtractorConfig = serde_json::from_value(a.header["config"].clone())?;
        let m = Self::new(config)?;
        m.params.read_from(a)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}

/// Per-dimension variance of a feature matrix, used to detect collapse.
pub fn column_variances(f: &DMatrix<f64>) -> Vec<f64> {
    let n = f.nrows() as f64;
    f.column_iter()
        .map(|c| {
            let m = c.mean();
            c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
        })
        .collect()
}
