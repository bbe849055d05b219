//! Fréchet Gesture Distance: an autoencoder's latent features of real and
//! generated windows, a Gaussian fitted to each set, and the Fréchet
//! distance between the two Gaussians. Also the coordinate baselines MAEJ
//! and acceleration MAE.

mod extractor;

pub use extractor::{column_variances, ExtractorConfig, ExtractorTrainReport, FeatureExtractor};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{DirVecSequence, PoseSequence};

/// Regularization added to both covariances when the product root fails.
pub const COV_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn is_finite(&self) -> bool {
        self.mean.iter().chain(self.covariance.iter()).all(|v| v.is_finite())
    }
}

/// Sample mean and unbiased covariance of the rows of `features` (N × D).
pub fn gaussian_stats(features: &DMatrix<f64>) -> Result<GaussianStats> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 feature rows, got {n}")));
    }
    let mean = features.row_mean().transpose();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let covariance = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats { mean, covariance })
}

fn symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `Tr((Σa Σb)^{1/2})`, computed as the trace of the root of the symmetric
/// PSD matrix `Σa^{1/2} Σb Σa^{1/2}`, which has the same spectrum as the
/// product. `None` when that matrix has clearly negative or non-finite
/// eigenvalues.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let ea = SymmetricEigen::new(symmetric(a));
    let root_a = &ea.eigenvectors
        * DMatrix::from_diagonal(&ea.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * ea.eigenvectors.transpose();
    let m = symmetric(&(&root_a * b * &root_a));
    let lambdas = SymmetricEigen::new(m).eigenvalues;
    if lambdas.iter().any(|l| !l.is_finite()) {
        return None;
    }
    let scale = lambdas.iter().fold(1.0f64, |s, l| s.max(l.abs()));
    if lambdas.iter().any(|&l| l < -1e-9 * scale) {
        return None;
    }
    // eigenvalues at round-off level are zero; their square roots would not be
    let floor = 1e-12 * scale;
    Some(lambdas.iter().filter(|&&l| l > floor).map(|l| l.sqrt()).sum())
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^{1/2})`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d || a.covariance.shape() != (d, d) || b.covariance.shape() != (d, d) {
        return Err(Error::Shape(format!("Gaussian dimensions differ: {} vs {}", d, b.dim())));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Numeric("non-finite Gaussian statistics".into()));
    }
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let (ca, cb) = (&a.covariance, &b.covariance);
    let tr = match trace_sqrt_product(ca, cb) {
        Some(t) => t,
        None => {
            log::warn!("covariance product root is not real; retrying with {COV_EPS} regularization");
            let eps = DMatrix::identity(d, d) * COV_EPS;
            trace_sqrt_product(&(ca + &eps), &(cb + &eps))
                .ok_or_else(|| Error::Numeric("matrix square root failed after regularization".into()))?
        }
    };
    let dist = mean_term + ca.trace() + cb.trace() - 2.0 * tr;
    if dist < 0.0 && dist > -1e-8 {
        return Ok(0.0);
    }
    if !dist.is_finite() || dist < 0.0 {
        return Err(Error::Numeric(format!("Fréchet distance evaluated to {dist}")));
    }
    Ok(dist)
}

/// FGD between two window sets under `extractor`.
pub fn fgd(real: &[DirVecSequence], generated: &[DirVecSequence], extractor: &FeatureExtractor) -> Result<f64> {
    if real.len() < 2 || generated.len() < 2 {
        return Err(Error::InvalidInput("FGD needs at least 2 sequences per set".into()));
    }
    let r = gaussian_stats(&extractor.extract_features(real)?)?;
    let g = gaussian_stats(&extractor.extract_features(generated)?)?;
    frechet_distance(&r, &g)
}

fn check_pairs(reference: &[PoseSequence], candidate: &[PoseSequence]) -> Result<()> {
    if reference.len() != candidate.len() {
        return Err(Error::Shape(format!("{} reference vs {} candidate sequences", reference.len(), candidate.len())));
    }
    for (i, (r, c)) in reference.iter().zip(candidate).enumerate() {
        if r.len() != c.len() {
            return Err(Error::Shape(format!("pair {i}: {} vs {} frames", r.len(), c.len())));
        }
    }
    if reference.is_empty() {
        return Err(Error::InvalidInput("empty sequence sets".into()));
    }
    Ok(())
}

/// Mean absolute joint-coordinate error over all pairs, frames, joints and axes.
pub fn maej(reference: &[PoseSequence], candidate: &[PoseSequence]) -> Result<f64> {
    check_pairs(reference, candidate)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (r, c) in reference.iter().zip(candidate) {
        for (fr, fc) in r.frames.iter().zip(&c.frames) {
            for (jr, jc) in fr.iter().zip(fc) {
                for a in 0..3 {
                    sum += (jr[a] - jc[a]).abs();
                    n += 1;
                }
            }
        }
    }
    Ok(sum / n as f64)
}

/// Mean absolute difference of second temporal differences.
pub fn mae_accel(reference: &[PoseSequence], candidate: &[PoseSequence]) -> Result<f64> {
    check_pairs(reference, candidate)?;
    if let Some(s) = reference.iter().find(|s| s.len() < 3) {
        return Err(Error::InsufficientFrames { needed: 3, got: s.len() });
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (r, c) in reference.iter().zip(candidate) {
        for i in 1..r.len() - 1 {
            for j in 0..r.frames[i].len() {
                for a in 0..3 {
                    let acc = |s: &PoseSequence| s.frames[i + 1][j][a] - 2.0 * s.frames[i][j][a] + s.frames[i - 1][j][a];
                    sum += (acc(r) - acc(c)).abs();
                    n += 1;
                }
            }
        }
    }
    Ok(sum / n as f64)
}

/// Metrics of one generated set against its paired real set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fgd: f64,
    pub maej: f64,
    pub mae_accel: f64,
    pub n_real: usize,
    pub n_generated: usize,
    pub extractor_id: String,
}
