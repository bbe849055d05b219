//! Synthetic disturbances of real gesture windows and the metric-validation
//! runner that measures how FGD, MAEJ and acceleration MAE respond to them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fgd::{fgd, mae_accel, maej, FeatureExtractor};
use crate::pose::{coords_to_dirvecs, PoseSequence, Vec3, NUM_JOINTS, POSE_DIM};
use crate::rng::{indexed_seed, rng_from};

/// Offset applied by a salt-and-pepper hit.
pub const SALT_PEPPER_MAGNITUDE: f64 = 0.2;
/// Variance of temporal noise on affected frames.
pub const TEMPORAL_VARIANCE: f64 = 0.003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    SaltPepper,
    Temporal,
    Multiplicative,
    Mismatched,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 5] =
        [Self::Gaussian, Self::SaltPepper, Self::Temporal, Self::Multiplicative, Self::Mismatched];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::SaltPepper => "salt_pepper",
            Self::Temporal => "temporal",
            Self::Multiplicative => "multiplicative",
            Self::Mismatched => "mismatched",
        }
    }

    /// The ζ at which the disturbance is the identity.
    pub fn neutral(self) -> f64 {
        if self == Self::Multiplicative {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownFormat(format!("noise kind {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub zeta: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let z = self.zeta;
        let ok = z.is_finite()
            && z >= 0.0
            && match self.kind {
                NoiseKind::SaltPepper | NoiseKind::Mismatched => z <= 1.0,
                NoiseKind::Temporal => z.fract() == 0.0,
                _ => true,
            };
        if !ok {
            return Err(Error::InvalidInput(format!("ζ = {z} is not valid for {} noise", self.kind)));
        }
        Ok(())
    }
}

fn map_coords(seq: &PoseSequence, mut f: impl FnMut(usize, usize) -> f64) -> PoseSequence {
    let frames = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, fr)| std::array::from_fn::<Vec3, NUM_JOINTS, _>(|j| std::array::from_fn(|a| fr[j][a] + f(i, j * 3 + a))))
        .collect();
    PoseSequence { frames, fps: seq.fps }
}

/// Adds one `N(0, ζ I)` draw to every frame. The underlying standard-normal
/// draw depends only on `seed`, so offsets for different ζ are scaled copies.
pub fn apply_gaussian(seq: &PoseSequence, zeta: f64, seed: u64) -> PoseSequence {
    let mut rng = rng_from(seed);
    let std = zeta.max(0.0).sqrt();
    let x: Vec<f64> = (0..POSE_DIM).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); std * z }).collect();
    map_coords(seq, |_, k| x[k])
}

/// Per-coordinate offsets shared by all frames: +0.2 with probability ζ/2,
/// −0.2 with probability ζ/2.
pub fn apply_salt_pepper(seq: &PoseSequence, zeta: f64, seed: u64) -> PoseSequence {
    map_coords(seq, {
        let x = salt_pepper_offsets(zeta, seed);
        move |_, k| x[k]
    })
}

/// The 30 offsets [`apply_salt_pepper`] adds.
pub fn salt_pepper_offsets(zeta: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    (0..POSE_DIM)
        .map(|_| {
            let u: f64 = rng.random();
            if u < zeta / 2.0 {
                SALT_PEPPER_MAGNITUDE
            } else if u < zeta {
                -SALT_PEPPER_MAGNITUDE
            } else {
                0.0
            }
        })
        .collect()
}

/// Independent `N(0, 0.003 I)` noise on frames `r .. r + ζ`, with `r` drawn
/// uniformly from `0 ..= T − ζ`. Returns the sequence and `r`.
pub fn apply_temporal(seq: &PoseSequence, zeta: usize, seed: u64) -> Result<(PoseSequence, usize)> {
    let t = seq.len();
    if zeta > t {
        return Err(Error::InvalidInput(format!("temporal noise over {zeta} frames exceeds sequence length {t}")));
    }
    if zeta == 0 {
        return Ok((seq.clone(), 0));
    }
    let mut rng = rng_from(seed);
    let r = rng.random_range(0..=t - zeta);
    let std = TEMPORAL_VARIANCE.sqrt();
    let noise: Vec<f64> = (0..zeta * POSE_DIM).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); std * z }).collect();
    let out = map_coords(seq, |i, k| if (r..r + zeta).contains(&i) { noise[(i - r) * POSE_DIM + k] } else { 0.0 });
    Ok((out, r))
}

/// Full-rank PCA basis of flattened poses.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenposeModel {
    pub mean: DVector<f64>,
    /// Columns are principal directions, by decreasing variance.
    pub components: DMatrix<f64>,
    pub variances: DVector<f64>,
    pub fitted_on: String,
}

fn flatten(frame: &[Vec3; NUM_JOINTS]) -> DVector<f64> {
    DVector::from_iterator(POSE_DIM, frame.iter().flatten().copied())
}

fn unflatten(v: &DVector<f64>) -> [Vec3; NUM_JOINTS] {
    std::array::from_fn(|j| std::array::from_fn(|a| v[j * 3 + a]))
}

/// Fits a PCA over the frames of `poses`, keeping all 30 components. The
/// fit is rejected when the covariance rank is below the number of
/// coordinates that actually vary (constant coordinates, such as a centred
/// root joint, are allowed).
pub fn fit_eigenposes(poses: &[PoseSequence], fitted_on: &str) -> Result<EigenposeModel> {
    let frames: Vec<DVector<f64>> = poses.iter().flat_map(|s| s.frames.iter().map(flatten)).collect();
    let n = frames.len();
    if n < POSE_DIM + 1 {
        return Err(Error::InsufficientFrames { needed: POSE_DIM + 1, got: n });
    }
    let mean = frames.iter().fold(DVector::zeros(POSE_DIM), |acc, f| acc + f) / n as f64;
    let mut cov = DMatrix::zeros(POSE_DIM, POSE_DIM);
    for f in &frames {
        let d = f - &mean;
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    let varying = (0..POSE_DIM).filter(|&k| cov[(k, k)] > 1e-12).count();
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let rank = eig.eigenvalues.iter().filter(|&&v| v > 1e-10 * top.max(1e-300)).count();
    if rank < varying || rank == 0 {
        return Err(Error::RankDeficient { rank, needed: varying.max(1) });
    }
    let mut order: Vec<usize> = (0..POSE_DIM).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let components = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    let variances = DVector::from_iterator(POSE_DIM, order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
    Ok(EigenposeModel { mean, components, variances, fitted_on: fitted_on.to_string() })
}

impl EigenposeModel {
    pub fn to_eigen(&self, frame: &[Vec3; NUM_JOINTS]) -> DVector<f64> {
        self.components.transpose() * (flatten(frame) - &self.mean)
    }

    pub fn from_eigen(&self, coeffs: &DVector<f64>) -> [Vec3; NUM_JOINTS] {
        unflatten(&(&self.components * coeffs + &self.mean))
    }
}

/// Scales every eigen coordinate of every frame by ζ.
pub fn apply_multiplicative(seq: &PoseSequence, zeta: f64, model: &EigenposeModel) -> PoseSequence {
    let frames = seq.frames.iter().map(|f| model.from_eigen(&(model.to_eigen(f) * zeta))).collect();
    PoseSequence { frames, fps: seq.fps }
}

/// Re-pairs speech with gestures: a random subset of `round(ζ N)` pairs has
/// its gestures cyclically permuted, so none of them keeps its own. A subset
/// of one is widened to two. Returns the new pairs and, for each, the index
/// of the pair its gesture came from.
pub fn apply_mismatch<S: Clone>(pairs: &[(S, PoseSequence)], zeta: f64, seed: u64) -> Result<(Vec<(S, PoseSequence)>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::InvalidInput(format!("mismatch fraction {zeta} outside [0, 1]")));
    }
    let n = pairs.len();
    let mut m = (zeta * n as f64).round() as usize;
    if m > 0 && n < 2 {
        return Err(Error::InvalidInput("mismatch needs at least two pairs".into()));
    }
    if m == 1 {
        m = 2;
    }
    let mut rng = rng_from(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut chosen = idx[..m].to_vec();
    chosen.sort_unstable();
    // Sattolo's algorithm: a uniformly random single cycle, hence no fixed point
    let mut cycle = chosen.clone();
    for i in (1..cycle.len()).rev() {
        let j = rng.random_range(0..i);
        cycle.swap(i, j);
    }
    let mut source: Vec<usize> = (0..n).collect();
    for (dst, src) in chosen.iter().zip(&cycle) {
        source[*dst] = *src;
    }
    let out = (0..n).map(|i| (pairs[i].0.clone(), pairs[source[i]].1.clone())).collect();
    Ok((out, source))
}

/// ζ values to sweep per noise kind.
pub type NoiseGrid = BTreeMap<NoiseKind, Vec<f64>>;

pub fn default_grid() -> NoiseGrid {
    BTreeMap::from([
        (NoiseKind::Gaussian, vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1]),
        (NoiseKind::SaltPepper, vec![0.0, 0.05, 0.1, 0.2]),
        (NoiseKind::Temporal, vec![0.0, 2.0, 4.0, 8.0]),
        (NoiseKind::Multiplicative, vec![0.0, 0.5, 1.0, 1.5, 2.0]),
        (NoiseKind::Mismatched, vec![0.0, 0.25, 0.5, 1.0]),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub kind: NoiseKind,
    pub zeta: f64,
    pub fgd: f64,
    pub maej: f64,
    pub mae_accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub n_windows: usize,
    pub extractor_id: String,
    /// How noisy coordinates reach the extractor.
    pub conversion: String,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
    }

    /// Rows of one kind, in grid order.
    pub fn curve(&self, kind: NoiseKind) -> Vec<&ValidationRow> {
        self.rows.iter().filter(|r| r.kind == kind).collect()
    }
}

pub const MIN_VALIDATION_WINDOWS: usize = 100;

/// Applies every grid point to all `windows` (joint coordinates) and scores
/// the disturbed set against the clean one. Window `i` uses the same noise
/// seed at every ζ of a kind.
pub fn run_validation(
    windows: &[PoseSequence],
    grid: &NoiseGrid,
    extractor: &FeatureExtractor,
    extractor_id: &str,
    seed: u64,
) -> Result<ValidationReport> {
    if windows.len() < MIN_VALIDATION_WINDOWS {
        return Err(Error::InvalidInput(format!(
            "noise validation needs at least {MIN_VALIDATION_WINDOWS} windows, got {}",
            windows.len()
        )));
    }
    let clean_dirs = windows.iter().map(coords_to_dirvecs).collect::<Result<Vec<_>>>()?;
    let eigen = if grid.contains_key(&NoiseKind::Multiplicative) {
        Some(fit_eigenposes(windows, "validation windows")?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for (&kind, zetas) in grid {
        for &zeta in zetas {
            NoiseSpec { kind, zeta, seed }.validate()?;
            let s = |i: usize| indexed_seed(seed, kind.name(), i as u64);
            let noisy: Vec<PoseSequence> = match kind {
                NoiseKind::Gaussian => windows.iter().enumerate().map(|(i, w)| apply_gaussian(w, zeta, s(i))).collect(),
                NoiseKind::SaltPepper => windows.iter().enumerate().map(|(i, w)| apply_salt_pepper(w, zeta, s(i))).collect(),
                NoiseKind::Temporal => windows
                    .iter()
                    .enumerate()
                    .map(|(i, w)| apply_temporal(w, zeta as usize, s(i)).map(|x| x.0))
                    .collect::<Result<_>>()?,
                NoiseKind::Multiplicative => {
                    let m = eigen.as_ref().expect("fitted above");
                    windows.iter().map(|w| apply_multiplicative(w, zeta, m)).collect()
                }
                NoiseKind::Mismatched => {
                    let pairs: Vec<((), PoseSequence)> = windows.iter().map(|w| ((), w.clone())).collect();
                    apply_mismatch(&pairs, zeta, s(0))?.0.into_iter().map(|p| p.1).collect()
                }
            };
            let dirs = noisy.iter().map(coords_to_dirvecs).collect::<Result<Vec<_>>>()?;
            let row = ValidationRow {
                kind,
                zeta,
                fgd: fgd(&clean_dirs, &dirs, extractor)?,
                maej: maej(windows, &noisy)?,
                mae_accel: mae_accel(windows, &noisy)?,
            };
            log::info!("{kind} ζ={zeta}: fgd {:.5} maej {:.5}", row.fgd, row.maej);
            rows.push(row);
        }
    }
    Ok(ValidationReport {
        seed,
        n_windows: windows.len(),
        extractor_id: extractor_id.to_string(),
        conversion: "noise added to joint coordinates; bones re-derived as unit direction vectors before feature extraction"
            .into(),
        rows,
    })
}

#[cfg(test)]
mod tests;
