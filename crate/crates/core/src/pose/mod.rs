//! Upper-body skeleton representations.
//!
//! Poses come in two forms: joint coordinates (`PoseSequence`, 10 joints ×
//! xyz, spine-centered) and unit directional vectors along the nine bones
//! (`DirVecSequence`, 27 values per frame), which is what the networks see.

mod export;
mod resample;

pub use export::{export_animation, import_csv, import_json, write_pose_csv, AnimationFormat};
pub use resample::Resample;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub const NUM_JOINTS: usize = 10;
pub const NUM_BONES: usize = 9;
/// Coordinates per pose frame.
pub const POSE_DIM: usize = NUM_JOINTS * 3;
/// Directional-vector values per frame.
pub const DIRVEC_DIM: usize = NUM_BONES * 3;

pub const SPINE: usize = 0;
pub const HEAD: usize = 1;
pub const NOSE: usize = 2;
pub const NECK: usize = 3;
pub const L_SHOULDER: usize = 4;
pub const R_SHOULDER: usize = 5;
pub const L_ELBOW: usize = 6;
pub const R_ELBOW: usize = 7;
pub const L_WRIST: usize = 8;
pub const R_WRIST: usize = 9;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "spine",
    "head",
    "nose",
    "neck",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
];

/// Parent→child edges. Parents always precede their children, so walking
/// this list in order is a valid tree traversal from the spine.
pub const BONES: [(usize, usize); NUM_BONES] = [
    (SPINE, NECK),
    (NECK, NOSE),
    (NOSE, HEAD),
    (NECK, R_SHOULDER),
    (NECK, L_SHOULDER),
    (R_SHOULDER, R_ELBOW),
    (L_SHOULDER, L_ELBOW),
    (R_ELBOW, R_WRIST),
    (L_ELBOW, L_WRIST),
];

pub const BONE_NAMES: [&str; NUM_BONES] = [
    "spine-neck",
    "neck-nose",
    "nose-head",
    "neck-r_shoulder",
    "neck-l_shoulder",
    "r_shoulder-r_elbow",
    "l_shoulder-l_elbow",
    "r_elbow-r_wrist",
    "l_elbow-l_wrist",
];

pub const RIGHT_ARM: [usize; 3] = [R_SHOULDER, R_ELBOW, R_WRIST];
pub const LEFT_ARM: [usize; 3] = [L_SHOULDER, L_ELBOW, L_WRIST];
pub const ALL_JOINTS: [usize; NUM_JOINTS] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Default frame rate of the corpus and the model.
pub const DEFAULT_FPS: f64 = 15.0;

/// Norms below this are treated as coincident joints.
const DEGENERATE_NORM: f64 = 1e-8;
/// Accepted deviation from unit norm when reconstructing coordinates.
const UNIT_TOLERANCE: f64 = 1e-3;

/// Rest direction of each bone, used for T-pose fixtures and BVH offsets.
pub const REST_DIRECTIONS: [Vec3; NUM_BONES] = [
    [0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0],
    [-1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joint_names: Vec<String>,
    pub parent_index: Vec<Option<usize>>,
    pub bone_order: Vec<(usize, usize)>,
    pub bone_lengths: [f64; NUM_BONES],
}

impl Skeleton {
    pub fn new(bone_lengths: [f64; NUM_BONES]) -> Result<Self> {
        if let Some(i) = bone_lengths.iter().position(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "bone length {} ({}) must be positive, got {}",
                i, BONE_NAMES[i], bone_lengths[i]
            )));
        }
        let mut parent_index = vec![None; NUM_JOINTS];
        for &(p, c) in &BONES {
            parent_index[c] = Some(p);
        }
        Ok(Self {
            joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
            parent_index,
            bone_order: BONES.to_vec(),
            bone_lengths,
        })
    }

    /// Proportions of an average adult with a unit spine–neck length.
    pub fn standard() -> Self {
        Self::new([1.0, 0.25, 0.2, 0.4, 0.4, 0.6, 0.6, 0.55, 0.55]).expect("valid constants")
    }

    /// Corpus-global mean bone lengths over every frame of every sequence.
    pub fn from_mean_lengths<'a>(seqs: impl IntoIterator<Item = &'a PoseSequence>) -> Result<Self> {
        let mut sum = [0.0; NUM_BONES];
        let mut n = 0usize;
        for seq in seqs {
            for frame in &seq.frames {
                for (b, &(p, c)) in BONES.iter().enumerate() {
                    sum[b] += norm(sub(frame[c], frame[p]));
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::InvalidInput("no frames to measure bone lengths".into()));
        }
        Self::new(sum.map(|s| s / n as f64))
    }

    /// Joint coordinates of the rest (T-)pose with the spine at the origin.
    pub fn rest_pose(&self) -> [Vec3; NUM_JOINTS] {
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (b, &(p, c)) in BONES.iter().enumerate() {
            joints[c] = add(joints[p], scale(REST_DIRECTIONS[b], self.bone_lengths[b]));
        }
        joints
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSequence {
    pub frames: Vec<[Vec3; NUM_JOINTS]>,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirVecSequence {
    pub frames: Vec<[Vec3; NUM_BONES]>,
    pub fps: f64,
}

impl PoseSequence {
    pub fn new(frames: Vec<[Vec3; NUM_JOINTS]>, fps: f64) -> Result<Self> {
        let seq = Self { frames, fps };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidInput("pose sequence has no frames".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidInput(format!("bad frame rate {}", self.fps)));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite coordinate in frame {i}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self { frames: self.frames[start..start + len].to_vec(), fps: self.fps }
    }

    /// Frame-major flat coordinates (`T × 30`).
    pub fn to_flat(&self) -> Vec<f64> {
        self.frames.iter().flat_map(|f| f.iter().flatten().copied()).collect()
    }

    pub fn from_flat(values: &[f64], fps: f64) -> Result<Self> {
        if values.is_empty() || values.len() % POSE_DIM != 0 {
            return Err(Error::Shape(format!("{} values is not a multiple of {POSE_DIM}", values.len())));
        }
        let frames = values.chunks_exact(POSE_DIM).map(unflatten::<NUM_JOINTS>).collect();
        Self::new(frames, fps)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            frames: self.frames.iter().map(|f| f.map(|j| scale(j, factor))).collect(),
            fps: self.fps,
        }
    }
}

impl DirVecSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self { frames: self.frames[start..start + len].to_vec(), fps: self.fps }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.frames.iter().flat_map(|f| f.iter().flatten().copied()).collect()
    }

    pub fn to_flat_f32(&self) -> Vec<f32> {
        self.frames.iter().flat_map(|f| f.iter().flatten().map(|&v| v as f32)).collect()
    }

    /// Builds a sequence from raw `T × 27` values without normalizing them.
    pub fn from_flat(values: &[f64], fps: f64) -> Result<Self> {
        if values.is_empty() || values.len() % DIRVEC_DIM != 0 {
            return Err(Error::Shape(format!("{} values is not a multiple of {DIRVEC_DIM}", values.len())));
        }
        Ok(Self { frames: values.chunks_exact(DIRVEC_DIM).map(unflatten::<NUM_BONES>).collect(), fps })
    }

    pub fn from_flat_f32(values: &[f32], fps: f64) -> Result<Self> {
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        Self::from_flat(&v, fps)
    }

    /// Rescales every bone vector to unit length.
    pub fn normalized(&self) -> Result<Self> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for (i, f) in self.frames.iter().enumerate() {
            let mut out = [[0.0; 3]; NUM_BONES];
            for b in 0..NUM_BONES {
                let n = norm(f[b]);
                if !(n.is_finite() && n >= DEGENERATE_NORM) {
                    return Err(Error::DegenerateBone { frame: i, bone: b, name: BONE_NAMES[b] });
                }
                out[b] = scale(f[b], 1.0 / n);
            }
            frames.push(out);
        }
        Ok(Self { frames, fps: self.fps })
    }

    /// Largest deviation of any bone vector from unit norm.
    pub fn max_norm_error(&self) -> f64 {
        self.frames
            .iter()
            .flatten()
            .map(|v| (norm(*v) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// The same frame repeated `len` times.
    pub fn repeat_frame(frame: [Vec3; NUM_BONES], len: usize, fps: f64) -> Self {
        Self { frames: vec![frame; len], fps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityThresholds {
    /// Coordinate units squared.
    pub min_motion_variance: f64,
    /// Radians above the horizontal plane.
    pub min_spine_neck_angle: f64,
}

impl Default for ValidityThresholds {
    fn default() -> Self {
        Self { min_motion_variance: 1e-4, min_spine_neck_angle: 30f64.to_radians() }
    }
}

impl ValidityThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.min_motion_variance < 0.0 || self.min_spine_neck_angle < 0.0 {
            return Err(Error::InvalidInput("validity thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    LowMotion,
    LyingPose,
}

impl Validity {
    pub fn is_valid(self) -> bool {
        self == Validity::Valid
    }

    pub fn reason(self) -> Option<&'static str> {
        match self {
            Validity::Valid => None,
            Validity::LowMotion => Some("low_motion"),
            Validity::LyingPose => Some("lying_pose"),
        }
    }
}

pub fn spine_center(seq: &PoseSequence) -> Result<PoseSequence> {
    seq.validate()?;
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            let root = f[SPINE];
            f.map(|j| sub(j, root))
        })
        .collect();
    Ok(PoseSequence { frames, fps: seq.fps })
}

/// Unit vectors from parent to child for every bone in every frame.
pub fn coords_to_dirvecs(seq: &PoseSequence) -> Result<DirVecSequence> {
    let mut frames = Vec::with_capacity(seq.len());
    for (i, f) in seq.frames.iter().enumerate() {
        let mut out = [[0.0; 3]; NUM_BONES];
        for (b, &(p, c)) in BONES.iter().enumerate() {
            let v = sub(f[c], f[p]);
            let n = norm(v);
            if !(n.is_finite() && n >= DEGENERATE_NORM) {
                return Err(Error::DegenerateBone { frame: i, bone: b, name: BONE_NAMES[b] });
            }
            out[b] = scale(v, 1.0 / n);
        }
        frames.push(out);
    }
    Ok(DirVecSequence { frames, fps: seq.fps })
}

/// Bone lengths measured in each frame of a coordinate sequence.
pub fn frame_bone_lengths(seq: &PoseSequence) -> Vec<[f64; NUM_BONES]> {
    seq.frames
        .iter()
        .map(|f| {
            let mut l = [0.0; NUM_BONES];
            for (b, &(p, c)) in BONES.iter().enumerate() {
                l[b] = norm(sub(f[c], f[p]));
            }
            l
        })
        .collect()
}

/// Rebuilds joint coordinates with fixed skeleton bone lengths, spine at `root`.
pub fn dirvecs_to_coords(seq: &DirVecSequence, skel: &Skeleton, root: Vec3) -> Result<PoseSequence> {
    let lengths = vec![skel.bone_lengths; seq.len()];
    dirvecs_to_coords_with_lengths(seq, &lengths, root)
}

/// As [`dirvecs_to_coords`] but with per-frame bone lengths.
pub fn dirvecs_to_coords_with_lengths(
    seq: &DirVecSequence,
    lengths: &[[f64; NUM_BONES]],
    root: Vec3,
) -> Result<PoseSequence> {
    if lengths.len() != seq.len() {
        return Err(Error::Shape(format!("{} length rows for {} frames", lengths.len(), seq.len())));
    }
    if seq.is_empty() {
        return Err(Error::InvalidInput("empty directional-vector sequence".into()));
    }
    let mut frames = Vec::with_capacity(seq.len());
    for (i, (f, len)) in seq.frames.iter().zip(lengths).enumerate() {
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        joints[SPINE] = root;
        for (b, &(p, c)) in BONES.iter().enumerate() {
            let n = norm(f[b]);
            if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
                return Err(Error::InvalidInput(format!(
                    "bone {} in frame {i} has norm {n}, expected unit length",
                    BONE_NAMES[b]
                )));
            }
            joints[c] = add(joints[p], scale(f[b], len[b]));
        }
        frames.push(joints);
    }
    Ok(PoseSequence { frames, fps: seq.fps })
}

/// Mean temporal (population) variance of the selected joints' coordinates.
pub fn motion_variance(seq: &PoseSequence, joints: &[usize]) -> Result<f64> {
    if joints.is_empty() {
        return Err(Error::InvalidInput("empty joint subset".into()));
    }
    if let Some(&j) = joints.iter().find(|&&j| j >= NUM_JOINTS) {
        return Err(Error::InvalidInput(format!("joint index {j} out of range")));
    }
    if seq.len() < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: seq.len() });
    }
    let t = seq.len() as f64;
    let mut total = 0.0;
    for &j in joints {
        for axis in 0..3 {
            // shifted by the first sample so constant tracks give exactly zero
            let origin = seq.frames[0][j][axis];
            let mean = seq.frames.iter().map(|f| f[j][axis] - origin).sum::<f64>() / t;
            total += seq.frames.iter().map(|f| (f[j][axis] - origin - mean).powi(2)).sum::<f64>() / t;
        }
    }
    Ok(total / (joints.len() * 3) as f64)
}

/// Mean elevation of the spine–neck bone above the horizontal, in radians.
pub fn mean_spine_neck_elevation(seq: &PoseSequence) -> f64 {
    let sum: f64 = seq
        .frames
        .iter()
        .map(|f| {
            let v = sub(f[NECK], f[SPINE]);
            let n = norm(v);
            if n < DEGENERATE_NORM {
                0.0
            } else {
                (v[1] / n).clamp(-1.0, 1.0).asin()
            }
        })
        .sum();
    sum / seq.len() as f64
}

pub fn is_valid_sample(seq: &PoseSequence, th: &ValidityThresholds) -> Validity {
    let variance = motion_variance(seq, &ALL_JOINTS).unwrap_or(0.0);
    if variance < th.min_motion_variance {
        Validity::LowMotion
    } else if mean_spine_neck_elevation(seq) < th.min_spine_neck_angle {
        Validity::LyingPose
    } else {
        Validity::Valid
    }
}

pub(crate) fn unflatten<const N: usize>(chunk: &[f64]) -> [Vec3; N] {
    let mut out = [[0.0; 3]; N];
    for (k, v) in out.iter_mut().enumerate() {
        *v = [chunk[3 * k], chunk[3 * k + 1], chunk[3 * k + 2]];
    }
    out
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}
