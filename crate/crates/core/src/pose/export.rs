use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    dirvecs_to_coords, DirVecSequence, PoseSequence, Skeleton, Vec3, BONES, JOINT_NAMES, NUM_JOINTS, POSE_DIM, REST_DIRECTIONS,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnimationFormat {
    Csv,
    Json,
    Bvh,
}

impl FromStr for AnimationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "bvh" => Ok(Self::Bvh),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonAnimation {
    fps: f64,
    joint_names: Vec<String>,
    frames: Vec<Vec<Vec3>>,
}

/// Writes a directional-vector sequence as an animation file. Coordinates are
/// rebuilt with the skeleton's bone lengths and the spine at the origin.
pub fn export_animation(
    seq: &DirVecSequence,
    skel: &Skeleton,
    path: &Path,
    format: AnimationFormat,
) -> Result<()> {
    let seq = seq.normalized()?;
    let text = match format {
        AnimationFormat::Csv => pose_csv(&dirvecs_to_coords(&seq, skel, [0.0; 3])?),
        AnimationFormat::Json => {
            let coords = dirvecs_to_coords(&seq, skel, [0.0; 3])?;
            let anim = JsonAnimation {
                fps: coords.fps,
                joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
                frames: coords.frames.iter().map(|f| f.to_vec()).collect(),
            };
            serde_json::to_string(&anim)?
        }
        AnimationFormat::Bvh => bvh(&seq, skel),
    };
    fs::write(path, text).map_err(Error::at_path(path))
}

pub fn write_pose_csv(seq: &PoseSequence, path: &Path) -> Result<()> {
    fs::write(path, pose_csv(seq)).map_err(Error::at_path(path))
}

fn pose_csv(seq: &PoseSequence) -> String {
    let mut out = String::from("frame");
    for j in 0..NUM_JOINTS {
        for axis in ["x", "y", "z"] {
            let _ = write!(out, ",j{j}{axis}");
        }
    }
    out.push('\n');
    for (i, f) in seq.frames.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in f.iter().flatten() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn import_json(path: &Path) -> Result<PoseSequence> {
    let text = fs::read_to_string(path).map_err(Error::at_path(path))?;
    let anim: JsonAnimation = serde_json::from_str(&text)?;
    let mut frames = Vec::with_capacity(anim.frames.len());
    for (i, f) in anim.frames.iter().enumerate() {
        let joints: [Vec3; NUM_JOINTS] = f
            .as_slice()
            .try_into()
            .map_err(|_| Error::Shape(format!("frame {i} has {} joints, expected {NUM_JOINTS}", f.len())))?;
        frames.push(joints);
    }
    PoseSequence::new(frames, anim.fps)
}

/// Reads the `frame,j0x,...,j9z` layout.
pub fn import_csv(path: &Path, fps: f64) -> Result<PoseSequence> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() != POSE_DIM + 1 {
        return Err(Error::Shape(format!(
            "{}: {} columns, expected {}",
            path.display(),
            header.len(),
            POSE_DIM + 1
        )));
    }
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        for field in record.iter().skip(1) {
            values.push(field.trim().parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!("{}: bad coordinate `{field}`: {e}", path.display()))
            })?);
        }
    }
    PoseSequence::from_flat(&values, fps)
}

fn to_vector(v: Vec3) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

/// Smallest rotation taking unit vector `from` to unit vector `to`.
fn minimal_rotation(from: Vec3, to: Vec3) -> Rotation3<f64> {
    let (a, b) = (to_vector(from), to_vector(to));
    Rotation3::rotation_between(&a, &b).unwrap_or_else(|| {
        // antiparallel: half turn about any axis orthogonal to `from`
        let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        Rotation3::from_axis_angle(&Unit::new_normalize(a.cross(&helper)), std::f64::consts::PI)
    })
}

/// Euler angles (degrees) for BVH channel order Z, X, Y, i.e. R = Rz·Rx·Ry.
fn zxy_degrees(r: &Matrix3<f64>) -> [f64; 3] {
    let x = r[(2, 1)].clamp(-1.0, 1.0).asin();
    let (z, y) = if x.cos().abs() > 1e-9 {
        ((-r[(0, 1)]).atan2(r[(1, 1)]), (-r[(2, 0)]).atan2(r[(2, 2)]))
    } else {
        (r[(1, 0)].atan2(r[(0, 0)]), 0.0)
    };
    [z.to_degrees(), x.to_degrees(), y.to_degrees()]
}

/// Bone whose direction sets a joint's rotation; joints with several children
/// follow the first bone leaving them.
fn driving_bone(joint: usize) -> Option<usize> {
    BONES.iter().position(|&(p, _)| p == joint)
}

fn bvh(seq: &DirVecSequence, skel: &Skeleton) -> String {
    let rest = skel.rest_pose();
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, 0, 0, &rest);
    out.push_str("MOTION\n");
    let _ = writeln!(out, "Frames: {}", seq.len());
    let _ = writeln!(out, "Frame Time: {}", 1.0 / seq.fps);

    let order = bvh_order();
    for frame in &seq.frames {
        let mut global = [Rotation3::identity(); NUM_JOINTS];
        let mut local = [Rotation3::identity(); NUM_JOINTS];
        // parents precede children in `order`
        for &j in &order {
            let parent = BONES.iter().find(|&&(_, c)| c == j).map(|&(p, _)| p);
            let parent_global = parent.map(|p| global[p]).unwrap_or_else(Rotation3::identity);
            global[j] = match driving_bone(j) {
                Some(b) => minimal_rotation(REST_DIRECTIONS[b], frame[b]),
                None => parent_global,
            };
            local[j] = parent_global.inverse() * global[j];
        }
        let mut row = vec![0.0, 0.0, 0.0];
        for &j in &order {
            row.extend_from_slice(&zxy_degrees(local[j].matrix()));
        }
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Depth-first joint order used for both the hierarchy and the motion rows.
fn bvh_order() -> Vec<usize> {
    fn visit(j: usize, out: &mut Vec<usize>) {
        out.push(j);
        for &(p, c) in &BONES {
            if p == j {
                visit(c, out);
            }
        }
    }
    let mut out = Vec::with_capacity(NUM_JOINTS);
    visit(0, &mut out);
    out
}

fn write_joint(out: &mut String, joint: usize, depth: usize, rest: &[Vec3; NUM_JOINTS]) {
    let pad = "  ".repeat(depth);
    let parent = BONES.iter().find(|&&(_, c)| c == joint).map(|&(p, _)| p);
    let offset = match parent {
        Some(p) => super::sub(rest[joint], rest[p]),
        None => [0.0; 3],
    };
    if parent.is_none() {
        let _ = writeln!(out, "{pad}ROOT {}", JOINT_NAMES[joint]);
    } else {
        let _ = writeln!(out, "{pad}JOINT {}", JOINT_NAMES[joint]);
    }
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(out, "{pad}  OFFSET {:.6} {:.6} {:.6}", offset[0], offset[1], offset[2]);
    if parent.is_none() {
        let _ = writeln!(out, "{pad}  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation");
    } else {
        let _ = writeln!(out, "{pad}  CHANNELS 3 Zrotation Xrotation Yrotation");
    }
    let children: Vec<usize> = BONES.iter().filter(|&&(p, _)| p == joint).map(|&(_, c)| c).collect();
    if children.is_empty() {
        let _ = writeln!(out, "{pad}  End Site");
        let _ = writeln!(out, "{pad}  {{");
        let _ = writeln!(out, "{pad}    OFFSET 0.000000 0.000000 0.000000");
        let _ = writeln!(out, "{pad}  }}");
    }
    for c in children {
        write_joint(out, c, depth + 1, rest);
    }
    let _ = writeln!(out, "{pad}}}");
}
