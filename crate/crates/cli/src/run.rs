//! Output-directory lock and the run manifest written beside every output.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const LOCK_FILE: &str = ".gesture.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutLock {
    path: PathBuf,
}

#[derive(Debug)]
pub struct Locked(pub PathBuf);

impl std::fmt::Display for Locked {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} is locked by another run (remove the lock file if no run is active)", self.0.display())
    }
}

impl std::error::Error for Locked {}

impl OutLock {
    pub fn acquire(out: &Path) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Locked(path).into()),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for OutLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    /// Absent for directories.
    pub sha256: Option<String>,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let sha256 = if path.is_file() { Some(sha256_file(path)?) } else { None };
        Ok(Self { path: path.to_path_buf(), sha256 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub timings: Timings,
}

pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

/// Collects what a run read and wrote, then writes the manifest.
pub struct Run {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: SystemTime,
    clock: Instant,
}

impl Run {
    pub fn start(command: &str, config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    pub fn finish(self, out_dir: &Path) -> Result<PathBuf> {
        let records = |ps: &[PathBuf]| ps.iter().map(|p| FileRecord::of(p)).collect::<Result<Vec<_>>>();
        let manifest = RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            seed: self.seed,
            inputs: records(&self.inputs)?,
            outputs: records(&self.outputs)?,
            timings: Timings {
                started_unix: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
                wall_seconds: self.clock.elapsed().as_secs_f64(),
            },
        };
        let path = out_dir.join(manifest_name(&self.command));
        gesture_core::archive::write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = OutLock::acquire(dir.path()).unwrap();
        let err = OutLock::acquire(dir.path()).unwrap_err();
        assert!(err.downcast_ref::<Locked>().is_some());
        drop(a);
        assert!(OutLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn manifest_records_digests() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.txt");
        fs::write(&f, "abc").unwrap();
        let mut run = Run::start("demo", &serde_json::json!({"seed": 1}), Some(1)).unwrap();
        run.output(&f);
        let p = run.finish(dir.path()).unwrap();
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(m.command, "demo");
        assert_eq!(
            m.outputs[0].sha256.as_deref(),
            Some("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        );
    }
}
