//! Single-file container for a JSON header plus named float32 tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "GGARCH01"
//! header_len u64      length of the UTF-8 JSON header
//! header     bytes
//! count      u32      number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   ndim     u32, dims (u64 × ndim)
//!   data     f32 × prod(dims), row-major
//! ```
//!
//! Tensors are stored sorted by name, so identical contents always produce
//! identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GGARCH01";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorData {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} holds {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    pub header: serde_json::Value,
    pub tensors: BTreeMap<String, TensorData>,
}

impl Archive {
    pub fn new(header: serde_json::Value) -> Self {
        Self { header, tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        self.tensors.insert(name.into(), TensorData::new(shape, data)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&TensorData> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(header.len() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.reserve(t.data.len() * 4);
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut bytes, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not an archive (bad magic)".into()));
        }
        let header_len = read_u64(&mut bytes)? as usize;
        if header_len > bytes.len() {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header = serde_json::from_slice(&bytes[..header_len])?;
        bytes = &bytes[header_len..];
        let count = read_u32(&mut bytes)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(&mut bytes)? as usize;
            if name_len > bytes.len() {
                return Err(Error::Checkpoint("truncated tensor name".into()));
            }
            let name = String::from_utf8(bytes[..name_len].to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            bytes = &bytes[name_len..];
            let ndim = read_u32(&mut bytes)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut bytes)? as usize);
            }
            let n: usize = shape.iter().product();
            if n * 4 > bytes.len() {
                return Err(Error::Checkpoint(format!("truncated data for `{name}`")));
            }
            let data = bytes[..n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            bytes = &bytes[n * 4..];
            tensors.insert(name, TensorData { shape, data });
        }
        Ok(Self { header, tensors })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(Error::at_path(path))?;
        Self::from_bytes(&bytes)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp).map_err(Error::at_path(&tmp))?;
        f.write_all(bytes).map_err(Error::at_path(&tmp))?;
        f.sync_all().map_err(Error::at_path(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(Error::at_path(path))
}

fn read_exact(bytes: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    bytes
        .read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of archive".into()))
}

fn read_u32(bytes: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(bytes, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(bytes: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(bytes, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
