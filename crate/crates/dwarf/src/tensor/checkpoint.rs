//! Binary parameter snapshots.
//!
//! Layout: 8-byte magic `DWRFCKPT`, u32 format version, then one record per
//! parameter until end of file. Record: u32 name length, UTF-8 name, u32
//! rank, u32 dims, then raw little-endian f32 values. Models in f64 are
//! downcast on save and upcast on load; f32 models round-trip bit-exactly.

use super::params::ParamStore;
use crate::error::{DwarfError, Result};
use crate::tensor::{Scalar, Shape};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"DWRFCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Shape,
    pub data: Vec<f32>,
}

pub fn save_checkpoint<T: Scalar>(store: &ParamStore<T>, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for (name, tensor) in store.iter() {
        let s = tensor.shape();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&4u32.to_le_bytes());
        for d in [s.n, s.c, s.h, s.w] {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_f32().to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(DwarfError::Checkpoint(format!(
                "truncated at byte {} reading {what}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<CheckpointEntry>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    let magic = cur.take(8, "magic")?;
    if magic != MAGIC {
        return Err(DwarfError::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(DwarfError::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let mut entries = Vec::new();
    while !cur.done() {
        let name_len = cur.u32("name length")? as usize;
        let name_bytes = cur.take(name_len, "name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| DwarfError::Checkpoint(format!("invalid UTF-8 name at byte {}", cur.pos)))?
            .to_string();
        let rank = cur.u32("rank")?;
        if rank != 4 {
            return Err(DwarfError::Checkpoint(format!(
                "parameter {name}: rank {rank} unsupported"
            )));
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            *d = cur.u32("dims")? as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let raw = cur.take(shape.numel() * 4, "values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push(CheckpointEntry { name, shape, data });
    }
    Ok(entries)
}
