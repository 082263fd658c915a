//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"PTRC"
//! u32     format version (currently 1)
//! u32     tensor count
//! then per tensor:
//!   u32     name length in bytes
//!   [u8]    UTF-8 name
//!   u32     rank
//!   [u64]   dims (rank entries)
//!   [f32]   payload, row-major, prod(dims) entries
//! ```
//!
//! Tensors are written in ascending name order, so saving the same map twice
//! produces byte-identical files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PTRC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Sanity bound on a single tensor's element count while parsing, to reject
/// corrupt headers before attempting a huge allocation.
const MAX_TENSOR_ELEMS: u64 = 1 << 32;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Write `tensors` to `path` in ascending name order.
pub fn save_checkpoint(
    path: &Path,
    tensors: &BTreeMap<String, Tensor<f32>>,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
        for &d in tensor.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<BTreeMap<String, Tensor<f32>>, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = read_u32(&mut r, "tensor count")?;
    let mut out = BTreeMap::new();
    for i in 0..count {
        let name_len = read_u32(&mut r, "name length")? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, "tensor name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| CheckpointError::Malformed(format!("tensor {i}: name is not UTF-8")))?;
        let rank = read_u32(&mut r, "rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut numel: u64 = 1;
        for _ in 0..rank {
            let mut b = [0u8; 8];
            read_exact(&mut r, &mut b, "dim")?;
            let d = u64::from_le_bytes(b);
            numel = numel.saturating_mul(d);
            shape.push(d as usize);
        }
        if numel == 0 || numel > MAX_TENSOR_ELEMS {
            return Err(CheckpointError::Malformed(format!(
                "tensor {name:?}: implausible element count {numel}"
            )));
        }
        let mut data = Vec::with_capacity(numel as usize);
        let mut b = [0u8; 4];
        for _ in 0..numel {
            read_exact(&mut r, &mut b, "payload")?;
            data.push(f32::from_le_bytes(b));
        }
        let tensor = Tensor::new(shape, data)
            .map_err(|e| CheckpointError::Malformed(format!("tensor {name:?}: {e}")))?;
        if out.insert(name.clone(), tensor).is_some() {
            return Err(CheckpointError::Malformed(format!(
                "duplicate tensor name {name:?}"
            )));
        }
    }
    // anything left over means the writer and reader disagree on the format
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(CheckpointError::Malformed(
            "trailing bytes after last tensor".into(),
        ));
    }
    Ok(out)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            CheckpointError::Malformed(format!("truncated while reading {what}"))
        } else {
            CheckpointError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
