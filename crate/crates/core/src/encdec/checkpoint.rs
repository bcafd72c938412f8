//! Binary checkpoint format.
//!
//! ```text
//! "CHSH" | version u32 | m u32 | v u32 | |V| u32 | n_hidden u32 | hidden sizes u32...
//!        | tensors as little-endian f64, in parameter declaration order
//!        | FNV-1a 64 checksum of every preceding byte, u64
//! ```
//! All integers are little-endian.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{Model, ModelShape};
use crate::scalar::Scalar;
use crate::tensor::{ParamStore, RngStream};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CHSH";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("{0} trailing bytes after checksum")]
    Trailing(usize),
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn encode_checkpoint<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let shape = model.shape();
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    let header = [
        CHECKPOINT_VERSION,
        shape.bits as u32,
        shape.rank as u32,
        shape.vocab_size as u32,
        shape.hidden.len() as u32,
    ];
    for v in header.iter().chain(shape.hidden.iter().map(|&h| h as u32).collect::<Vec<_>>().iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for p in model.params() {
        for &x in p.value.as_slice() {
            buf.extend_from_slice(&x.to_f64_lossless().to_le_bytes());
        }
    }
    let sum = fnv1a64(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Model<T>, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let bits = r.u32()? as usize;
    let rank = r.u32()? as usize;
    let vocab_size = r.u32()? as usize;
    let n_hidden = r.u32()? as usize;
    if n_hidden > 64 {
        return Err(CheckpointError::Truncated);
    }
    let hidden = (0..n_hidden).map(|_| r.u32().map(|h| h as usize)).collect::<Result<Vec<_>, _>>()?;
    let shape = ModelShape::new(vocab_size, hidden, bits, rank);

    // Size check before allocating the model.
    let expected: usize = {
        let mut n = 0usize;
        let mut w = vocab_size;
        for &h in &shape.hidden {
            n += w * h + h;
            w = h;
        }
        n += 2 * (w * bits + bits) + w * bits * rank + if rank > 0 { bits * rank } else { 0 };
        n + bits * vocab_size + vocab_size
    };
    if bytes.len() < r.pos + expected * 8 + 8 {
        return Err(CheckpointError::Truncated);
    }

    let mut model = Model::<T>::new(shape, &mut RngStream::new(0));
    for p in model.params_mut() {
        for x in p.value.as_mut_slice() {
            *x = T::of(r.f64()?);
        }
    }
    let payload_end = r.pos;
    let stored = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let computed = fnv1a64(&bytes[..payload_end]);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - r.pos));
    }
    Ok(model)
}

pub fn write_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode_checkpoint(model)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
