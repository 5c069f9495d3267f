//! `.fqkc` tensor container.
//!
//! ```text
//! "FQKC" | version u8 | count u32
//! per tensor: name_len u32 | name utf-8 | dtype u8 | rank u8 | extents u64 x rank | values
//! ```
//! All integers and values are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{ParamTree, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FQKC";
pub const CHECKPOINT_VERSION: u8 = 1;
pub const CHECKPOINT_EXTENSION: &str = "fqkc";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64 = 1,
    F32 = 2,
}

impl Dtype {
    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F64),
            2 => Ok(Dtype::F32),
            other => Err(Error::UnknownDtype(other)),
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

/// Serializes every tensor as f64, in name order.
pub fn serialize_checkpoint(params: &ParamTree) -> Vec<u8> {
    serialize_checkpoint_as(params, Dtype::F64)
}

pub fn serialize_checkpoint_as(params: &ParamTree, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_values() * dtype.width());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(dtype as u8);
        out.push(t.rank() as u8);
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        match dtype {
            Dtype::F64 => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Dtype::F32 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CheckpointTruncated(what.to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses a container, returning the tree and the number of bytes consumed.
pub fn deserialize_checkpoint_prefix(bytes: &[u8]) -> Result<(ParamTree, usize)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "header")?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::CheckpointMagic(magic));
    }
    let version = r.u8("header")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion(version));
    }
    let count = r.u32("header")?;
    let mut tree = ParamTree::new();
    for index in 0..count {
        let label = format!("tensor #{index}");
        let name_len = r.u32(&label)? as usize;
        let name = std::str::from_utf8(r.take(name_len, &label)?)
            .map_err(|_| Error::InvalidArgument(format!("{label} has a non-UTF-8 name")))?
            .to_string();
        let what = format!("tensor `{name}`");
        let dtype = Dtype::from_code(r.u8(&what)?)?;
        let rank = r.u8(&what)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64(&what)? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|n| n.checked_mul(dtype.width()).is_some())
            .ok_or_else(|| Error::CheckpointTruncated(format!("{what} (extents overflow)")))?;
        let raw = r.take(len * dtype.width(), &what)?;
        let data = match dtype {
            Dtype::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        };
        tree.insert(name, Tensor::new(shape, data)?)?;
    }
    Ok((tree, r.pos))
}

pub fn deserialize_checkpoint(bytes: &[u8]) -> Result<ParamTree> {
    let (tree, used) = deserialize_checkpoint_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Error::InvalidArgument(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - used
        )));
    }
    Ok(tree)
}

pub fn save_checkpoint(path: &Path, params: &ParamTree) -> Result<()> {
    std::fs::write(path, serialize_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamTree> {
    deserialize_checkpoint(&std::fs::read(path)?)
}
