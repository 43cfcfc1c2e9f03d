//! Binary tensor checkpoints.
//!
//! Layout, all integers little-endian:
//! `"RE3CKPT1"` | u32 count | per tensor: u16 name length, UTF-8 name,
//! u8 dtype (0 = f32, 1 = f64), u8 rank, u32 dims, raw data | u64 FNV-1a
//! of every preceding byte.

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use rectrack_core::network::NetworkParams;
use rectrack_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RE3CKPT1";
pub const EXTENSION: &str = "re3";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" => Some(DType::F32),
            "f64" => Some(DType::F64),
            _ => None,
        }
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Serializes tensors in order. f32 storage rounds each value.
pub fn encode<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>, dtype: DType) -> Result<Vec<u8>> {
    let tensors: Vec<(&str, &Tensor)> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let count = u32::try_from(tensors.len()).map_err(|_| Error::Format("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in tensors {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(dtype.code());
        let rank = u8::try_from(t.rank()).map_err(|_| Error::Format(format!("rank of {name} exceeds 255")))?;
        out.push(rank);
        for &d in t.dims() {
            let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension of {name} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        match dtype {
            DType::F64 => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            DType::F32 => t.data().iter().for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses and verifies a checkpoint. Values are widened to f64.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::Format("checkpoint truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if fnv1a(body) != stored {
        return Err(Error::Format("checkpoint checksum mismatch".into()));
    }
    if &body[..8] != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name =
            std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?.to_owned();
        let dtype = r.u8()?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
        let data: Vec<f64> = match dtype {
            0 => r
                .take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            1 => r
                .take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            d => return Err(Error::Format(format!("tensor {name}: unknown dtype {d}"))),
        };
        out.push((name, Tensor::new(&dims, data)?));
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

pub fn save(path: &Path, params: &NetworkParams, dtype: DType) -> Result<()> {
    let bytes = encode(params.named(), dtype)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<NetworkParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(NetworkParams::from_tensors(decode(&bytes)?)?)
}
