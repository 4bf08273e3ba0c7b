//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CGNN"  u32 version  u32 record_count
//! record_count × { u32 name_len, name (UTF-8), u8 dtype, u32 rank,
//!                  rank × u64 dim, row-major values }
//! u64 metadata_len, metadata (UTF-8 JSON)
//! ```
//!
//! `dtype` is 0 for 32-bit and 1 for 64-bit floats. Writers use 64-bit
//! values so that a saved and restored run continues bit for bit; readers
//! accept either.

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CGNN";
pub const VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

pub fn encode(tensors: &IndexMap<String, Tensor>, metadata: &serde_json::Value, precision: Precision) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(tensors.len()).map_err(|_| Error::Format("too many records".into()))?.to_le_bytes());
    for (name, t) in tensors {
        let nb = name.as_bytes();
        out.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        out.extend_from_slice(nb);
        out.push(match precision {
            Precision::F32 => DTYPE_F32,
            Precision::F64 => DTYPE_F64,
        });
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match precision {
            Precision::F32 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            Precision::F64 => t.data().iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }
    let meta = serde_json::to_vec(metadata)?;
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(buf: &[u8]) -> Result<(IndexMap<String, Tensor>, serde_json::Value)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, not a checkpoint".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32("record count")?;
    let mut tensors = IndexMap::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Format("record name is not UTF-8".into()))?
            .to_string();
        let dtype = r.u8("dtype")?;
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64("dim")?).map_err(|_| Error::Format("dimension overflow".into()))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("`{name}` is too large")))?;
        let data: Vec<f64> = match dtype {
            DTYPE_F32 => r
                .take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?, &name)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            DTYPE_F64 => r
                .take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?, &name)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
            other => return Err(Error::Format(format!("`{name}` has unknown dtype {other}"))),
        };
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("`{name}`: {e}")))?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(Error::Format(format!("duplicate record `{name}`")));
        }
    }
    let mlen = usize::try_from(r.u64("metadata length")?).map_err(|_| Error::Format("metadata too large".into()))?;
    let meta = serde_json::from_slice(r.take(mlen, "metadata")?)
        .map_err(|e| Error::Format(format!("metadata is not valid JSON: {e}")))?;
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok((tensors, meta))
}

/// Write through a temporary sibling and rename, so readers never observe
/// a half-written file.
pub fn write_file(path: &Path, tensors: &IndexMap<String, Tensor>, metadata: &serde_json::Value) -> Result<()> {
    let bytes = encode(tensors, metadata, Precision::F64)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<(IndexMap<String, Tensor>, serde_json::Value)> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> IndexMap<String, Tensor> {
        let mut m = IndexMap::new();
        m.insert("a".to_string(), Tensor::matrix(2, 3, vec![0.1, -2.5, 3.0, 1e-300, 7.0, -0.0]).unwrap());
        m.insert("b".to_string(), Tensor::scalar(0.3));
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let meta = serde_json::json!({"epoch": 3});
        let bytes = encode(&sample(), &meta, Precision::F64).unwrap();
        let (t, m) = decode(&bytes).unwrap();
        assert_eq!(m, meta);
        for (k, v) in sample() {
            let bits: Vec<u64> = v.data().iter().map(|x| x.to_bits()).collect();
            let got: Vec<u64> = t[&k].data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits, got);
            assert_eq!(v.shape(), t[&k].shape());
        }
    }

    #[test]
    fn single_precision_records_decode() {
        let bytes = encode(&sample(), &serde_json::json!({}), Precision::F32).unwrap();
        let (t, _) = decode(&bytes).unwrap();
        assert_eq!(t["a"].data()[1], -2.5);
        assert_eq!(t["b"].data()[0], 0.3f32 as f64);
    }

    #[test]
    fn every_truncation_fails() {
        let bytes = encode(&sample(), &serde_json::json!({"x": 1}), Precision::F64).unwrap();
        for n in 0..bytes.len() {
            assert!(matches!(decode(&bytes[..n]), Err(Error::Format(_))), "prefix {n}");
        }
    }

    #[test]
    fn magic_and_version_checked() {
        let mut bytes = encode(&sample(), &serde_json::json!({}), Precision::F64).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }
}
