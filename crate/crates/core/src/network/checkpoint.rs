use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"MDUSTCKP";
const VERSION: u32 = 1;
const KIND: &str = "checkpoint";

/// Named `f32` tensors tagged with the encoder fingerprint and training stage.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointBundle {
    pub fingerprint: u64,
    pub stage: u8,
    pub params: BTreeMap<String, Tensor<f32>>,
}

impl CheckpointBundle {
    /// Layout: magic, `u32` version, `u64` fingerprint, `u8` stage, `u32`
    /// entry count, then per entry `u32` name length, UTF-8 name, `u32` rank,
    /// `u64` extents and little-endian `f32` payload. Entries are sorted by name.
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.params.iter().map(|(k, t)| k.len() + 8 * t.shape().len() + 4 * t.numel() + 8).sum();
        let mut out = Vec::with_capacity(25 + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.push(self.stage);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::format(KIND, "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(KIND, format!("unsupported version {version}")));
        }
        let fingerprint = r.u64()?;
        let stage = r.take(1)?[0];
        let count = r.u32()?;
        let mut params = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format(KIND, "parameter name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::format(KIND, format!("`{name}` payload truncated")))?;
            let data = r
                .take(4 * n)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            if params.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
                return Err(Error::format(KIND, format!("duplicate parameter `{name}`")));
            }
        }
        if r.remaining() != 0 {
            return Err(Error::format(KIND, "trailing bytes"));
        }
        Ok(Self {
            fingerprint,
            stage,
            params,
        })
    }

    /// Write atomically: a sibling temp file is renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Write `bytes` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::format(KIND, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
