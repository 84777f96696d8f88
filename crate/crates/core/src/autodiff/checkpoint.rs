//! Flat binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "WGSRCKPT"
//! version  u32      1
//! count    u32      number of records
//! record*  name_len u32, name (UTF-8), dtype u8, rank u8, dims rank×u32, payload
//! ```
//!
//! dtype 0 is `f32` (4 bytes per element), dtype 1 is `u64` (8 bytes per
//! element). Tensors are stored as dtype 0; integer metadata (seed, config
//! hash, architecture sizes) as rank-1 dtype 1 records.

use std::path::Path;

use super::{AutodiffError, Tensor};

pub const MAGIC: &[u8; 8] = b"WGSRCKPT";
pub const VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_U64: u8 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub meta: Vec<(String, u64)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<u64> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&((self.meta.len() + self.tensors.len()) as u32).to_le_bytes());
        let header = |out: &mut Vec<u8>, name: &str, dtype: u8, dims: &[usize]| {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(dtype);
            out.push(dims.len() as u8);
            for &d in dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        };
        for (name, value) in &self.meta {
            header(&mut out, name, DTYPE_U64, &[1]);
            out.extend_from_slice(&value.to_le_bytes());
        }
        for (name, t) in &self.tensors {
            header(&mut out, name, DTYPE_F32, t.shape());
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AutodiffError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(AutodiffError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(AutodiffError::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut ckpt = Checkpoint::default();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| AutodiffError::Checkpoint("record name is not UTF-8".into()))?
                .to_string();
            let dtype = r.take(1)?[0];
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = dims.iter().product();
            match dtype {
                DTYPE_F32 => {
                    let data = r
                        .take(n * 4)?
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect();
                    ckpt.tensors.push((name, Tensor::new(&dims, data)?));
                }
                DTYPE_U64 if n == 1 => {
                    let v = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                    ckpt.meta.push((name, v));
                }
                other => {
                    return Err(AutodiffError::Checkpoint(format!(
                        "record {name}: unsupported dtype {other} with {n} elements"
                    )))
                }
            }
        }
        if r.pos != bytes.len() {
            return Err(AutodiffError::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AutodiffError> {
        std::fs::write(path.as_ref(), self.to_bytes()).map_err(|e| AutodiffError::Io {
            path: path.as_ref().to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AutodiffError> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| AutodiffError::Io {
            path: path.as_ref().to_path_buf(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AutodiffError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            AutodiffError::Checkpoint(format!("truncated at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, AutodiffError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
