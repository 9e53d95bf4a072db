//! Named-tensor checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"CNETCKPT"
//! version u32 (= 1)
//! meta    u32 count, then per entry: u32 len + key bytes, u32 len + value bytes
//! tensors u32 count, then per tensor:
//!         u32 len + name bytes, u32 rank, rank x u64 dims, product(dims) x f64
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::{Param, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CNETCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_params(meta: BTreeMap<String, String>, params: &[&Param]) -> Self {
        Self {
            meta,
            tensors: params
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Copies stored values into `params`, matching by name and shape.
    pub fn restore(&self, params: &mut [&mut Param]) -> Result<()> {
        if self.tensors.len() != params.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, model has {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for p in params.iter_mut() {
            let (_, t) = self
                .tensors
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor `{}`", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(Error::Format(format!(
                    "tensor `{}` has shape {:?}, model expects {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
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
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            meta.insert(k, v);
        }
        let count = r.u32()?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid utf-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_roundtrip_and_restore() {
        let a = Param::new("a", Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.25, 0.1]).unwrap());
        let b = Param::new("b", Tensor::from_vec(vec![7.0]));
        let mut meta = BTreeMap::new();
        meta.insert("kind".to_string(), "test".to_string());
        let ck = Checkpoint::from_params(meta, &[&a, &b]);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);

        let mut a2 = Param::new("a", Tensor::zeros(&[2, 2]));
        let mut b2 = Param::new("b", Tensor::zeros(&[1]));
        back.restore(&mut [&mut b2, &mut a2]).unwrap();
        assert_eq!(a2.value, a.value);
        assert_eq!(b2.value, b.value);

        let mut wrong = Param::new("a", Tensor::zeros(&[4]));
        assert!(back.restore(&mut [&mut wrong, &mut b2]).is_err());
    }

    #[test]
    fn truncated_or_foreign_bytes_rejected() {
        let ck = Checkpoint::from_params(BTreeMap::new(), &[&Param::new("a", Tensor::zeros(&[3]))]);
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPTxxxx").is_err());
    }
}
