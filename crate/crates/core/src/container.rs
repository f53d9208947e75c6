//! Flat binary container for embeddings, Gram matrices and spectra.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   b"KSPCBIN\0"
//! version    u32       1
//! kind       u32       ContainerKind tag
//! arrays     u32       number of named arrays
//! per array:
//!   role     u8        0 = parameter, 1 = metadata
//!   name_len u32, name (UTF-8)
//!   ndim     u32, dims u64 × ndim
//!   payload  f64 × Π dims
//! ```

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"KSPCBIN\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum ContainerKind {
    Identity = 1,
    Rff = 2,
    Nystrom = 3,
    Neural = 4,
    Gram = 16,
    Spectrum = 17,
}

impl ContainerKind {
    fn from_tag(t: u32) -> Result<Self> {
        Ok(match t {
            1 => ContainerKind::Identity,
            2 => ContainerKind::Rff,
            3 => ContainerKind::Nystrom,
            4 => ContainerKind::Neural,
            16 => ContainerKind::Gram,
            17 => ContainerKind::Spectrum,
            other => return Err(Error::Format(format!("unknown container kind tag {other}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Parameter,
    Metadata,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub role: Role,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: ContainerKind,
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn new(kind: ContainerKind) -> Self {
        Container { kind, arrays: Vec::new() }
    }

    pub fn push(&mut self, name: &str, role: Role, dims: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        self.arrays.push(NamedArray {
            name: name.to_owned(),
            role,
            dims,
            data,
        });
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Format(format!("container has no array named {name:?}")))
    }

    /// Single metadata scalar.
    pub fn scalar(&self, name: &str) -> Result<f64> {
        let a = self.get(name)?;
        a.data
            .first()
            .copied()
            .ok_or_else(|| Error::Format(format!("array {name:?} is empty")))
    }

    /// Number of stored parameter values (metadata excluded).
    pub fn parameter_count(&self) -> usize {
        self.arrays
            .iter()
            .filter(|a| a.role == Role::Parameter)
            .map(|a| a.data.len())
            .sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind as u32).to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.push(match a.role {
                Role::Parameter => 0,
                Role::Metadata => 1,
            });
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&(a.dims.len() as u32).to_le_bytes());
            for &d in &a.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("bad container magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let kind = ContainerKind::from_tag(r.u32()?)?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let role = match r.take(1)?[0] {
                0 => Role::Parameter,
                1 => Role::Metadata,
                other => return Err(Error::Format(format!("unknown array role {other}"))),
            };
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("array name is not UTF-8".into()))?;
            let ndim = r.u32()? as usize;
            let mut dims = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                dims.push(r.u64()? as usize);
            }
            let len = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format("array dimensions overflow".into()))?;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Format("array too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            arrays.push(NamedArray { name, role, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after container",
                bytes.len() - r.pos
            )));
        }
        Ok(Container { kind, arrays })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let p = path.as_ref();
        std::fs::write(p, self.to_bytes()).map_err(|e| Error::io(p, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        Self::from_bytes(&std::fs::read(p).map_err(|e| Error::io(p, e))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Length(format!("container truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
