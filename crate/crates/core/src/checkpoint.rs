//! `NSPK` container for named f32 tensors.
//!
//! Layout (little-endian): magic `NSPK`, version `u16`, config count `u16`,
//! config values `u32`, tensor count `u32`, then per tensor: name length
//! `u16`, UTF-8 name, rank `u8`, dims `u32`, `f32` data row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAGIC: &[u8; 4] = b"NSPK";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn from_f64(name: impl Into<String>, dims: Vec<usize>, data: &[f64]) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            dims,
            data: data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn vector(name: impl Into<String>, data: &[f64]) -> Self {
        Self::from_f64(name, vec![data.len()], data)
    }

    pub fn matrix(name: impl Into<String>, m: &Matrix) -> Self {
        Self::from_f64(name, vec![m.rows(), m.cols()], m.data())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub config: Vec<u32>,
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Tensor `name` with the given dims, or a format error naming `origin`.
    pub fn expect(&self, name: &str, dims: &[usize], origin: &Path) -> Result<Vec<f64>> {
        let t = self
            .get(name)
            .ok_or_else(|| Error::format(origin, format!("missing tensor '{name}'")))?;
        if t.dims != dims {
            return Err(Error::format(
                origin,
                format!("tensor '{name}' has shape {:?}, expected {dims:?}", t.dims),
            ));
        }
        Ok(t.to_f64())
    }

    pub fn expect_matrix(&self, name: &str, rows: usize, cols: usize, origin: &Path) -> Result<Matrix> {
        Matrix::new(rows, cols, self.expect(name, &[rows, cols], origin)?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u16).to_le_bytes());
        for v in &self.config {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, origin };
        if r.take(4)? != MAGIC {
            return Err(Error::format(origin, "missing NSPK header"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::format(origin, format!("unsupported version {version}")));
        }
        let n_config = r.u16()? as usize;
        let config = (0..n_config).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n_tensors = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..n_tensors {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format(origin, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count: usize = dims.iter().product();
            let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::format(origin, "tensor too large"))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(Tensor { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(origin, "trailing bytes after last tensor"));
        }
        Ok(Self { config, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.origin, "truncated file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
