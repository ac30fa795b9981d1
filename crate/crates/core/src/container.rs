//! Self-describing binary tensor container used for model files.
//!
//! Layout, all integers unsigned 64-bit little-endian unless noted:
//!
//! ```text
//! "DBNT"                      4-byte magic
//! version: u32                currently 1
//! tensor count
//! per tensor:
//!   name length, UTF-8 name bytes
//!   rank, then one dimension per axis
//!   row-major f64 little-endian payload
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DBNT";
pub const VERSION: u32 = 1;

// Guards against allocating from a corrupt header.
const MAX_NAME_LEN: u64 = 1 << 16;
const MAX_RANK: u64 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn vector(name: impl Into<String>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dims: vec![data.len() as u64],
            data,
        }
    }

    pub fn from_array1(name: impl Into<String>, a: &Array1<f64>) -> Self {
        Self::vector(name, a.to_vec())
    }

    pub fn from_array2(name: impl Into<String>, a: &Array2<f64>) -> Self {
        let (r, c) = a.dim();
        Self {
            name: name.into(),
            dims: vec![r as u64, c as u64],
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array1(&self) -> Result<Array1<f64>> {
        match self.dims[..] {
            [_] => Ok(Array1::from(self.data.clone())),
            _ => Err(Error::Format(format!(
                "tensor {} has rank {}, expected 1",
                self.name,
                self.dims.len()
            ))),
        }
    }

    pub fn to_array2(&self) -> Result<Array2<f64>> {
        match self.dims[..] {
            [r, c] => Array2::from_shape_vec((r as usize, c as usize), self.data.clone())
                .map_err(|e| Error::Format(format!("tensor {}: {e}", self.name))),
            _ => Err(Error::Format(format!(
                "tensor {} has rank {}, expected 2",
                self.name,
                self.dims.len()
            ))),
        }
    }
}

/// An ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    tensors: Vec<Tensor>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tensor: Tensor) {
        self.tensors.push(tensor);
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for t in &self.tensors {
            let expected: u64 = t.dims.iter().product();
            if expected != t.data.len() as u64 {
                return Err(Error::Format(format!(
                    "tensor {} has {} values for dims {:?}",
                    t.name,
                    t.data.len(),
                    t.dims
                )));
            }
            out.write_all(&(t.name.len() as u64).to_le_bytes())?;
            out.write_all(t.name.as_bytes())?;
            out.write_all(&(t.dims.len() as u64).to_le_bytes())?;
            for d in &t.dims {
                out.write_all(&d.to_le_bytes())?;
            }
            for x in &t.data {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, not a DBNT container".into()));
        }
        let mut v = [0u8; 4];
        read_exact(&mut input, &mut v)?;
        let version = u32::from_le_bytes(v);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let count = read_u64(&mut input)?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = read_u64(&mut input)?;
            if name_len > MAX_NAME_LEN {
                return Err(Error::Format(format!("tensor name length {name_len}")));
            }
            let mut name = vec![0u8; name_len as usize];
            read_exact(&mut input, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = read_u64(&mut input)?;
            if rank > MAX_RANK {
                return Err(Error::Format(format!("tensor {name} has rank {rank}")));
            }
            let dims = (0..rank)
                .map(|_| read_u64(&mut input))
                .collect::<Result<Vec<_>>>()?;
            let len = dims
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
            let mut bytes = Vec::new();
            input
                .by_ref()
                .take(len.saturating_mul(8))
                .read_to_end(&mut bytes)?;
            if bytes.len() as u64 != len * 8 {
                return Err(Error::Format(format!("truncated payload for tensor {name}")));
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(Tensor { name, dims, data });
        }
        Ok(Self { tensors })
    }
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated model file".into()),
        _ => Error::Io(e),
    })
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
