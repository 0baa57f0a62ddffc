use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

/// Magic bytes of the tensor binary format.
const MAGIC: [u8; 4] = *b"BFM1";

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("tensor i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a face-model tensor file (bad magic)")]
    BadMagic,
    #[error("tensor payload has {got} values, header promises {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("tensor dimensions must be positive and V divisible by 3 (V={v}, I={i}, E={e})")]
    BadDimensions { v: usize, i: usize, e: usize },
}

/// Reduced core tensor `B` of the bilinear face model, shape `V x I x E`
/// where `V = 3 * vertex_count` stacks xyz per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct CoreTensor {
    v: usize,
    i: usize,
    e: usize,
    /// Row-major over `(k, i, j)`: `data[(k * I + i) * E + j]`.
    data: Vec<f64>,
}

impl CoreTensor {
    pub fn new(v: usize, i: usize, e: usize, data: Vec<f64>) -> Result<Self, TensorIoError> {
        if v == 0 || i == 0 || e == 0 || v % 3 != 0 {
            return Err(TensorIoError::BadDimensions { v, i, e });
        }
        if data.len() != v * i * e {
            return Err(TensorIoError::SizeMismatch { expected: v * i * e, got: data.len() });
        }
        Ok(Self { v, i, e, data })
    }

    pub fn zeros(v: usize, i: usize, e: usize) -> Result<Self, TensorIoError> {
        Self::new(v, i, e, vec![0.0; v * i * e])
    }

    pub fn dim_v(&self) -> usize {
        self.v
    }

    pub fn dim_identity(&self) -> usize {
        self.i
    }

    pub fn dim_expression(&self) -> usize {
        self.e
    }

    pub fn vertex_count(&self) -> usize {
        self.v / 3
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        debug_assert!(k < self.v && i < self.i && j < self.e);
        self.data[(k * self.i + i) * self.e + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        debug_assert!(k < self.v && i < self.i && j < self.e);
        self.data[(k * self.i + i) * self.e + j] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// 16-byte header (magic, V, I, E as little-endian u32) followed by the
    /// payload as little-endian f64.
    pub fn write_binary(&self, mut w: impl Write) -> Result<(), TensorIoError> {
        w.write_all(&MAGIC)?;
        w.write_all(&(self.v as u32).to_le_bytes())?;
        w.write_all(&(self.i as u32).to_le_bytes())?;
        w.write_all(&(self.e as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for &x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self, TensorIoError> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if header[0..4] != MAGIC {
            return Err(TensorIoError::BadMagic);
        }
        let v = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let i = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let e = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        if v == 0 || i == 0 || e == 0 || v % 3 != 0 {
            return Err(TensorIoError::BadDimensions { v, i, e });
        }
        let expected = v * i * e;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != expected * 8 {
            return Err(TensorIoError::SizeMismatch { expected, got: raw.len() / 8 });
        }
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(v, i, e, data)
    }

    pub fn save(&self, path: &Path) -> Result<(), TensorIoError> {
        let file = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, TensorIoError> {
        let file = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(file))
    }
}
