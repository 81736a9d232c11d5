//! Dense f32 tensors and the IDSL binary container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size       | field                        |
//! |--------|------------|------------------------------|
//! | 0      | 4          | magic `b"IDSL"`              |
//! | 4      | 1          | version (`1`)                |
//! | 5      | 1          | dtype code (`0` = f32)       |
//! | 6      | 1          | rank `r`                     |
//! | 7      | `8 * r`    | shape, one `u64` per axis    |
//! | 7+8r   | `4 * numel`| row-major f32 payload        |
//!
//! Files are little-endian regardless of host byte order. Trailing bytes after
//! the payload are rejected.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IDSL";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 7;

/// Element type stored in a tensor. Only f32 is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            _ => None,
        }
    }
}

/// Row-major f32 tensor with an explicit shape.
///
/// Every constructed tensor satisfies `shape.iter().product() == data.len()` and
/// contains only finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel = checked_numel(&shape)
            .ok_or_else(|| Error::Shape(format!("shape {shape:?} overflows usize")))?;
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {numel} elements, got {}",
                data.len()
            )));
        }
        if shape.len() > u8::MAX as usize {
            return Err(Error::Shape(format!("rank {} exceeds 255", shape.len())));
        }
        check_finite(&data)?;
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn dtype(&self) -> DType {
        DType::F32
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Views a rank-2 tensor as a matrix.
    pub fn as_matrix(&self) -> Result<MatrixView<'_>> {
        match *self.shape.as_slice() {
            [rows, cols] => MatrixView::new(&self.data, rows, cols),
            _ => Err(Error::Shape(format!(
                "expected a rank-2 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Serializes into the IDSL byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dtype().code());
        out.push(self.shape.len() as u8);
        for &dim in &self.shape {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses the IDSL byte layout. `origin` is only used for error messages.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let format_err = |message: String| Error::Format {
            path: origin.to_path_buf(),
            message,
        };

        if bytes.len() < HEADER_LEN {
            return Err(format_err(format!(
                "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(format_err(format!("bad magic {:?}", &bytes[..4])));
        }
        if bytes[4] != VERSION {
            return Err(format_err(format!("unsupported version {}", bytes[4])));
        }
        if DType::from_code(bytes[5]).is_none() {
            return Err(format_err(format!("unsupported dtype code {}", bytes[5])));
        }
        let rank = bytes[6] as usize;
        let shape_end = HEADER_LEN + 8 * rank;
        if bytes.len() < shape_end {
            return Err(format_err(format!("truncated shape: rank {rank}")));
        }
        let shape = bytes[HEADER_LEN..shape_end]
            .chunks_exact(8)
            .map(|c| {
                let dim = u64::from_le_bytes(c.try_into().expect("8-byte chunk"));
                usize::try_from(dim).map_err(|_| format_err(format!("dimension {dim} too large")))
            })
            .collect::<Result<Vec<_>>>()?;

        let payload = &bytes[shape_end..];
        let expected = checked_numel(&shape)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| format_err(format!("shape {shape:?} overflows")))?;
        if payload.len() != expected {
            return Err(format_err(format!(
                "shape {shape:?} needs {expected} payload bytes, found {}",
                payload.len()
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        check_finite(&data)?;
        Ok(Self { shape, data })
    }
}

/// Borrowed row-major matrix.
#[derive(Debug, Clone, Copy)]
pub struct MatrixView<'a> {
    data: &'a [f32],
    rows: usize,
    cols: usize,
}

impl<'a> MatrixView<'a> {
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &'a [f32]> + 'a {
        let view = *self;
        (0..self.rows).map(move |i| view.row(i))
    }

    pub fn as_slice(&self) -> &'a [f32] {
        self.data
    }
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(&tensor.to_bytes())
        .and_then(|_| writer.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes, path)
}

fn checked_numel(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

pub(crate) fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: data[index],
        }),
        None => Ok(()),
    }
}
