//! Dense NCHW tensors and the on-disk dataset formats.
//!
//! `NTSR` files hold one pre-decoded tensor:
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `4E 54 53 52` (`"NTSR"`)     |
//! | 4      | 2    | version, u16 LE, always 1          |
//! | 6      | 2    | reserved, u16 LE, always 0         |
//! | 8      | 16   | dims `n, c, h, w`, u32 LE each     |
//! | 24     | 4·k  | `k = n·c·h·w` binary32 values, LE  |
//!
//! Label files are UTF-8, one `sample-id<TAB>class-index` record per line.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

pub const NTSR_MAGIC: [u8; 4] = *b"NTSR";
pub const NTSR_VERSION: u16 = 1;
pub const NTSR_HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("malformed NTSR header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{0} trailing bytes after NTSR payload")]
    TrailingData(usize),
    #[error("shape {0:?} overflows the addressable element count")]
    ShapeOverflow([u64; 4]),
    #[error("data length {len} does not match shape {shape} ({expected} elements)")]
    LengthMismatch { shape: Shape, len: usize, expected: usize },
    #[error("I/O failure on {path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("line {line}: expected `sample-id<TAB>class-index`")]
    MalformedLine { line: usize },
    #[error("line {line}: duplicate sample id `{id}`")]
    DuplicateSample { line: usize, id: String },
    #[error("line {line}: class index `{value}` is not a non-negative integer")]
    NonNumericClass { line: usize, value: String },
    #[error("I/O failure on {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// Dimensions of a rank-4 NCHW tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Shape {
        Shape { n, c, h, w }
    }

    /// Element count, or `None` if it does not fit in `usize`.
    pub fn checked_len(&self) -> Option<usize> {
        self.n.checked_mul(self.c)?.checked_mul(self.h)?.checked_mul(self.w)
    }

    /// Element count. Panics on overflow; shapes built through
    /// [`Tensor::new`] or the file readers never overflow.
    pub fn len(&self) -> usize {
        self.checked_len().expect("shape element count overflows usize")
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per batch item (`c·h·w`).
    pub fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Flat offset of element `(n, c, y, x)`.
    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(n < self.n && c < self.c && y < self.h && x < self.w);
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Row-major NCHW `f32` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Tensor, TensorError> {
        let expected = shape.checked_len().ok_or_else(|| {
            TensorError::ShapeOverflow(shape.dims().map(|d| d as u64))
        })?;
        if data.len() != expected {
            return Err(TensorError::LengthMismatch { shape, len: data.len(), expected });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Tensor {
        Tensor { shape, data: vec![0.0; shape.len()] }
    }

    pub fn filled(shape: Shape, value: f32) -> Tensor {
        Tensor { shape, data: vec![value; shape.len()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the payload in bytes when shipped as binary32.
    pub fn byte_len(&self) -> usize {
        self.data.len() * std::mem::size_of::<f32>()
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.shape.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.shape.offset(n, c, y, x);
        self.data[i] = v;
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: Shape) -> Result<Tensor, TensorError> {
        Tensor::new(shape, self.data)
    }

    /// Serializes to NTSR bytes.
    pub fn to_ntsr_bytes(&self) -> Result<Vec<u8>, TensorError> {
        let dims = self.shape.dims();
        let mut dims32 = [0u32; 4];
        for (dst, &d) in dims32.iter_mut().zip(&dims) {
            *dst = u32::try_from(d)
                .map_err(|_| TensorError::ShapeOverflow(dims.map(|d| d as u64)))?;
        }
        let mut out = Vec::with_capacity(NTSR_HEADER_LEN + self.byte_len());
        out.extend_from_slice(&NTSR_MAGIC);
        out.extend_from_slice(&NTSR_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        for d in dims32 {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        Ok(out)
    }

    /// Parses NTSR bytes. The buffer must contain exactly one tensor.
    pub fn from_ntsr_bytes(bytes: &[u8]) -> Result<Tensor, TensorError> {
        if bytes.len() < NTSR_HEADER_LEN {
            return Err(TensorError::MalformedHeader(format!(
                "need {NTSR_HEADER_LEN} header bytes, found {}",
                bytes.len()
            )));
        }
        if bytes[0..4] != NTSR_MAGIC {
            return Err(TensorError::MalformedHeader(format!("bad magic {:02X?}", &bytes[0..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != NTSR_VERSION {
            return Err(TensorError::MalformedHeader(format!("unsupported version {version}")));
        }
        let reserved = u16::from_le_bytes([bytes[6], bytes[7]]);
        if reserved != 0 {
            return Err(TensorError::MalformedHeader(format!("reserved field is {reserved}")));
        }
        let mut dims = [0u64; 4];
        for (i, d) in dims.iter_mut().enumerate() {
            let o = 8 + 4 * i;
            *d = u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as u64;
        }
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .and_then(|c| usize::try_from(c).ok())
            .and_then(|c| c.checked_mul(4).map(|b| (c, b)));
        let Some((count, payload_len)) = count else {
            return Err(TensorError::ShapeOverflow(dims));
        };
        let payload = &bytes[NTSR_HEADER_LEN..];
        if payload.len() < payload_len {
            return Err(TensorError::TruncatedPayload { expected: payload_len, found: payload.len() });
        }
        if payload.len() > payload_len {
            return Err(TensorError::TrailingData(payload.len() - payload_len));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_bits(u32::from_le_bytes(b.try_into().unwrap())))
            .collect::<Vec<_>>();
        debug_assert_eq!(data.len(), count);
        let shape = Shape::new(dims[0] as usize, dims[1] as usize, dims[2] as usize, dims[3] as usize);
        Ok(Tensor { shape, data })
    }
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Tensor, TensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorError::Io { path: path.display().to_string(), source })?;
    Tensor::from_ntsr_bytes(&bytes)
}

pub fn write_tensor_file(t: &Tensor, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let path = path.as_ref();
    let bytes = t.to_ntsr_bytes()?;
    let io_err = |source| TensorError::Io { path: path.display().to_string(), source };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&bytes).map_err(io_err)?;
    Ok(())
}

/// One ground-truth record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Label {
    pub sample_id: String,
    pub class: usize,
}

pub fn parse_labels(text: &str) -> Result<Vec<Label>, LabelError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    // a trailing LF terminates the last record rather than opening an empty one
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(out);
    }
    for (i, line) in body.split('\n').enumerate() {
        let lineno = i + 1;
        let mut fields = line.split('\t');
        let (Some(id), Some(class), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(LabelError::MalformedLine { line: lineno });
        };
        if id.is_empty() {
            return Err(LabelError::MalformedLine { line: lineno });
        }
        if class.is_empty() || !class.bytes().all(|b| b.is_ascii_digit()) {
            return Err(LabelError::NonNumericClass { line: lineno, value: class.to_string() });
        }
        let class = class
            .parse::<usize>()
            .map_err(|_| LabelError::NonNumericClass { line: lineno, value: class.to_string() })?;
        if !seen.insert(id.to_string()) {
            return Err(LabelError::DuplicateSample { line: lineno, id: id.to_string() });
        }
        out.push(Label { sample_id: id.to_string(), class });
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<Label>, LabelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| LabelError::Io { path: path.display().to_string(), source })?;
    parse_labels(&text)
}

pub fn write_labels(labels: &[Label], path: impl AsRef<Path>) -> io::Result<()> {
    let mut text = String::new();
    for l in labels {
        text.push_str(&l.sample_id);
        text.push('\t');
        text.push_str(&l.class.to_string());
        text.push('\n');
    }
    fs::write(path, text)
}
