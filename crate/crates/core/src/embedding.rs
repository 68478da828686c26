//! Embedding matrices and their on-disk formats.
//!
//! Binary layout (`OODE`, version 1): the 4 magic bytes, a `u8` version, `n`
//! and `d` as little-endian `u32`, then `n * d` little-endian `f32` values in
//! row-major order. Row `i` pairs with line `i + 1` of the companion manifest
//! (line 0 is the header).
//!
//! CSV layout: one sample per line, comma-separated decimals, no header.
//!
//! Values are held as `f64` in memory regardless of the file precision.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{read_file, write_file, Reader, Writer};
use crate::error::{OodError, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"OODE";
pub const EMBEDDING_VERSION: u8 = 1;

/// Tolerance on the row norm of a matrix flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    Binary,
    Csv,
}

impl EmbeddingFormat {
    /// `.csv` selects CSV, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EmbeddingFormat::Csv,
            _ => EmbeddingFormat::Binary,
        }
    }
}

/// An `n x d` row-major matrix of finite feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(OodError::Parameter(format!(
                "embedding matrix must be non-empty, got {n}x{d}"
            )));
        }
        if data.len() != n * d {
            return Err(OodError::Parameter(format!(
                "expected {} values for {n}x{d}, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(OodError::data(pos / d, "non-finite value"));
        }
        Ok(EmbeddingMatrix {
            n,
            d,
            data,
            normalized: false,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(OodError::data(
                    i,
                    format!("row has {} values, expected {d}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(OodError::Parameter(format!(
                    "row index {i} out of range for {} rows",
                    self.n
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut out = Self::new(indices.len(), self.d, data)?;
        out.normalized = self.normalized;
        Ok(out)
    }

    pub(crate) fn with_normalized_flag(mut self, normalized: bool) -> Self {
        self.normalized = normalized;
        self
    }

    /// Index of the first all-zero row, if any.
    pub fn first_zero_row(&self) -> Option<usize> {
        self.rows().position(|r| r.iter().all(|&v| v == 0.0))
    }

    /// Scales every row to unit L2 norm.
    pub fn l2_normalize(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_exact_mut(self.d).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(OodError::data(i, "zero row cannot be normalized"));
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        Ok(EmbeddingMatrix {
            n: self.n,
            d: self.d,
            data,
            normalized: true,
        })
    }

    /// Checks the normalized-flag invariant.
    pub fn check_normalized(&self) -> Result<()> {
        for (i, r) in self.rows().enumerate() {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(OodError::data(i, format!("row norm {norm} is not 1")));
            }
        }
        Ok(())
    }

    pub fn to_binary(&self) -> Result<Vec<u8>> {
        let n = u32::try_from(self.n)
            .map_err(|_| OodError::Parameter("row count exceeds u32".into()))?;
        let d = u32::try_from(self.d)
            .map_err(|_| OodError::Parameter("dimension exceeds u32".into()))?;
        let mut w = Writer::new(EMBEDDING_MAGIC, EMBEDDING_VERSION);
        w.u32(n);
        w.u32(d);
        for (i, r) in self.rows().enumerate() {
            for &v in r {
                let x = v as f32;
                if !x.is_finite() {
                    return Err(OodError::data(i, format!("{v} does not fit in f32")));
                }
                w.f32(x);
            }
        }
        Ok(w.finish())
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let (mut r, version) = Reader::open(bytes, EMBEDDING_MAGIC, "embedding file")?;
        if version != EMBEDDING_VERSION {
            return Err(OodError::Format(format!(
                "embedding file: unsupported version {version}"
            )));
        }
        let n = r.u32()? as usize;
        let d = r.u32()? as usize;
        if n == 0 || d == 0 {
            return Err(OodError::Format(format!("embedding file: header n={n}, d={d}")));
        }
        let expected = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| OodError::Format("embedding file: header overflow".into()))?;
        if r.remaining() != expected {
            return Err(OodError::Format(format!(
                "embedding file: header promises {expected} payload bytes, found {}",
                r.remaining()
            )));
        }
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for _ in 0..d {
                let v = r.f32()?;
                if !v.is_finite() {
                    return Err(OodError::data(i, format!("non-finite value {v}")));
                }
                data.push(v as f64);
            }
        }
        let m = Self::new(n, d, data)?;
        m.reject_zero_rows()?;
        Ok(m)
    }

    /// Parses the headerless CSV layout.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut data = Vec::new();
        let mut d = 0;
        let mut n = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| OodError::Format(format!("csv row {i}: {e}")))?;
            if i == 0 {
                d = rec.len();
            } else if rec.len() != d {
                return Err(OodError::data(
                    i,
                    format!("row has {} values, expected {d}", rec.len()),
                ));
            }
            for field in rec.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| OodError::data(i, format!("cannot parse {field:?}")))?;
                if !v.is_finite() {
                    return Err(OodError::data(i, format!("non-finite value {field}")));
                }
                data.push(v);
            }
            n += 1;
        }
        if n == 0 {
            return Err(OodError::Format("csv embedding file is empty".into()));
        }
        let m = Self::new(n, d, data)?;
        m.reject_zero_rows()?;
        Ok(m)
    }

    /// Shortest round-trip decimal representation of every value.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 12);
        for r in self.rows() {
            for (j, v) in r.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    fn reject_zero_rows(&self) -> Result<()> {
        match self.first_zero_row() {
            Some(i) => Err(OodError::data(i, "zero embedding vector")),
            None => Ok(()),
        }
    }
}

pub fn load_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingMatrix> {
    match format {
        EmbeddingFormat::Binary => EmbeddingMatrix::from_binary(&read_file(path)?),
        EmbeddingFormat::Csv => {
            let text = std::fs::read_to_string(path).map_err(|e| OodError::io(path, e))?;
            EmbeddingMatrix::from_csv(&text)
        }
    }
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: &Path, format: EmbeddingFormat) -> Result<()> {
    match format {
        EmbeddingFormat::Binary => write_file(path, &m.to_binary()?),
        EmbeddingFormat::Csv => write_file(path, m.to_csv().as_bytes()),
    }
}
