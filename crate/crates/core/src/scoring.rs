//! Bilinear embedding scorers.
//!
//! All scores are evaluated in factored form: both sides are embedded with
//! one sparse-dense product each and then combined with a dense dot product.
//! The D x D kernel `UᵀU` is never formed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{MemnnError, Result};
use crate::features::{FeatureLayout, SparseVector};

const MAGIC: &[u8; 4] = b"MNNM";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixRole {
    /// Supporting-memory scorer.
    Output,
    /// Response scorer.
    Response,
    /// Triple scorer with write-time features.
    OutputTime,
    /// Segmenter embedding.
    Segmenter,
    /// Segmenter classifier vector, stored as a 1 x n matrix.
    SegmenterWeights,
}

impl MatrixRole {
    pub fn tag(self) -> u32 {
        match self {
            MatrixRole::Output => 0,
            MatrixRole::Response => 1,
            MatrixRole::OutputTime => 2,
            MatrixRole::Segmenter => 3,
            MatrixRole::SegmenterWeights => 4,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            0 => MatrixRole::Output,
            1 => MatrixRole::Response,
            2 => MatrixRole::OutputTime,
            3 => MatrixRole::Segmenter,
            4 => MatrixRole::SegmenterWeights,
            _ => return None,
        })
    }
}

/// Dense n x D matrix stored column-major, so that embedding a sparse vector
/// touches one contiguous column per non-zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    role: MatrixRole,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, cols: usize, role: MatrixRole) -> Self {
        assert!(rows >= 1, "embedding dimension must be at least 1");
        EmbeddingMatrix {
            rows,
            cols,
            role,
            data: vec![0.0; rows * cols],
        }
    }

    /// Entries i.i.d. N(0, std²).
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, role: MatrixRole, std: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(rows, cols, role);
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        for v in &mut m.data {
            *v = normal.sample(rng);
        }
        m
    }

    /// Builds from row-major values.
    pub fn from_rows(rows: usize, cols: usize, role: MatrixRole, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(MemnnError::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        let mut m = Self::zeros(rows, cols, role);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, values[r * cols + c]);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn role(&self) -> MatrixRole {
        self.role
    }

    pub fn with_role(mut self, role: MatrixRole) -> Self {
        self.role = role;
        self
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] = v;
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn column_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `U · v`.
    pub fn embed(&self, v: &SparseVector) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut out = vec![0.0; self.rows];
        for &(j, x) in v.entries() {
            for (o, u) in out.iter_mut().zip(self.column(j)) {
                *o += u * x;
            }
        }
        Ok(out)
    }

    fn check(&self, v: &SparseVector) -> Result<()> {
        if v.dim() != self.cols {
            return Err(MemnnError::DimensionMismatch {
                expected: self.cols,
                got: v.dim(),
            });
        }
        Ok(())
    }

    /// Header (magic, n, D, role tag) followed by row-major little-endian f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        w.write_all(&self.role.tag().to_le_bytes())?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                w.write_all(&self.get(r, c).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(MemnnError::MatrixFormat("bad magic".into()));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let tag = u32::from_le_bytes(b4);
        let role = MatrixRole::from_tag(tag).ok_or_else(|| MemnnError::MatrixFormat(format!("unknown role tag {tag}")))?;
        if rows == 0 {
            return Err(MemnnError::MatrixFormat("zero rows".into()));
        }
        let mut m = Self::zeros(rows, cols, role);
        for row in 0..rows {
            for col in 0..cols {
                r.read_exact(&mut b8)?;
                m.set(row, col, f64::from_le_bytes(b8));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Φx(x)ᵀ Uᵀ U Φy(y)`.
pub fn score_embedding(u: &EmbeddingMatrix, fx: &SparseVector, fy: &SparseVector) -> Result<f64> {
    Ok(dot(&u.embed(fx)?, &u.embed(fy)?))
}

/// Embedding score plus `lambda` times the raw bag-of-words overlap.
pub fn score_mixed(u: &EmbeddingMatrix, fx: &SparseVector, fy: &SparseVector, lambda: f64) -> Result<f64> {
    let s = score_embedding(u, fx, fy)?;
    Ok(if lambda == 0.0 { s } else { s + lambda * fx.dot(fy) })
}

/// `fy - fy2 + Φt` with the time features in the trailing dims.
pub fn triple_target(layout: &FeatureLayout, fy: &SparseVector, fy2: &SparseVector, t: [f64; 3]) -> Result<SparseVector> {
    if layout.time_offset().is_none() {
        return Err(MemnnError::MissingTimeDims);
    }
    let diff = fy.sub(fy2);
    let off = layout.word_dim();
    let mut entries: Vec<(usize, f64)> = diff.entries().to_vec();
    entries.extend(t.iter().enumerate().map(|(k, &v)| (off + k, v)));
    SparseVector::from_entries(layout.dim(), entries)
}

/// Signed preference of `fy` over `fy2`: positive prefers `fy`.
pub fn score_time_triple(
    u: &EmbeddingMatrix,
    layout: &FeatureLayout,
    fx: &SparseVector,
    fy: &SparseVector,
    fy2: &SparseVector,
    t: [f64; 3],
) -> Result<f64> {
    if u.cols() != layout.dim() {
        return Err(MemnnError::DimensionMismatch {
            expected: layout.dim(),
            got: u.cols(),
        });
    }
    let z = triple_target(layout, fy, fy2, t)?;
    score_embedding(u, fx, &z)
}

/// Linear classifier in embedding space deciding whether a word buffer is a
/// complete statement.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmenterParams {
    pub u: EmbeddingMatrix,
    pub w: Vec<f64>,
    pub margin: f64,
}

impl SegmenterParams {
    pub fn new(u: EmbeddingMatrix, w: Vec<f64>, margin: f64) -> Result<Self> {
        if w.len() != u.rows() {
            return Err(MemnnError::DimensionMismatch {
                expected: u.rows(),
                got: w.len(),
            });
        }
        Ok(SegmenterParams { u, w, margin })
    }

    pub fn fires(&self, fc: &SparseVector) -> Result<bool> {
        Ok(score_segment(self, fc)? > self.margin)
    }
}

/// `w_segᵀ U_S Φseg(c)`.
pub fn score_segment(p: &SegmenterParams, fc: &SparseVector) -> Result<f64> {
    Ok(dot(&p.w, &p.u.embed(fc)?))
}
