//! Dense linear algebra over embedding rows and the shared embedding file format.
//!
//! All arithmetic is carried out in `f64`. Dot products reduce strictly left to
//! right so that a value computed here is the same no matter which thread or
//! call site produced it.

mod format;
mod manifest;

pub use format::{load_embeddings, read_embeddings, save_embeddings, write_embeddings, HEADER_LEN, MAGIC, VERSION};
pub use manifest::{Corpus, ItemKind, ItemRecord, Manifest};

use crate::error::{Error, Result};

/// General row-major dense matrix. Used for projection heads, adapter factors
/// and similarity tables; unlike [`EmbeddingMatrix`] it may have zero columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · other`, accumulating each entry over the inner index in order.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let lhs = self.row(i);
            let dst = out.row_mut(i);
            for (k, &a) in lhs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `x · self`.
    pub fn left_mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (k, &a) in x.iter().enumerate() {
            for (d, &b) in out.iter_mut().zip(self.row(k)) {
                *d += a * b;
            }
        }
        Ok(out)
    }

    /// `self + scale · other`.
    pub fn add_scaled(&self, other: &Matrix, scale: f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// N×D block of embedding rows. Every value is finite and `dim >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be at least 1"));
        }
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "row {} col {} is {}",
                pos / dim,
                pos % dim,
                data[pos]
            )));
        }
        Ok(EmbeddingMatrix { rows, dim, data })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(0, dim, Vec::new())
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::invalid("from_rows needs at least one row to infer dim"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Copies rows `[start, end)` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.rows {
            return Err(Error::invalid(format!(
                "row range [{start}, {end}) outside matrix with {} rows",
                self.rows
            )));
        }
        Ok(EmbeddingMatrix {
            rows: end - start,
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        })
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.dim,
            data: self.data.clone(),
        }
    }
}

impl TryFrom<Matrix> for EmbeddingMatrix {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        EmbeddingMatrix::new(m.rows, m.cols, m.data)
    }
}

/// Left-to-right dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Returns `a / |a|`, rejecting zero or non-finite norms.
pub fn normalize_vec(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Degenerate(format!("vector norm is {n}")));
    }
    Ok(a.iter().map(|x| x / n).collect())
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(m.data.len());
    for (i, row) in m.iter_rows().enumerate() {
        let n = norm(row);
        if n == 0.0 {
            return Err(Error::Degenerate(format!("row {i} has zero norm")));
        }
        data.extend(row.iter().map(|x| x / n));
    }
    EmbeddingMatrix::new(m.rows, m.dim, data)
}

#[inline]
fn cosine_from_parts(d: f64, na: f64, nb: f64) -> f64 {
    (d / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity of two non-zero vectors of equal length.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    Ok(cosine_from_parts(dot(a, b), na, nb))
}

/// Table of cosine similarities, entry `(i, j)` comparing `a` row `i` with `b` row `j`.
pub fn pairwise_sim_matrix(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<Matrix> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    let norms = |m: &EmbeddingMatrix| -> Result<Vec<f64>> {
        m.iter_rows()
            .enumerate()
            .map(|(i, r)| match norm(r) {
                0.0 => Err(Error::Degenerate(format!("row {i} has zero norm"))),
                n => Ok(n),
            })
            .collect()
    };
    let (na, nb) = (norms(a)?, norms(b)?);
    Ok(Matrix::from_fn(a.rows, b.rows, |i, j| {
        cosine_from_parts(dot(a.row(i), b.row(j)), na[i], nb[j])
    }))
}
