use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedkit::{normalize_vec, EmbeddingMatrix, Matrix};
use crate::error::{Error, Result};

/// Ranks accepted when initialising adapters for training.
pub const ALLOWED_RANKS: [usize; 4] = [2, 4, 8, 16];

/// Rank-r delta `(alpha / r) · A · B` added to a frozen `d_in × d_out`
/// projection.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    a: Matrix,
    b: Matrix,
    alpha: f64,
}

impl LoraAdapter {
    /// Gaussian `A` (std `init_std`) and zero `B`, so the adapted projection
    /// starts out equal to the frozen one.
    pub fn init<R: Rng + ?Sized>(
        d_in: usize,
        d_out: usize,
        rank: usize,
        alpha: f64,
        init_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !ALLOWED_RANKS.contains(&rank) {
            return Err(Error::invalid(format!("adapter rank must be one of {ALLOWED_RANKS:?}, got {rank}")));
        }
        let normal = Normal::new(0.0, init_std).map_err(|e| Error::invalid(e.to_string()))?;
        let a = Matrix::from_fn(d_in, rank, |_, _| normal.sample(rng));
        Self::from_parts(a, Matrix::zeros(rank, d_out), alpha)
    }

    pub fn from_parts(a: Matrix, b: Matrix, alpha: f64) -> Result<Self> {
        if a.cols() == 0 || a.cols() != b.rows() {
            return Err(Error::invalid(format!(
                "adapter factors {:?} and {:?} do not share a non-zero rank",
                a.shape(),
                b.shape()
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("adapter alpha must be positive, got {alpha}")));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite("adapter factor".into()));
        }
        Ok(LoraAdapter { a, b, alpha })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn a_mut(&mut self) -> &mut Matrix {
        &mut self.a
    }

    pub fn b_mut(&mut self) -> &mut Matrix {
        &mut self.b
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn d_in(&self) -> usize {
        self.a.rows()
    }

    pub fn d_out(&self) -> usize {
        self.b.cols()
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    /// `base + (alpha / r) · A · B`.
    pub fn effective_projection(&self, base: &Matrix) -> Result<Matrix> {
        if base.shape() != (self.d_in(), self.d_out()) {
            return Err(Error::invalid(format!(
                "frozen projection {:?} does not match adapter {}x{}",
                base.shape(),
                self.d_in(),
                self.d_out()
            )));
        }
        base.add_scaled(&self.a.matmul(&self.b)?, self.scale())
    }

    pub fn num_params(&self) -> usize {
        self.a.as_slice().len() + self.b.as_slice().len()
    }
}

/// `x · (base + (alpha / r) · A · B)`.
pub fn lora_forward(base: &Matrix, adapter: &LoraAdapter, x: &[f64]) -> Result<Vec<f64>> {
    adapter.effective_projection(base)?.left_mul(x)
}

/// Frozen final projection heads of the two encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenHeads {
    pub image: Matrix,
    pub text: Matrix,
}

impl FrozenHeads {
    pub fn new(image: Matrix, text: Matrix) -> Result<Self> {
        if image.cols() != text.cols() {
            return Err(Error::DimensionMismatch {
                expected: image.cols(),
                got: text.cols(),
            });
        }
        Ok(FrozenHeads { image, text })
    }

    pub fn embed_dim(&self) -> usize {
        self.image.cols()
    }
}

/// Image-side and text-side adapters trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapters {
    pub image: LoraAdapter,
    pub text: LoraAdapter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) enum Side {
    Image,
    Text,
}

impl Adapters {
    pub fn init<R: Rng + ?Sized>(heads: &FrozenHeads, rank: usize, alpha: f64, init_std: f64, rng: &mut R) -> Result<Self> {
        Ok(Adapters {
            image: LoraAdapter::init(heads.image.rows(), heads.image.cols(), rank, alpha, init_std, rng)?,
            text: LoraAdapter::init(heads.text.rows(), heads.text.cols(), rank, alpha, init_std, rng)?,
        })
    }

    pub(crate) fn side(&self, side: Side) -> &LoraAdapter {
        match side {
            Side::Image => &self.image,
            Side::Text => &self.text,
        }
    }

    /// Parameters in the order image A, image B, text A, text B.
    pub fn to_flat(&self) -> Vec<f64> {
        [self.image.a(), self.image.b(), self.text.a(), self.text.b()]
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total = self.image.num_params() + self.text.num_params();
        if flat.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: flat.len(),
            });
        }
        let mut rest = flat;
        for adapter in [&mut self.image, &mut self.text] {
            for m in [&mut adapter.a, &mut adapter.b] {
                let (head, tail) = rest.split_at(m.as_slice().len());
                m.as_mut_slice().copy_from_slice(head);
                rest = tail;
            }
        }
        Ok(())
    }

    fn encode(&self, heads: &FrozenHeads, side: Side, features: &[Vec<f64>]) -> Result<EmbeddingMatrix> {
        let base = match side {
            Side::Image => &heads.image,
            Side::Text => &heads.text,
        };
        let proj = self.side(side).effective_projection(base)?;
        let rows = features
            .iter()
            .map(|x| normalize_vec(&proj.left_mul(x)?))
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return EmbeddingMatrix::empty(proj.cols());
        }
        EmbeddingMatrix::from_rows(&rows)
    }

    /// Projected, normalised image embeddings.
    pub fn encode_images(&self, heads: &FrozenHeads, features: &[Vec<f64>]) -> Result<EmbeddingMatrix> {
        self.encode(heads, Side::Image, features)
    }

    /// Projected, normalised caption embeddings.
    pub fn encode_texts(&self, heads: &FrozenHeads, features: &[Vec<f64>]) -> Result<EmbeddingMatrix> {
        self.encode(heads, Side::Text, features)
    }
}
