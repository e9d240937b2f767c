use crate::embedkit::{dot, norm, Matrix};
use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-4;

fn check_pair(x: &Matrix, y: &Matrix, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch {
            expected: x.rows() * x.cols(),
            got: y.rows() * y.cols(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::invalid("contrastive loss needs at least one pair"));
    }
    for (name, m) in [("first", x), ("second", y)] {
        for i in 0..m.rows() {
            let n = norm(m.row(i));
            if (n - 1.0).abs() > NORM_TOL {
                return Err(Error::invalid(format!("{name} input row {i} has norm {n}, expected unit norm")));
            }
        }
    }
    Ok(())
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Symmetric InfoNCE, the mean of the row-wise and column-wise cross entropies
/// over the similarity logits `x_i · y_j / tau`. Also returns the gradients
/// with respect to `x` and `y`.
pub fn info_nce_with_grads(x: &Matrix, y: &Matrix, tau: f64) -> Result<(f64, Matrix, Matrix)> {
    check_pair(x, y, tau)?;
    let n = x.rows();
    let logits = Matrix::from_fn(n, n, |i, j| dot(x.row(i), y.row(j)) / tau);

    let row_lse: Vec<f64> = (0..n).map(|i| log_sum_exp(logits.row(i).iter().copied())).collect();
    let col_lse: Vec<f64> = (0..n)
        .map(|j| log_sum_exp((0..n).map(|i| logits.get(i, j))))
        .collect();

    let mut row_loss = 0.0;
    let mut col_loss = 0.0;
    for i in 0..n {
        row_loss += row_lse[i] - logits.get(i, i);
        col_loss += col_lse[i] - logits.get(i, i);
    }
    let nf = n as f64;
    let loss = 0.5 * (row_loss / nf + col_loss / nf);

    // dL/dlogit_ij = (softmax_row_ij + softmax_col_ij - 2 δ_ij) / (2N)
    let g = Matrix::from_fn(n, n, |i, j| {
        let s = logits.get(i, j);
        let delta = if i == j { 2.0 } else { 0.0 };
        ((s - row_lse[i]).exp() + (s - col_lse[j]).exp() - delta) / (2.0 * nf)
    });
    let scale = 1.0 / tau;
    let dx = g.matmul(y)?.scale(scale);
    let dy = g.transpose().matmul(x)?.scale(scale);
    Ok((loss, dx, dy))
}

/// Symmetric InfoNCE between row-aligned unit-norm matrices.
pub fn info_nce(v: &Matrix, t: &Matrix, tau: f64) -> Result<f64> {
    info_nce_with_grads(v, t, tau).map(|(l, _, _)| l)
}

/// The same contrastive form applied to a real/generated pairing, e.g. real
/// images against generated captions.
pub fn cross_positive_loss(real: &Matrix, generated: &Matrix, tau: f64) -> Result<f64> {
    info_nce(real, generated, tau)
}
