use serde::{Deserialize, Serialize};

use super::lora::{Adapters, FrozenHeads, LoraAdapter};
use super::loss::info_nce_with_grads;
use super::DataTuple;
use crate::embedkit::{dot, norm, Matrix};
use crate::error::{Error, Result};

/// Temperature and cross-term weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub tau: f64,
    pub lambda_v: f64,
    pub lambda_t: f64,
}

/// Gradients for every adapter factor, shaped like the factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads {
    pub image_a: Matrix,
    pub image_b: Matrix,
    pub text_a: Matrix,
    pub text_b: Matrix,
}

impl AdapterGrads {
    /// Same ordering as [`Adapters::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        [&self.image_a, &self.image_b, &self.text_a, &self.text_b]
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .collect()
    }
}

struct Projected {
    x: Matrix,
    u: Matrix,
    norms: Vec<f64>,
}

fn stack(rows: &[&[f64]], what: &str) -> Result<Matrix> {
    let d = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * d);
    for r in rows {
        if r.len() != d {
            return Err(Error::invalid(format!("{what} features have inconsistent lengths")));
        }
        data.extend_from_slice(r);
    }
    let m = Matrix::from_vec(rows.len(), d, data)?;
    if !m.is_finite() {
        return Err(Error::NonFinite(format!("{what} features")));
    }
    Ok(m)
}

fn project(x: Matrix, proj: &Matrix) -> Result<Projected> {
    let z = x.matmul(proj)?;
    let mut u = z.clone();
    let mut norms = Vec::with_capacity(z.rows());
    for i in 0..z.rows() {
        let n = norm(z.row(i));
        if n == 0.0 {
            return Err(Error::Degenerate(format!("projected row {i} has zero norm")));
        }
        u.row_mut(i).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok(Projected { x, u, norms })
}

/// Accumulates `xᵀ · dz` into `acc`, where `dz` is the gradient through the
/// row normalisation `u = z / |z|`.
fn accumulate_projection_grad(p: &Projected, du: &Matrix, acc: &mut Matrix) {
    for i in 0..p.u.rows() {
        let u = p.u.row(i);
        let g = du.row(i);
        let radial = dot(u, g);
        let dz: Vec<f64> = u.iter().zip(g).map(|(ui, gi)| (gi - ui * radial) / p.norms[i]).collect();
        for (k, &xk) in p.x.row(i).iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            for (a, d) in acc.row_mut(k).iter_mut().zip(&dz) {
                *a += xk * d;
            }
        }
    }
}

fn factor_grads(adapter: &LoraAdapter, d_proj: &Matrix) -> Result<(Matrix, Matrix)> {
    let s = adapter.scale();
    let da = d_proj.matmul(&adapter.b().transpose())?.scale(s);
    let db = adapter.a().transpose().matmul(d_proj)?.scale(s);
    Ok((da, db))
}

/// Gradient of the adapter factors given an upstream gradient on the
/// normalised projected rows of `features`.
pub fn project_backward(
    features: &Matrix,
    base: &Matrix,
    adapter: &LoraAdapter,
    upstream: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let proj = adapter.effective_projection(base)?;
    let p = project(features.clone(), &proj)?;
    if upstream.shape() != p.u.shape() {
        return Err(Error::DimensionMismatch {
            expected: p.u.rows() * p.u.cols(),
            got: upstream.rows() * upstream.cols(),
        });
    }
    let mut acc = Matrix::zeros(proj.rows(), proj.cols());
    accumulate_projection_grad(&p, upstream, &mut acc);
    factor_grads(adapter, &acc)
}

struct Forward {
    loss: f64,
    v: Projected,
    v_gen: Projected,
    t: Projected,
    t_gen: Projected,
    dv: Matrix,
    dv_gen: Matrix,
    dt: Matrix,
    dt_gen: Matrix,
}

fn forward(batch: &[DataTuple], heads: &FrozenHeads, adapters: &Adapters, w: &LossWeights) -> Result<Forward> {
    if batch.is_empty() {
        return Err(Error::invalid("batch must contain at least one tuple"));
    }
    if w.lambda_v < 0.0 || w.lambda_t < 0.0 {
        return Err(Error::invalid("loss weights must be non-negative"));
    }
    let img_proj = adapters.image.effective_projection(&heads.image)?;
    let txt_proj = adapters.text.effective_projection(&heads.text)?;
    let col = |f: fn(&DataTuple) -> &[f64]| batch.iter().map(f).collect::<Vec<_>>();

    let v = project(stack(&col(|d| &d.v), "image")?, &img_proj)?;
    let v_gen = project(stack(&col(|d| &d.v_gen), "generated image")?, &img_proj)?;
    let t = project(stack(&col(|d| &d.t), "caption")?, &txt_proj)?;
    let t_gen = project(stack(&col(|d| &d.t_gen), "generated caption")?, &txt_proj)?;

    let (l_vt, mut dv, mut dt) = info_nce_with_grads(&v.u, &t.u, w.tau)?;
    let mut loss = l_vt;
    let mut dv_gen = Matrix::zeros(v_gen.u.rows(), v_gen.u.cols());
    let mut dt_gen = Matrix::zeros(t_gen.u.rows(), t_gen.u.cols());
    if w.lambda_v != 0.0 {
        // generated images against real captions
        let (l, dvg, dtr) = info_nce_with_grads(&v_gen.u, &t.u, w.tau)?;
        loss += w.lambda_v * l;
        dv_gen = dvg.scale(w.lambda_v);
        dt = dt.add_scaled(&dtr, w.lambda_v)?;
    }
    if w.lambda_t != 0.0 {
        // real images against generated captions
        let (l, dvr, dtg) = info_nce_with_grads(&v.u, &t_gen.u, w.tau)?;
        loss += w.lambda_t * l;
        dv = dv.add_scaled(&dvr, w.lambda_t)?;
        dt_gen = dtg.scale(w.lambda_t);
    }
    Ok(Forward {
        loss,
        v,
        v_gen,
        t,
        t_gen,
        dv,
        dv_gen,
        dt,
        dt_gen,
    })
}

/// `L(V, T) + λ_v · L(V', T) + λ_t · L(V, T')` on adapter-projected,
/// normalised features.
pub fn combined_loss(batch: &[DataTuple], heads: &FrozenHeads, adapters: &Adapters, weights: &LossWeights) -> Result<f64> {
    forward(batch, heads, adapters, weights).map(|f| f.loss)
}

/// The combined loss and its exact gradient with respect to all four adapter
/// factors.
pub fn combined_loss_grad(
    batch: &[DataTuple],
    heads: &FrozenHeads,
    adapters: &Adapters,
    weights: &LossWeights,
) -> Result<(f64, AdapterGrads)> {
    let f = forward(batch, heads, adapters, weights)?;

    let mut d_img = Matrix::zeros(heads.image.rows(), heads.image.cols());
    accumulate_projection_grad(&f.v, &f.dv, &mut d_img);
    accumulate_projection_grad(&f.v_gen, &f.dv_gen, &mut d_img);
    let mut d_txt = Matrix::zeros(heads.text.rows(), heads.text.cols());
    accumulate_projection_grad(&f.t, &f.dt, &mut d_txt);
    accumulate_projection_grad(&f.t_gen, &f.dt_gen, &mut d_txt);

    let (image_a, image_b) = factor_grads(&adapters.image, &d_img)?;
    let (text_a, text_b) = factor_grads(&adapters.text, &d_txt)?;
    Ok((
        f.loss,
        AdapterGrads {
            image_a,
            image_b,
            text_a,
            text_b,
        },
    ))
}
