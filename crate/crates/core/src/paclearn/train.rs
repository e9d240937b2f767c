use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lora::{Adapters, FrozenHeads};
use super::objective::{combined_loss, combined_loss_grad, LossWeights};
use super::optim::{adamw_step, AdamState};
use super::DataTuple;
use crate::embedkit::{dot, EmbeddingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tau: f64,
    pub lambda_v: f64,
    pub lambda_t: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub patience_iters: usize,
    pub seed: u64,
    pub rank: usize,
    pub alpha: f64,
    pub weight_decay: f64,
    pub init_std: f64,
    pub max_iters: usize,
    pub val_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.01,
            lambda_v: 0.1,
            lambda_t: 0.001,
            lr: 1e-4,
            batch_size: 256,
            patience_iters: 1500,
            seed: 0,
            rank: 4,
            alpha: 4.0,
            weight_decay: 0.01,
            init_std: 0.02,
            max_iters: 20_000,
            val_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            tau: self.tau,
            lambda_v: self.lambda_v,
            lambda_t: self.lambda_t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub iteration: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Adapters at the best validation loss seen (the initial ones if no
    /// validation improved on the starting point).
    pub adapters: Adapters,
    pub history: Vec<HistoryPoint>,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub best_iteration: usize,
    pub iterations: usize,
    pub stopped_early: bool,
}

/// Trains both adapters with AdamW on fixed-size shuffled mini-batches.
///
/// Validation runs every `val_every` iterations; training stops once
/// `patience_iters` iterations pass without a new validation minimum, or at
/// `max_iters`. Runs are reproducible from `seed`.
pub fn train_adapters(train: &[DataTuple], val: &[DataTuple], heads: &FrozenHeads, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if cfg.batch_size == 0 || cfg.val_every == 0 {
        return Err(Error::invalid("batch_size and val_every must be positive"));
    }
    let weights = cfg.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adapters = Adapters::init(heads, cfg.rank, cfg.alpha, cfg.init_std, &mut rng)?;
    let mut params = adapters.to_flat();
    let mut state = AdamState::new(params.len(), cfg.weight_decay);

    let initial_val_loss = combined_loss(val, heads, &adapters, &weights)?;
    let mut best = (initial_val_loss, adapters.clone(), 0usize);
    let mut last_improvement = 0usize;

    let batch_size = cfg.batch_size.min(train.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut batch = Vec::with_capacity(batch_size);
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut it = 0usize;

    while it < cfg.max_iters {
        it += 1;
        if cursor + batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        batch.clear();
        batch.extend(order[cursor..cursor + batch_size].iter().map(|&i| train[i].clone()));
        cursor += batch_size;

        let (loss, grads) = combined_loss_grad(&batch, heads, &adapters, &weights)?;
        adamw_step(&mut params, &grads.to_flat(), &mut state, cfg.lr)?;
        adapters.set_flat(&params)?;

        let mut point = HistoryPoint {
            iteration: it,
            train_loss: loss,
            val_loss: None,
        };
        if it.is_multiple_of(cfg.val_every) {
            let vl = combined_loss(val, heads, &adapters, &weights)?;
            point.val_loss = Some(vl);
            if vl < best.0 {
                best = (vl, adapters.clone(), it);
                last_improvement = it;
            }
        }
        history.push(point);
        if it - last_improvement >= cfg.patience_iters {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainOutcome {
        adapters: best.1,
        history,
        initial_val_loss,
        best_val_loss: best.0,
        best_iteration: best.2,
        iterations: it,
        stopped_early,
    })
}

/// Image→text retrieval R@1: image `i` is a hit when its most similar caption
/// (first index on ties) carries the same label. Rows must be unit norm.
pub fn recall_at_1(images: &EmbeddingMatrix, texts: &EmbeddingMatrix, labels: &[usize]) -> Result<f64> {
    if images.rows() != texts.rows() || labels.len() != images.rows() || images.is_empty() {
        return Err(Error::invalid("retrieval needs equally many images, captions and labels"));
    }
    if images.dim() != texts.dim() {
        return Err(Error::DimensionMismatch {
            expected: images.dim(),
            got: texts.dim(),
        });
    }
    let mut hits = 0usize;
    for (i, img) in images.iter_rows().enumerate() {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (j, txt) in texts.iter_rows().enumerate() {
            let s = dot(img, txt);
            if s > best.0 {
                best = (s, j);
            }
        }
        if labels[best.1] == labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / images.rows() as f64)
}
