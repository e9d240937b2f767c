//! Positive-augmented contrastive training of low-rank adapters.
//!
//! Pre-projection image and caption features go through frozen projection
//! heads plus a trainable rank-r delta, are ℓ2-normalised, and are trained with
//! a symmetric InfoNCE objective on real pairs plus two cross terms that treat
//! generated images and generated captions as extra positives.

mod checkpoint;
mod experiment;
mod lora;
mod loss;
mod objective;
mod optim;
mod synth;
mod train;

pub use experiment::{run_synthetic, SyntheticRun, SyntheticTask};
pub use checkpoint::{config_hash, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointHeader};
pub use lora::{lora_forward, Adapters, FrozenHeads, LoraAdapter, ALLOWED_RANKS};
pub use loss::{cross_positive_loss, info_nce, info_nce_with_grads};
pub use objective::{combined_loss, combined_loss_grad, project_backward, AdapterGrads, LossWeights};
pub use optim::{adamw_step, AdamState};
pub use synth::ClusterGenerator;
pub use train::{recall_at_1, train_adapters, HistoryPoint, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

/// Real image, real caption, generated image and generated caption features
/// for one training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTuple {
    pub v: Vec<f64>,
    pub t: Vec<f64>,
    pub v_gen: Vec<f64>,
    pub t_gen: Vec<f64>,
}
