//! Captioning-metric engine over precomputed dual-encoder embeddings.
//!
//! The crate is organised around the life of an embedding:
//!
//! * [`embedkit`] loads, validates and compares embedding matrices and owns
//!   the on-disk `PACE` format shared with the extractor.
//! * [`scoring`] turns image/video and caption embeddings into PAC scores,
//!   reference-based scores and IDF-weighted fine-grained video scores.
//! * [`paclearn`] trains low-rank adapters on frozen projection heads with the
//!   positive-augmented contrastive objective.
//! * [`evalstats`] measures a metric against human judgments (Kendall,
//!   Spearman, pairwise preference accuracy, FOIL accuracy).
//! * [`scst`] uses the score as a reward for self-critical sequence training of
//!   a small autoregressive captioner, plus grammar diagnostics.
//! * [`pipeline`] scores whole manifests.

pub mod embedkit;
pub mod error;
pub mod jsonl;
pub mod evalstats;
pub mod paclearn;
pub mod pipeline;
pub mod scoring;
pub mod scst;

pub use embedkit::{cosine_sim, l2_normalize, EmbeddingMatrix, ItemKind, ItemRecord, Manifest, Matrix};
pub use error::{Error, Result};
pub use scoring::{IdfTable, ScoreConfig, ScoreRecord, TokenizedCaption, VideoEmbedding};
