//! Agreement between a metric and human judgments.
//!
//! Rank correlations (Kendall τ_b, τ_c, Spearman ρ) for graded judgments,
//! preference accuracy for caption pairs, and FOIL accuracy for
//! correct/hallucinated caption pairs.

mod accuracy;
mod correlation;

pub use accuracy::{
    foil_accuracy, pairwise_accuracy, Category, FoilPair, FoilSet, PairwiseAccuracy, PairwiseConfig, PairwiseItem,
    PairwiseSet,
};
pub use correlation::{correlations, kendall_tau_b, kendall_tau_c, spearman_rho, Correlations};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Raw,
    /// Share of positive votes among an item's binary annotations.
    MeanProportionYes,
}

/// One human-rated item. Either `metric_score` is given directly or the
/// metric is computed from `image`/`caption`/`refs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_votes: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_score: Option<f64>,
}

impl Judgment {
    pub fn human(&self, aggregation: Aggregation) -> Result<f64> {
        let value = match aggregation {
            Aggregation::Raw => self
                .human_score
                .ok_or_else(|| Error::invalid(format!("judgment {:?} has no human_score", self.item_id)))?,
            Aggregation::MeanProportionYes => {
                let votes = self
                    .human_votes
                    .as_ref()
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| Error::invalid(format!("judgment {:?} has no human_votes", self.item_id)))?;
                votes.iter().filter(|&&v| v).count() as f64 / votes.len() as f64
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("human score of {:?}", self.item_id)));
        }
        Ok(value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentSet {
    pub items: Vec<Judgment>,
    pub aggregation: Aggregation,
}

impl JudgmentSet {
    pub fn new(items: Vec<Judgment>, aggregation: Aggregation) -> Result<Self> {
        if items.len() < 2 {
            return Err(Error::invalid("a judgment set needs at least two items"));
        }
        Ok(JudgmentSet { items, aggregation })
    }

    pub fn human_scores(&self) -> Result<Vec<f64>> {
        self.items.iter().map(|j| j.human(self.aggregation)).collect()
    }
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub metric: String,
    pub dataset: String,
    pub statistic: String,
    pub value: f64,
    pub n: usize,
    pub seed: Option<u64>,
}
