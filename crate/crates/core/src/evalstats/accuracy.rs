use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pascal-50S pair categories: human-correct, human-incorrect, human-model,
/// model-model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    HC,
    HI,
    HM,
    MM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseItem {
    pub image_id: String,
    pub caption_a: String,
    pub caption_b: String,
    pub votes_a: u32,
    pub votes_b: u32,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairwiseSet {
    pub pairs: Vec<PairwiseItem>,
    /// Reference caption ids available for each image.
    pub ref_pool: BTreeMap<String, Vec<String>>,
}

impl PairwiseSet {
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.pairs.iter().enumerate() {
            if p.votes_a + p.votes_b == 0 {
                return Err(Error::invalid(format!("pair {i} has no human votes")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseConfig {
    pub seed: u64,
    pub draws: usize,
    pub refs_per_draw: usize,
    /// Whether the scorer consumes references; when false no references are
    /// drawn and the pool is not required.
    pub reference_based: bool,
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        PairwiseConfig {
            seed: 0,
            draws: 5,
            refs_per_draw: 5,
            reference_based: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAccuracy {
    pub per_category: BTreeMap<Category, f64>,
    /// Mean of the per-category accuracies.
    pub mean: f64,
    pub draws: usize,
    pub n: usize,
}

/// Preference accuracy against the human-majority caption.
///
/// Each draw breaks human-vote ties with the seeded RNG and, for
/// reference-based scorers, samples `refs_per_draw` references per pair. A
/// pair counts as correct only if the majority caption scores strictly
/// higher. `scorer(image, caption, refs)`.
pub fn pairwise_accuracy<F>(set: &PairwiseSet, mut scorer: F, cfg: &PairwiseConfig) -> Result<PairwiseAccuracy>
where
    F: FnMut(&str, &str, &[String]) -> Result<f64>,
{
    set.validate()?;
    if set.pairs.is_empty() {
        return Err(Error::invalid("pairwise set is empty"));
    }
    if cfg.draws == 0 {
        return Err(Error::invalid("draws must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut hits: BTreeMap<Category, (f64, usize)> = BTreeMap::new();
    for _ in 0..cfg.draws {
        let mut draw_hits: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
        for p in &set.pairs {
            let a_wins = match p.votes_a.cmp(&p.votes_b) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => rng.random_bool(0.5),
            };
            let refs: Vec<String> = if cfg.reference_based {
                let pool = set.ref_pool.get(&p.image_id).map(Vec::as_slice).unwrap_or(&[]);
                if pool.len() < cfg.refs_per_draw || cfg.refs_per_draw == 0 {
                    return Err(Error::invalid(format!(
                        "image {:?} has {} references, {} required",
                        p.image_id,
                        pool.len(),
                        cfg.refs_per_draw
                    )));
                }
                pool.choose_multiple(&mut rng, cfg.refs_per_draw).cloned().collect()
            } else {
                Vec::new()
            };
            let sa = scorer(&p.image_id, &p.caption_a, &refs)?;
            let sb = scorer(&p.image_id, &p.caption_b, &refs)?;
            let correct = if a_wins { sa > sb } else { sb > sa };
            let e = draw_hits.entry(p.category).or_default();
            e.0 += usize::from(correct);
            e.1 += 1;
        }
        for (cat, (ok, total)) in draw_hits {
            let e = hits.entry(cat).or_default();
            e.0 += ok as f64 / total as f64;
            e.1 += 1;
        }
    }
    let per_category: BTreeMap<Category, f64> = hits
        .into_iter()
        .map(|(c, (sum, draws))| (c, sum / draws as f64))
        .collect();
    let mean = per_category.values().sum::<f64>() / per_category.len() as f64;
    Ok(PairwiseAccuracy {
        per_category,
        mean,
        draws: cfg.draws,
        n: set.pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoilPair {
    pub image_id: String,
    pub correct_caption_id: String,
    pub foil_caption_id: String,
    #[serde(default)]
    pub refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FoilSet {
    pub pairs: Vec<FoilPair>,
}

/// Fraction of pairs where the correct caption scores strictly above the
/// foil. `scorer(image, caption, refs)`.
pub fn foil_accuracy<F>(set: &FoilSet, mut scorer: F) -> Result<f64>
where
    F: FnMut(&str, &str, &[String]) -> Result<f64>,
{
    if set.pairs.is_empty() {
        return Err(Error::invalid("foil set is empty"));
    }
    let mut correct = 0usize;
    for p in &set.pairs {
        if p.correct_caption_id == p.foil_caption_id {
            return Err(Error::invalid(format!(
                "foil pair for {:?} uses the same caption twice",
                p.image_id
            )));
        }
        let good = scorer(&p.image_id, &p.correct_caption_id, &p.refs)?;
        let foil = scorer(&p.image_id, &p.foil_caption_id, &p.refs)?;
        if good > foil {
            correct += 1;
        }
    }
    Ok(correct as f64 / set.pairs.len() as f64)
}
