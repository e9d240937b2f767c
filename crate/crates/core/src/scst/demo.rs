use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::beam::beam_search;
use super::grammar::{pct_incorrect_endings, rep_n, GrammarConfig};
use super::train::{mean_top_beam_reward, scst_train, xent_train, ScstConfig, XentConfig};
use super::world::CaptionWorld;
use super::ToyPolicy;
use crate::error::Result;
use crate::scoring::ScoreConfig;

/// End-to-end synthetic run: XE pre-training, then SCST, with held-out
/// reward and grammar diagnostics measured before and after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub dim: usize,
    pub max_len: usize,
    pub filler_scale: f64,
    pub world_seed: u64,
    pub data_seed: u64,
    pub train_examples: usize,
    pub held_out_images: usize,
    pub xent: XentConfig,
    pub scst: ScstConfig,
    /// Beam width used to decode the reported captions.
    pub eval_beam: usize,
    /// Reward with the reference-based score, using each scene's
    /// ground-truth captions as references.
    pub reference_based: bool,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            dim: 16,
            max_len: 8,
            filler_scale: 0.7,
            world_seed: 3,
            data_seed: 11,
            train_examples: 400,
            held_out_images: 100,
            xent: XentConfig {
                lr: 0.05,
                steps: 1000,
                batch_size: 32,
                seed: 1,
            },
            scst: ScstConfig {
                beam_size: 16,
                lr: 0.01,
                ..ScstConfig::default()
            },
            eval_beam: 5,
            reference_based: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionSnapshot {
    pub mean_reward: f64,
    pub rep1: f64,
    pub rep2: f64,
    pub pct_bad_endings: f64,
    pub captions: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub xent_loss_curve: Vec<f64>,
    pub scst_reward_curve: Vec<f64>,
    pub after_xent: CaptionSnapshot,
    pub after_scst: CaptionSnapshot,
}

impl DemoReport {
    pub fn relative_reward_gain(&self) -> f64 {
        self.after_scst.mean_reward / self.after_xent.mean_reward - 1.0
    }
}

fn snapshot(
    policy: &ToyPolicy,
    images: &[Vec<f64>],
    refs: Option<&[Vec<Vec<usize>>]>,
    cfg: &DemoConfig,
    score_cfg: &ScoreConfig,
    grammar: &GrammarConfig,
) -> Result<CaptionSnapshot> {
    let captions = images
        .iter()
        .map(|img| {
            let best = beam_search(policy, img, cfg.eval_beam)?;
            Ok(policy.decode(policy.words(&best[0].tokens)))
        })
        .collect::<Result<Vec<_>>>()?;
    let joined: Vec<String> = captions.iter().map(|c| c.join(" ")).collect();
    Ok(CaptionSnapshot {
        mean_reward: mean_top_beam_reward(policy, images, refs, cfg.eval_beam, score_cfg)?,
        rep1: rep_n(&captions, 1)?,
        rep2: rep_n(&captions, 2)?,
        pct_bad_endings: pct_incorrect_endings(&joined, grammar)?.percent,
        captions,
    })
}

pub fn run_demo(cfg: &DemoConfig, score_cfg: &ScoreConfig, grammar: &GrammarConfig) -> Result<DemoReport> {
    let world = CaptionWorld::new(cfg.dim, cfg.max_len, cfg.filler_scale, cfg.world_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed);
    let (train_images, train_refs): (Vec<_>, Vec<_>) = world.sample_referenced(cfg.train_examples, &mut rng)?.into_iter().unzip();
    let (held_images, held_refs): (Vec<_>, Vec<_>) = world.sample_referenced(cfg.held_out_images, &mut rng)?.into_iter().unzip();
    let examples: Vec<_> = train_images
        .iter()
        .zip(&train_refs)
        .map(|(img, refs)| (img.clone(), refs[rng.random_range(0..refs.len())].clone()))
        .collect();
    let (train_r, held_r) = if cfg.reference_based {
        (Some(train_refs.as_slice()), Some(held_refs.as_slice()))
    } else {
        (None, None)
    };

    let mut policy = world.policy();
    let xent_loss_curve = xent_train(&mut policy, &examples, &cfg.xent)?;
    let after_xent = snapshot(&policy, &held_images, held_r, cfg, score_cfg, grammar)?;

    let outcome = scst_train(&policy, &train_images, train_r, &cfg.scst, score_cfg)?;
    let after_scst = snapshot(&outcome.policy, &held_images, held_r, cfg, score_cfg, grammar)?;

    Ok(DemoReport {
        xent_loss_curve,
        scst_reward_curve: outcome.reward_curve,
        after_xent,
        after_scst,
    })
}
