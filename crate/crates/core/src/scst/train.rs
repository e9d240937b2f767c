use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::beam::beam_search;
use super::policy::ToyPolicy;
use super::reward::{baseline, reward, scst_gradient};
use crate::error::{Error, Result};
use crate::paclearn::{adamw_step, AdamState};
use crate::scoring::ScoreConfig;

/// Teacher-forced cross entropy `-Σ_k log p(t_k | t_<k, image)`.
pub fn xent_loss(policy: &ToyPolicy, image: &[f64], gt: &[usize]) -> Result<f64> {
    check_gt(policy, gt)?;
    Ok(-policy.sequence_log_prob(image, gt)?)
}

/// Gradient of [`xent_loss`] with respect to the policy parameters.
pub fn xent_grad(policy: &ToyPolicy, image: &[f64], gt: &[usize]) -> Result<Vec<f64>> {
    check_gt(policy, gt)?;
    Ok(policy.grad_log_prob(image, gt)?.into_iter().map(|g| -g).collect())
}

fn check_gt(policy: &ToyPolicy, gt: &[usize]) -> Result<()> {
    if gt.is_empty() {
        return Err(Error::invalid("ground-truth caption is empty"));
    }
    policy.check_tokens(gt)?;
    if let Some(eos) = policy.eos() {
        if gt.last() != Some(&eos) {
            return Err(Error::invalid("ground-truth caption must end with the end token"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XentConfig {
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// A captioning example: image embedding and ground-truth token ids.
pub type Example = (Vec<f64>, Vec<usize>);

/// Cross-entropy pre-training with Adam; returns the mean batch loss per step.
pub fn xent_train(policy: &mut ToyPolicy, examples: &[Example], cfg: &XentConfig) -> Result<Vec<f64>> {
    if examples.is_empty() || cfg.batch_size == 0 {
        return Err(Error::invalid("xent training needs examples and a positive batch size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = policy.params();
    let mut state = AdamState::new(params.len(), 0.0);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let batch = cfg.batch_size.min(examples.len());
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for &i in &order[cursor..cursor + batch] {
            let (img, gt) = &examples[i];
            loss += xent_loss(policy, img, gt)?;
            for (a, g) in grad.iter_mut().zip(xent_grad(policy, img, gt)?) {
                *a += g / batch as f64;
            }
        }
        cursor += batch;
        adamw_step(&mut params, &grad, &mut state, cfg.lr)?;
        policy.set_params(&params)?;
        losses.push(loss / batch as f64);
    }
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScstConfig {
    /// Beam size `l`; also the number of captions averaged into the baseline.
    pub beam_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub steps: usize,
    pub images_per_step: usize,
}

impl Default for ScstConfig {
    fn default() -> Self {
        ScstConfig {
            beam_size: 5,
            lr: 0.02,
            seed: 0,
            steps: 200,
            images_per_step: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScstOutcome {
    pub policy: ToyPolicy,
    /// Mean beam reward of the images used at each step, before the update.
    pub reward_curve: Vec<f64>,
}

/// Self-critical training: per image, decode `beam_size` beams, reward them,
/// subtract the beam-mean baseline and take an Adam step on the averaged
/// policy gradient. `refs[i]`, when given, holds reference captions for
/// `images[i]` and switches to the reference-based reward.
pub fn scst_train(
    policy: &ToyPolicy,
    images: &[Vec<f64>],
    refs: Option<&[Vec<Vec<usize>>]>,
    cfg: &ScstConfig,
    score_cfg: &ScoreConfig,
) -> Result<ScstOutcome> {
    if images.is_empty() || cfg.images_per_step == 0 || cfg.beam_size == 0 {
        return Err(Error::invalid("scst needs images, a positive batch and beam size"));
    }
    if refs.is_some_and(|r| r.len() != images.len()) {
        return Err(Error::invalid("one reference list per image is required"));
    }
    let mut policy = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = policy.params();
    let mut state = AdamState::new(params.len(), 0.0);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let batch = cfg.images_per_step.min(images.len());
    let mut cursor = order.len();
    let mut curve = Vec::with_capacity(cfg.steps);

    for _ in 0..cfg.steps {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let mut grad = vec![0.0; params.len()];
        let mut reward_sum = 0.0;
        let mut reward_count = 0usize;
        for &i in &order[cursor..cursor + batch] {
            let img = &images[i];
            let beams: Vec<Vec<usize>> = beam_search(&policy, img, cfg.beam_size)?
                .into_iter()
                .map(|b| b.tokens)
                .collect();
            let image_refs = refs.map(|r| r[i].as_slice());
            let rewards = beams
                .iter()
                .map(|b| reward(&policy, img, b, score_cfg, image_refs))
                .collect::<Result<Vec<_>>>()?;
            let b = baseline(&rewards)?;
            reward_sum += rewards.iter().sum::<f64>();
            reward_count += rewards.len();
            for (a, g) in grad.iter_mut().zip(scst_gradient(&policy, img, &beams, &rewards, b)?) {
                *a += g / batch as f64;
            }
        }
        cursor += batch;
        curve.push(reward_sum / reward_count as f64);
        adamw_step(&mut params, &grad, &mut state, cfg.lr)?;
        policy.set_params(&params)?;
    }
    Ok(ScstOutcome {
        policy,
        reward_curve: curve,
    })
}

/// Mean reward of the top beam over `images`, reference-based when `refs`
/// holds one reference list per image.
pub fn mean_top_beam_reward(
    policy: &ToyPolicy,
    images: &[Vec<f64>],
    refs: Option<&[Vec<Vec<usize>>]>,
    beam_size: usize,
    score_cfg: &ScoreConfig,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::invalid("no images"));
    }
    if refs.is_some_and(|r| r.len() != images.len()) {
        return Err(Error::invalid("one reference list per image is required"));
    }
    let mut total = 0.0;
    for (i, img) in images.iter().enumerate() {
        let best = beam_search(policy, img, beam_size)?;
        total += reward(policy, img, &best[0].tokens, score_cfg, refs.map(|r| r[i].as_slice()))?;
    }
    Ok(total / images.len() as f64)
}
