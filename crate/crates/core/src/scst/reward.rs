use super::policy::ToyPolicy;
use crate::embedkit::{norm, normalize_vec};
use crate::error::{Error, Result};
use crate::scoring::{pac_score, ref_pac_score, ScoreConfig};

/// Caption embedding of the toy text encoder: the normalised mean of the
/// word embeddings (end marker excluded). `None` when there are no words or
/// the mean vanishes.
pub fn caption_embedding(policy: &ToyPolicy, tokens: &[usize]) -> Result<Option<Vec<f64>>> {
    policy.check_tokens(tokens)?;
    let words = policy.words(tokens);
    if words.is_empty() {
        return Ok(None);
    }
    let emb = policy.token_embed();
    let mut mean = vec![0.0; emb.cols()];
    for &w in words {
        for (m, e) in mean.iter_mut().zip(emb.row(w)) {
            *m += e;
        }
    }
    mean.iter_mut().for_each(|m| *m /= words.len() as f64);
    if norm(&mean) == 0.0 {
        return Ok(None);
    }
    normalize_vec(&mean).map(Some)
}

/// PAC score of the caption as the reward, or the reference-based score when
/// reference token sequences are given. Captions without words earn 0.
pub fn reward(
    policy: &ToyPolicy,
    image: &[f64],
    caption: &[usize],
    cfg: &ScoreConfig,
    refs: Option<&[Vec<usize>]>,
) -> Result<f64> {
    if caption.is_empty() {
        return Err(Error::invalid("caption must contain at least one token"));
    }
    let Some(t) = caption_embedding(policy, caption)? else {
        return Ok(0.0);
    };
    match refs {
        None => pac_score(image, &t, cfg),
        Some(refs) => {
            let ref_embs = refs
                .iter()
                .map(|r| {
                    caption_embedding(policy, r)?
                        .ok_or_else(|| Error::invalid("reference caption has no words"))
                })
                .collect::<Result<Vec<_>>>()?;
            ref_pac_score(image, &t, &ref_embs, cfg)
        }
    }
}

/// Mean reward over all captions generated for one image.
pub fn baseline(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::invalid("baseline needs at least one reward"));
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

/// `-(1/l) Σ_i (r_i - b) ∇ log p(beam_i)`: the gradient of the self-critical
/// loss with respect to the policy parameters.
pub fn scst_gradient(
    policy: &ToyPolicy,
    image: &[f64],
    beams: &[Vec<usize>],
    rewards: &[f64],
    baseline: f64,
) -> Result<Vec<f64>> {
    if beams.len() != rewards.len() {
        return Err(Error::DimensionMismatch {
            expected: beams.len(),
            got: rewards.len(),
        });
    }
    if beams.is_empty() {
        return Err(Error::invalid("no beams"));
    }
    let l = beams.len() as f64;
    let mut grad = vec![0.0; policy.num_params()];
    for (beam, r) in beams.iter().zip(rewards) {
        let adv = r - baseline;
        if adv == 0.0 {
            continue;
        }
        let g = policy.grad_log_prob(image, beam)?;
        for (acc, gi) in grad.iter_mut().zip(g) {
            *acc -= adv * gi / l;
        }
    }
    Ok(grad)
}
