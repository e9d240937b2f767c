use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::policy::ToyPolicy;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
}

/// Higher log-probability first, then lexicographically smaller token ids.
fn rank(a: &Beam, b: &Beam) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search keeping the `beam_size` best partial or finished sequences at
/// every step. Returns at most `beam_size` finished sequences, best first.
pub fn beam_search(policy: &ToyPolicy, image: &[f64], beam_size: usize) -> Result<Vec<Beam>> {
    policy.check_image(image)?;
    let beam_size = beam_size.max(1);
    let mut pool: Vec<(Beam, bool)> = vec![(
        Beam {
            tokens: Vec::new(),
            log_prob: 0.0,
        },
        false,
    )];
    while pool.iter().any(|(_, done)| !done) {
        let mut next = Vec::with_capacity(pool.len() * policy.vocab_size());
        for (beam, done) in pool {
            if done {
                next.push((beam, true));
                continue;
            }
            let lp = policy.log_probs(image, &beam.tokens);
            for (tok, l) in lp.into_iter().enumerate() {
                let mut tokens = beam.tokens.clone();
                tokens.push(tok);
                let finished = policy.is_complete(&tokens);
                next.push((
                    Beam {
                        tokens,
                        log_prob: beam.log_prob + l,
                    },
                    finished,
                ));
            }
        }
        next.sort_by(|a, b| rank(&a.0, &b.0));
        next.truncate(beam_size);
        pool = next;
    }
    Ok(pool.into_iter().map(|(b, _)| b).collect())
}

/// Argmax decoding, lowest token id on ties.
pub fn greedy_decode(policy: &ToyPolicy, image: &[f64]) -> Result<Vec<usize>> {
    policy.check_image(image)?;
    let mut tokens = Vec::new();
    while !policy.is_complete(&tokens) {
        let lp = policy.log_probs(image, &tokens);
        let mut best = 0;
        for (i, &l) in lp.iter().enumerate() {
            if l > lp[best] {
                best = i;
            }
        }
        tokens.push(best);
    }
    Ok(tokens)
}
