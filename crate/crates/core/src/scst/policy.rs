use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::embedkit::Matrix;
use crate::error::{Error, Result};

/// Small autoregressive captioner.
///
/// Next-token logits are an affine function of the image embedding
/// concatenated with the mean embedding of the prefix (a fixed start
/// embedding plus every token generated so far). Generation stops at the end
/// token, if the vocabulary has one, or after `max_len` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    vocab: Vec<String>,
    eos: Option<usize>,
    bos_embed: Vec<f64>,
    token_embed: Matrix,
    weights: Matrix,
    bias: Vec<f64>,
    image_dim: usize,
    max_len: usize,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl ToyPolicy {
    /// `token_embed` is `V × D`; the weights `(image_dim + D) × V` and the
    /// bias start at zero (uniform next-token distribution).
    pub fn new(
        vocab: Vec<String>,
        eos: Option<usize>,
        bos_embed: Vec<f64>,
        token_embed: Matrix,
        image_dim: usize,
        max_len: usize,
    ) -> Result<Self> {
        let v = vocab.len();
        if v == 0 || token_embed.rows() != v {
            return Err(Error::invalid("token embedding table must have one row per vocabulary entry"));
        }
        if bos_embed.len() != token_embed.cols() {
            return Err(Error::DimensionMismatch {
                expected: token_embed.cols(),
                got: bos_embed.len(),
            });
        }
        if eos.is_some_and(|e| e >= v) {
            return Err(Error::invalid("end token index outside vocabulary"));
        }
        if max_len == 0 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        if !token_embed.is_finite() || bos_embed.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("token embeddings".into()));
        }
        let feat = image_dim + token_embed.cols();
        Ok(ToyPolicy {
            vocab,
            eos,
            bos_embed,
            token_embed,
            weights: Matrix::zeros(feat, v),
            bias: vec![0.0; v],
            image_dim,
            max_len,
        })
    }

    /// Replaces the weights with small Gaussian values.
    pub fn randomize<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) {
        let normal = Normal::new(0.0, std).expect("non-negative std");
        self.weights
            .as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = normal.sample(rng));
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn eos(&self) -> Option<usize> {
        self.eos
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn token_embed(&self) -> &Matrix {
        &self.token_embed
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.vocab.iter().position(|t| t == token)
    }

    pub fn decode(&self, tokens: &[usize]) -> Vec<String> {
        tokens.iter().map(|&t| self.vocab[t].clone()).collect()
    }

    /// Words of a caption, i.e. tokens without the end marker.
    pub fn words<'a>(&self, tokens: &'a [usize]) -> &'a [usize] {
        match (self.eos, tokens.last()) {
            (Some(e), Some(&last)) if last == e => &tokens[..tokens.len() - 1],
            _ => tokens,
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    /// Weights (row-major) followed by the bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.as_slice().to_vec();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        let (w, b) = params.split_at(self.weights.as_slice().len());
        self.weights.as_mut_slice().copy_from_slice(w);
        self.bias.copy_from_slice(b);
        Ok(())
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub(crate) fn check_image(&self, image: &[f64]) -> Result<()> {
        if image.len() != self.image_dim {
            return Err(Error::DimensionMismatch {
                expected: self.image_dim,
                got: image.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.vocab.len()) {
            return Err(Error::invalid(format!("token id {bad} outside vocabulary of {}", self.vocab.len())));
        }
        Ok(())
    }

    /// Conditioning features `[image ‖ mean(start, prefix tokens)]`.
    pub fn features(&self, image: &[f64], prefix: &[usize]) -> Vec<f64> {
        let d = self.bos_embed.len();
        let mut mean = self.bos_embed.clone();
        for &t in prefix {
            for (m, e) in mean.iter_mut().zip(self.token_embed.row(t)) {
                *m += e;
            }
        }
        let count = (prefix.len() + 1) as f64;
        let mut h = Vec::with_capacity(self.image_dim + d);
        h.extend_from_slice(image);
        h.extend(mean.iter().map(|m| m / count));
        h
    }

    pub fn logits(&self, image: &[f64], prefix: &[usize]) -> Vec<f64> {
        let h = self.features(image, prefix);
        let mut z = self.weights.left_mul(&h).expect("feature width matches weights");
        for (zi, b) in z.iter_mut().zip(&self.bias) {
            *zi += b;
        }
        z
    }

    pub fn log_probs(&self, image: &[f64], prefix: &[usize]) -> Vec<f64> {
        log_softmax(&self.logits(image, prefix))
    }

    /// `Σ_k log p(t_k | t_<k, image)`.
    pub fn sequence_log_prob(&self, image: &[f64], tokens: &[usize]) -> Result<f64> {
        self.check_image(image)?;
        self.check_tokens(tokens)?;
        Ok((0..tokens.len())
            .map(|k| self.log_probs(image, &tokens[..k])[tokens[k]])
            .sum())
    }

    /// Gradient of [`Self::sequence_log_prob`] with respect to
    /// [`Self::params`].
    pub fn grad_log_prob(&self, image: &[f64], tokens: &[usize]) -> Result<Vec<f64>> {
        self.check_image(image)?;
        self.check_tokens(tokens)?;
        let v = self.vocab.len();
        let mut grad = vec![0.0; self.num_params()];
        let bias_off = self.weights.as_slice().len();
        for k in 0..tokens.len() {
            let h = self.features(image, &tokens[..k]);
            let lp = log_softmax(&{
                let mut z = self.weights.left_mul(&h)?;
                z.iter_mut().zip(&self.bias).for_each(|(zi, b)| *zi += b);
                z
            });
            // d log p / d z = onehot - softmax
            let dz: Vec<f64> = lp
                .iter()
                .enumerate()
                .map(|(j, l)| f64::from(u8::from(j == tokens[k])) - l.exp())
                .collect();
            for (i, hi) in h.iter().enumerate() {
                if *hi == 0.0 {
                    continue;
                }
                for (g, d) in grad[i * v..(i + 1) * v].iter_mut().zip(&dz) {
                    *g += hi * d;
                }
            }
            for (g, d) in grad[bias_off..].iter_mut().zip(&dz) {
                *g += d;
            }
        }
        Ok(grad)
    }

    /// Every sequence the policy can emit: end-terminated sequences of length
    /// at most `max_len`, plus unterminated ones of exactly `max_len`. Their
    /// probabilities sum to one.
    pub fn enumerate_sequences(&self) -> Vec<Vec<usize>> {
        let mut done = Vec::new();
        let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
        while let Some(prefix) = frontier.pop() {
            for t in 0..self.vocab.len() {
                let mut s = prefix.clone();
                s.push(t);
                if Some(t) == self.eos || s.len() == self.max_len {
                    done.push(s);
                } else {
                    frontier.push(s);
                }
            }
        }
        done.sort();
        done
    }

    pub fn is_complete(&self, tokens: &[usize]) -> bool {
        tokens.len() == self.max_len || (self.eos.is_some() && tokens.last().copied() == self.eos)
    }
}
