use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::lora::FrozenHeads;
use super::DataTuple;
use crate::embedkit::{dot, normalize_vec, Matrix};
use crate::error::Result;

/// Toy positive-augmented corpus: `clusters` random unit anchors; real image
/// and caption features are the anchor plus `sigma_real` Gaussian noise,
/// generated counterparts are independent copies with `sigma_gen` noise.
#[derive(Debug, Clone)]
pub struct ClusterGenerator {
    pub d_in: usize,
    pub sigma_real: f64,
    pub sigma_gen: f64,
    anchors: Vec<Vec<f64>>,
}

/// Anchors are redrawn until every pair has cosine below this bound.
const MAX_ANCHOR_COSINE: f64 = 0.5;

impl ClusterGenerator {
    pub fn new<R: Rng + ?Sized>(clusters: usize, d_in: usize, rng: &mut R) -> Result<Self> {
        let mut anchors: Vec<Vec<f64>> = Vec::with_capacity(clusters);
        while anchors.len() < clusters {
            let raw: Vec<f64> = (0..d_in).map(|_| StandardNormal.sample(rng)).collect();
            let a = normalize_vec(&raw)?;
            if anchors.iter().all(|b| dot(&a, b) < MAX_ANCHOR_COSINE) {
                anchors.push(a);
            }
        }
        Ok(ClusterGenerator {
            d_in,
            sigma_real: 0.05,
            sigma_gen: 0.10,
            anchors,
        })
    }

    pub fn clusters(&self) -> usize {
        self.anchors.len()
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    /// Independent Gaussian projection heads (std `1/sqrt(d_in)`), so the
    /// frozen image and text embedding spaces start out unaligned.
    pub fn frozen_heads<R: Rng + ?Sized>(&self, d_out: usize, rng: &mut R) -> Result<FrozenHeads> {
        let normal = Normal::new(0.0, 1.0 / (self.d_in as f64).sqrt()).expect("positive std");
        let image = Matrix::from_fn(self.d_in, d_out, |_, _| normal.sample(rng));
        let text = Matrix::from_fn(self.d_in, d_out, |_, _| normal.sample(rng));
        FrozenHeads::new(image, text)
    }

    fn noisy<R: Rng + ?Sized>(&self, anchor: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
        anchor
            .iter()
            .map(|a| {
                let z: f64 = StandardNormal.sample(rng);
                a + sigma * z
            })
            .collect()
    }

    /// `n` tuples with cluster labels drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<DataTuple>, Vec<usize>) {
        let mut tuples = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.random_range(0..self.anchors.len());
            let a = &self.anchors[k];
            tuples.push(DataTuple {
                v: self.noisy(a, self.sigma_real, rng),
                t: self.noisy(a, self.sigma_real, rng),
                v_gen: self.noisy(a, self.sigma_gen, rng),
                t_gen: self.noisy(a, self.sigma_gen, rng),
            });
            labels.push(k);
        }
        (tuples, labels)
    }
}
