use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::policy::ToyPolicy;
use super::train::Example;
use crate::embedkit::{normalize_vec, Matrix};
use crate::error::{Error, Result};

const OBJECTS: [&str; 6] = ["dog", "cat", "horse", "bird", "car", "boat"];
const FILLERS: [&str; 5] = ["a", "the", "with", "and", "on"];
pub const EOS: &str = "<eos>";
const TEMPLATES: [[&str; 3]; 3] = [["a", "with", "a"], ["the", "and", "the"], ["a", "on", "the"]];

/// An image vector with its reference captions as token ids.
pub type ReferencedImage = (Vec<f64>, Vec<Vec<usize>>);

/// Synthetic captioning world: each image shows two objects and its embedding
/// is the normalised sum of their word embeddings plus noise. Ground-truth
/// captions wrap the objects in function words ("a dog with a cat").
///
/// Function-word embeddings are shrunk by `filler_scale`. At full length
/// they dilute the caption mean so much that appending an extra object word
/// pays off, and the reward then favours padded, repetitive captions.
#[derive(Debug, Clone)]
pub struct CaptionWorld {
    template: ToyPolicy,
    image_noise: f64,
}

impl CaptionWorld {
    pub fn new(dim: usize, max_len: usize, filler_scale: f64, seed: u64) -> Result<Self> {
        if !(filler_scale > 0.0 && filler_scale.is_finite()) {
            return Err(Error::invalid("filler_scale must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab: Vec<String> = OBJECTS
            .iter()
            .chain(FILLERS.iter())
            .map(|s| s.to_string())
            .chain(std::iter::once(EOS.to_string()))
            .collect();
        let mut unit = || -> Result<Vec<f64>> {
            let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            normalize_vec(&raw)
        };
        let rows = (0..vocab.len())
            .map(|k| {
                let u = unit()?;
                let is_filler = k >= OBJECTS.len() && k + 1 < vocab.len();
                Ok(if is_filler { u.iter().map(|x| x * filler_scale).collect() } else { u })
            })
            .collect::<Result<Vec<_>>>()?;
        let bos = unit()?;
        let embed = Matrix::from_vec(vocab.len(), dim, rows.concat())?;
        let eos = vocab.len() - 1;
        let template = ToyPolicy::new(vocab, Some(eos), bos, embed, dim, max_len)?;
        Ok(CaptionWorld {
            template,
            image_noise: 0.1,
        })
    }

    /// Untrained policy over this world's vocabulary and embeddings.
    pub fn policy(&self) -> ToyPolicy {
        self.template.clone()
    }

    fn id(&self, word: &str) -> usize {
        self.template.token_id(word).expect("word in vocabulary")
    }

    fn scene<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, usize, Vec<f64>)> {
        let i = rng.random_range(0..OBJECTS.len());
        let mut j = rng.random_range(0..OBJECTS.len() - 1);
        if j >= i {
            j += 1;
        }
        let emb = self.template.token_embed();
        let raw: Vec<f64> = emb
            .row(i)
            .iter()
            .zip(emb.row(j))
            .map(|(a, b)| {
                let z: f64 = StandardNormal.sample(rng);
                a + b + self.image_noise * z
            })
            .collect();
        Ok((i, j, normalize_vec(&raw)?))
    }

    pub fn sample_images<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        (0..n).map(|_| self.scene(rng).map(|s| s.2)).collect()
    }

    fn caption(&self, template: [&str; 3], i: usize, j: usize) -> Vec<usize> {
        let [d1, c, d2] = template;
        vec![self.id(d1), i, self.id(c), self.id(d2), j, self.id(EOS)]
    }

    /// Images paired with one of a few templated ground-truth captions.
    pub fn sample_examples<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Example>> {
        (0..n)
            .map(|_| {
                let (i, j, img) = self.scene(rng)?;
                let t = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
                Ok((img, self.caption(t, i, j)))
            })
            .collect()
    }

    /// Images with every templated caption of their scene as references.
    pub fn sample_referenced<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<ReferencedImage>> {
        (0..n)
            .map(|_| {
                let (i, j, img) = self.scene(rng)?;
                Ok((img, TEMPLATES.iter().map(|&t| self.caption(t, i, j)).collect()))
            })
            .collect()
    }
}
