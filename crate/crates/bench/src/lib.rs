//! Deterministic random fixtures shared by the benchmarks.

use pacmetric::paclearn::{Adapters, DataTuple, FrozenHeads};
use pacmetric::{EmbeddingMatrix, Matrix, TokenizedCaption, VideoEmbedding};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> EmbeddingMatrix {
    EmbeddingMatrix::try_from(Matrix::from_vec(rows, cols, gaussian_vec(rows * cols, rng)).expect("shape"))
        .expect("finite")
}

pub fn video(frames: usize, dim: usize, rng: &mut ChaCha8Rng) -> VideoEmbedding {
    VideoEmbedding::from_raw(&gaussian_matrix(frames, dim, rng)).expect("valid video")
}

pub fn caption(tokens: usize, dim: usize, rng: &mut ChaCha8Rng) -> TokenizedCaption {
    let words = (0..tokens).map(|i| format!("w{}", i % 7)).collect();
    TokenizedCaption::from_raw(&gaussian_matrix(tokens, dim, rng), words).expect("valid caption")
}

pub fn batch(n: usize, d_in: usize, rng: &mut ChaCha8Rng) -> Vec<DataTuple> {
    (0..n)
        .map(|_| DataTuple {
            v: gaussian_vec(d_in, rng),
            t: gaussian_vec(d_in, rng),
            v_gen: gaussian_vec(d_in, rng),
            t_gen: gaussian_vec(d_in, rng),
        })
        .collect()
}

pub fn heads_and_adapters(d_in: usize, d_out: usize, rank: usize, rng: &mut ChaCha8Rng) -> (FrozenHeads, Adapters) {
    let scale = 1.0 / (d_in as f64).sqrt();
    let head = |rng: &mut ChaCha8Rng| {
        Matrix::from_vec(d_in, d_out, gaussian_vec(d_in * d_out, rng).into_iter().map(|x| x * scale).collect())
            .expect("shape")
    };
    let heads = FrozenHeads {
        image: head(rng),
        text: head(rng),
    };
    let adapters = Adapters::init(&heads, rank, rank as f64, 0.02, rng).expect("valid rank");
    (heads, adapters)
}
