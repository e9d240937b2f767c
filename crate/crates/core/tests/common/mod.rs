//! Independent reference implementations shared by the integration tests and
//! the acceptance runner. Everything here is deliberately naive.
#![allow(dead_code)]

use pacmetric::embedkit::Matrix;
use pacmetric::paclearn::{combined_loss, combined_loss_grad, Adapters, DataTuple, FrozenHeads, LoraAdapter, LossWeights};
use pacmetric::scst::{scst_gradient, ToyPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------- rank stats

/// Pair counts by direct enumeration: (concordant, discordant, ties in x
/// only or both, ties in y only or both).
fn pair_counts(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let (mut c, mut d, mut tx, mut ty) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let sx = (x[i] - x[j]).signum() * f64::from(u8::from(x[i] != x[j]));
            let sy = (y[i] - y[j]).signum() * f64::from(u8::from(y[i] != y[j]));
            if sx == 0.0 {
                tx += 1.0;
            }
            if sy == 0.0 {
                ty += 1.0;
            }
            if sx * sy > 0.0 {
                c += 1.0;
            } else if sx * sy < 0.0 {
                d += 1.0;
            }
        }
    }
    (c, d, tx, ty)
}

pub fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let n0 = n * (n - 1.0) / 2.0;
    let (c, d, tx, ty) = pair_counts(x, y);
    (c - d) / ((n0 - tx) * (n0 - ty)).sqrt()
}

fn distinct(v: &[f64]) -> usize {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s.len()
}

pub fn brute_tau_c(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = distinct(x).min(distinct(y)) as f64;
    let (c, d, _, _) = pair_counts(x, y);
    2.0 * (c - d) / (n * n * (m - 1.0) / m)
}

/// Rank of each value as 1 + (#smaller) + (#equal - 1) / 2.
pub fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let eq = v.iter().filter(|b| *b == a).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

pub fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&brute_ranks(x), &brute_ranks(y))
}

/// Random tied integer-valued list pair of length 2..=50, neither constant.
pub fn tied_lists(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    loop {
        let n = rng.random_range(2..=50);
        let levels_x = rng.random_range(2..=8);
        let levels_y = rng.random_range(2..=8);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels_x))).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels_y))).collect();
        if distinct(&x) > 1 && distinct(&y) > 1 {
            return (x, y);
        }
    }
}

// ---------------------------------------------------------------- scoring

/// IDF-weighted precision over tokens, recall over frames, F1, by loops.
pub fn brute_fine_grained(frames: &[Vec<f64>], tokens: &[Vec<f64>], weights: &[f64]) -> (f64, f64, f64) {
    let mut w = weights.to_vec();
    if w.iter().sum::<f64>() <= 0.0 {
        w = vec![1.0; tokens.len()];
    }
    let mut p_num = 0.0;
    for (t, wt) in tokens.iter().zip(&w) {
        let mut best = f64::NEG_INFINITY;
        for f in frames {
            best = best.max(dot(f, t));
        }
        p_num += wt * best;
    }
    let p = p_num / w.iter().sum::<f64>();
    let mut r = 0.0;
    for f in frames {
        let mut best = f64::NEG_INFINITY;
        for t in tokens {
            best = best.max(dot(f, t));
        }
        r += best;
    }
    let r = r / frames.len() as f64;
    let f1 = if p + r <= 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

// ---------------------------------------------------------------- scst

/// Tiny policy with vocabulary `A, B[, <eos>]`, random unit token embeddings
/// and random weights.
pub fn tiny_policy(seed: u64, vocab_size: usize, with_eos: bool, max_len: usize, d: usize) -> ToyPolicy {
    let mut r = rng(seed);
    let names = ["A", "B", "C"];
    let mut vocab: Vec<String> = names[..vocab_size - usize::from(with_eos)]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if with_eos {
        vocab.push("<eos>".into());
    }
    let rows: Vec<Vec<f64>> = (0..vocab.len()).map(|_| random_unit(&mut r, d)).collect();
    let emb = Matrix::from_fn(vocab.len(), d, |i, j| rows[i][j]);
    let bos = random_unit(&mut r, d);
    let eos = with_eos.then_some(vocab.len() - 1);
    let mut p = ToyPolicy::new(vocab, eos, bos, emb, d, max_len).unwrap();
    p.randomize(0.8, &mut r);
    p
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Probability of a full sequence as the product of per-step softmaxes.
pub fn seq_prob(policy: &ToyPolicy, image: &[f64], s: &[usize]) -> f64 {
    (0..s.len()).map(|k| softmax(&policy.logits(image, &s[..k]))[s[k]]).product()
}

/// `∇_θ p(s)` by the product rule over steps, each factor differentiated
/// through the softmax and the affine logit map.
pub fn seq_prob_grad(policy: &ToyPolicy, image: &[f64], s: &[usize]) -> Vec<f64> {
    let v = policy.vocab_size();
    let n_w = policy.num_params() - v;
    let step_p: Vec<f64> = (0..s.len()).map(|k| softmax(&policy.logits(image, &s[..k]))[s[k]]).collect();
    let mut grad = vec![0.0; policy.num_params()];
    for k in 0..s.len() {
        let others: f64 = step_p.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, p)| p).product();
        let probs = softmax(&policy.logits(image, &s[..k]));
        let h = policy.features(image, &s[..k]);
        for m in 0..v {
            let dp_dz = probs[s[k]] * (f64::from(u8::from(m == s[k])) - probs[m]);
            let c = others * dp_dz;
            for (i, hi) in h.iter().enumerate() {
                grad[i * v + m] += c * hi;
            }
            grad[n_w + m] += c;
        }
    }
    grad
}

/// Exact `∇_θ E[r] = Σ_s r(s) ∇p(s)`.
pub fn exact_expected_reward_grad(policy: &ToyPolicy, image: &[f64], r: impl Fn(&[usize]) -> f64) -> Vec<f64> {
    let mut g = vec![0.0; policy.num_params()];
    for s in policy.enumerate_sequences() {
        let rs = r(&s);
        for (a, b) in g.iter_mut().zip(seq_prob_grad(policy, image, &s)) {
            *a += rs * b;
        }
    }
    g
}

/// `Σ_s p(s) · scst_gradient([s], [r(s)], b)`: the expectation of the
/// single-sample self-critical loss gradient under the policy.
pub fn expected_reinforce(policy: &ToyPolicy, image: &[f64], r: impl Fn(&[usize]) -> f64, b: f64) -> Vec<f64> {
    let mut g = vec![0.0; policy.num_params()];
    for s in policy.enumerate_sequences() {
        let p = seq_prob(policy, image, &s);
        let one = scst_gradient(policy, image, std::slice::from_ref(&s), &[r(&s)], b).unwrap();
        for (a, x) in g.iter_mut().zip(one) {
            *a += p * x;
        }
    }
    g
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- PACE

/// A well-formed PACE buffer written byte by byte, independent of the writer.
pub fn pace_bytes(rows: u32, dim: u32, values: &[f32]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(b"PACE");
    b.extend_from_slice(&1u32.to_le_bytes());
    b.extend_from_slice(&rows.to_le_bytes());
    b.extend_from_slice(&dim.to_le_bytes());
    b.push(0);
    b.resize(32, 0);
    for v in values {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

/// Labelled corruptions of a valid 2×3 buffer; each must be rejected.
pub fn corrupted_headers() -> Vec<(&'static str, Vec<u8>)> {
    let good = pace_bytes(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    let with = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut b = good.clone();
        f(&mut b);
        b
    };
    vec![
        ("magic", with(&|b| b[..4].copy_from_slice(b"XXXX"))),
        ("magic case", with(&|b| b[..4].copy_from_slice(b"pace"))),
        ("version 0", with(&|b| b[4..8].copy_from_slice(&0u32.to_le_bytes()))),
        ("version 2", with(&|b| b[4..8].copy_from_slice(&2u32.to_le_bytes()))),
        ("dim 0", with(&|b| b[12..16].copy_from_slice(&0u32.to_le_bytes()))),
        ("dtype 1", with(&|b| b[16] = 1)),
        ("dtype 255", with(&|b| b[16] = 255)),
        ("reserved 17", with(&|b| b[17] = 1)),
        ("reserved 31", with(&|b| b[31] = 0x80)),
        ("rows too large", with(&|b| b[8..12].copy_from_slice(&3u32.to_le_bytes()))),
        ("rows overflow", with(&|b| b[8..12].copy_from_slice(&u32::MAX.to_le_bytes()))),
        ("truncated header", good[..20].to_vec()),
        ("empty", Vec::new()),
        ("truncated payload", good[..good.len() - 1].to_vec()),
        ("trailing byte", with(&|b| b.push(0))),
        ("nan payload", with(&|b| b[32..36].copy_from_slice(&f32::NAN.to_le_bytes()))),
        ("inf payload", with(&|b| b[36..40].copy_from_slice(&f32::INFINITY.to_le_bytes()))),
    ]
}

// ---------------------------------------------------------------- adapter gradients

pub const STEP: f64 = 1e-4;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0) * scale)
}

pub fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub struct Fixture {
    pub batch: Vec<DataTuple>,
    pub heads: FrozenHeads,
    pub adapters: Adapters,
}

pub fn fixture(seed: u64, n: usize, d_img: usize, d_txt: usize, d_out: usize, rank: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heads = FrozenHeads::new(
        random_matrix(&mut rng, d_img, d_out, 1.0),
        random_matrix(&mut rng, d_txt, d_out, 1.0),
    )
    .unwrap();
    let image = LoraAdapter::from_parts(
        random_matrix(&mut rng, d_img, rank, 0.5),
        random_matrix(&mut rng, rank, d_out, 0.5),
        2.0,
    )
    .unwrap();
    let text = LoraAdapter::from_parts(
        random_matrix(&mut rng, d_txt, rank, 0.5),
        random_matrix(&mut rng, rank, d_out, 0.5),
        2.0,
    )
    .unwrap();
    let batch = (0..n)
        .map(|_| DataTuple {
            v: random_vec(&mut rng, d_img),
            t: random_vec(&mut rng, d_txt),
            v_gen: random_vec(&mut rng, d_img),
            t_gen: random_vec(&mut rng, d_txt),
        })
        .collect();
    Fixture {
        batch,
        heads,
        adapters: Adapters { image, text },
    }
}

/// Central differences over every flat adapter parameter.
pub fn finite_difference(f: &Fixture, w: &LossWeights) -> Vec<f64> {
    let base = f.adapters.to_flat();
    let mut probe = f.adapters.clone();
    (0..base.len())
        .map(|k| {
            let mut p = base.clone();
            p[k] = base[k] + STEP;
            probe.set_flat(&p).unwrap();
            let up = combined_loss(&f.batch, &f.heads, &probe, w).unwrap();
            p[k] = base[k] - STEP;
            probe.set_flat(&p).unwrap();
            let down = combined_loss(&f.batch, &f.heads, &probe, w).unwrap();
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

/// Splits a flat vector into the four parameter classes.
pub fn classes(f: &Fixture, flat: &[f64]) -> Vec<Vec<f64>> {
    let sizes = [
        f.adapters.image.a().as_slice().len(),
        f.adapters.image.b().as_slice().len(),
        f.adapters.text.a().as_slice().len(),
        f.adapters.text.b().as_slice().len(),
    ];
    let mut out = Vec::new();
    let mut rest = flat;
    for s in sizes {
        let (h, t) = rest.split_at(s);
        out.push(h.to_vec());
        rest = t;
    }
    out
}

/// The λ/τ grid swept by the gradient checks; the first entry is the default
/// weighting λ_v = 0.1, λ_t = 0.001.
pub const LAMBDA_GRID: [(f64, f64); 4] = [(0.1, 0.001), (0.0, 0.0), (1.0, 0.5), (0.3, 0.0)];
pub const TAUS: [f64; 3] = [0.07, 0.5, 1.0];

/// Worst per-class relative error between analytic and central-difference
/// adapter gradients for fixture `seed`.
pub fn gradient_fixture_error(seed: u64) -> f64 {
    let (lv, lt) = LAMBDA_GRID[seed as usize % LAMBDA_GRID.len()];
    let w = LossWeights {
        tau: TAUS[seed as usize % TAUS.len()],
        lambda_v: lv,
        lambda_t: lt,
    };
    let f = fixture(seed, 3 + (seed as usize % 4), 5, 6, 4, 2);
    let (_, grads) = combined_loss_grad(&f.batch, &f.heads, &f.adapters, &w).unwrap();
    let analytic = grads.to_flat();
    let numeric = finite_difference(&f, &w);
    classes(&f, &analytic)
        .iter()
        .zip(classes(&f, &numeric))
        .map(|(a, n)| rel_err(a, &n))
        .fold(0.0, f64::max)
}
