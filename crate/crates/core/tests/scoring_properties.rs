mod common;

use common::{brute_fine_grained, random_unit, rng};
use pacmetric::embedkit::{normalize_vec, EmbeddingMatrix, Matrix};
use pacmetric::paclearn::{Adapters, FrozenHeads};
use pacmetric::scoring::{
    fine_grained_score, harmonic_mean, pac_score, ref_pac_score, ref_video_score, video_score, IdfTable, ScoreConfig,
    TokenizedCaption, VideoEmbedding,
};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn unit_rows(r: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| random_unit(r, d)).collect()
}

fn caption(rows: &[Vec<f64>], tokens: &[&str]) -> TokenizedCaption {
    TokenizedCaption::new(
        EmbeddingMatrix::from_rows(rows).unwrap(),
        tokens.iter().map(|s| s.to_string()).collect(),
    )
    .unwrap()
}

fn video(rows: &[Vec<f64>]) -> VideoEmbedding {
    VideoEmbedding::new(EmbeddingMatrix::from_rows(rows).unwrap()).unwrap()
}

const WORDS: [&str; 6] = ["a", "dog", "runs", "on", "grass", "<eos>"];

fn idf_fixture() -> IdfTable {
    IdfTable::from_token_lists([
        vec!["a", "dog", "<eos>"],
        vec!["a", "cat", "<eos>"],
        vec!["dog", "runs", "<eos>"],
        vec!["grass", "<eos>"],
    ])
}

fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn pac_is_clamped_to_zero_w(v in vec_strategy(8), t in vec_strategy(8), w in 0.1f64..10.0) {
        let s = pac_score(&v, &t, &ScoreConfig::new(w, "t").unwrap()).unwrap();
        prop_assert!((0.0..=w * (1.0 + 1e-12)).contains(&s));
    }

    #[test]
    fn pac_is_linear_in_w(v in vec_strategy(6), t in vec_strategy(6), w in 0.1f64..5.0, k in 1.0f64..4.0) {
        let a = pac_score(&v, &t, &ScoreConfig::new(w, "t").unwrap()).unwrap();
        let b = pac_score(&v, &t, &ScoreConfig::new(w * k, "t").unwrap()).unwrap();
        prop_assert!((b - k * a).abs() <= 1e-12 * b.abs().max(1.0));
        prop_assert!(b >= a);
    }

    #[test]
    fn pac_is_scale_invariant(v in vec_strategy(6), t in vec_strategy(6), c in 0.01f64..100.0) {
        let cfg = ScoreConfig::base();
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let a = pac_score(&v, &t, &cfg).unwrap();
        let b = pac_score(&scaled, &t, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn ref_pac_lies_between_its_terms(v in vec_strategy(5), t in vec_strategy(5), refs in prop::collection::vec(vec_strategy(5), 1..4)) {
        let cfg = ScoreConfig::base();
        let s = pac_score(&v, &t, &cfg).unwrap();
        let top = refs.iter().map(|r| pacmetric::cosine_sim(&t, r).unwrap()).fold(f64::NEG_INFINITY, f64::max).max(0.0);
        let h = ref_pac_score(&v, &t, &refs, &cfg).unwrap();
        if s > 0.0 && top > 0.0 {
            prop_assert!(h >= s.min(top) - 1e-12 && h <= s.max(top) + 1e-12);
            prop_assert!(h <= 2.0 * s.min(top) + 1e-12);
        } else {
            prop_assert_eq!(h, 0.0);
        }
    }

    #[test]
    fn harmonic_mean_is_symmetric(x in 0.0f64..5.0, y in 0.0f64..5.0) {
        prop_assert_eq!(harmonic_mean(x, y), harmonic_mean(y, x));
    }

    #[test]
    fn fine_grained_matches_brute_force(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = r.random_range(2..6);
        let n_frames = r.random_range(1..=5);
        let frames = unit_rows(&mut r, n_frames, d);
        let n_tok = r.random_range(2..=5);
        let toks = unit_rows(&mut r, n_tok, d);
        let names: Vec<&str> = (0..n_tok).map(|_| WORDS[r.random_range(0..WORDS.len())]).collect();
        let idf = idf_fixture();
        let weights: Vec<f64> = names.iter().map(|s| idf.weight(s)).collect();
        let fg = fine_grained_score(&video(&frames), &caption(&toks, &names), &idf).unwrap();
        let (p, rc, f1) = brute_fine_grained(&frames, &toks, &weights);
        prop_assert!((fg.precision - p).abs() <= 1e-12);
        prop_assert!((fg.recall - rc).abs() <= 1e-12);
        prop_assert!((fg.f1 - f1).abs() <= 1e-12);
    }

    #[test]
    fn zero_idf_token_leaves_precision_unchanged(seed in any::<u64>()) {
        let mut r = rng(seed);
        let frames = unit_rows(&mut r, 3, 4);
        let toks = unit_rows(&mut r, 4, 4);
        let names = ["dog", "runs", "grass", "a"];
        // "<eos>" occurs in every caption of the fixture, so its weight is 0.
        let idf = idf_fixture();
        prop_assert_eq!(idf.weight("<eos>"), 0.0);
        let base = fine_grained_score(&video(&frames), &caption(&toks, &names), &idf).unwrap();
        let mut more = toks.clone();
        more.push(random_unit(&mut r, 4));
        let extended = fine_grained_score(
            &video(&frames),
            &caption(&more, &["dog", "runs", "grass", "a", "<eos>"]),
            &idf,
        )
        .unwrap();
        prop_assert!((base.precision - extended.precision).abs() <= 1e-12);
    }

    #[test]
    fn fine_grained_is_permutation_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let frames = unit_rows(&mut r, 4, 3);
        let toks = unit_rows(&mut r, 4, 3);
        let names = ["a", "dog", "runs", "<eos>"];
        let idf = idf_fixture();
        let fg = fine_grained_score(&video(&frames), &caption(&toks, &names), &idf).unwrap();
        let rev_frames: Vec<_> = frames.iter().rev().cloned().collect();
        let rev_toks: Vec<_> = toks.iter().rev().cloned().collect();
        let rev_names: Vec<&str> = names.iter().rev().copied().collect();
        let fr = fine_grained_score(&video(&rev_frames), &caption(&rev_toks, &rev_names), &idf).unwrap();
        prop_assert!((fg.precision - fr.precision).abs() <= 1e-12);
        prop_assert!((fg.recall - fr.recall).abs() <= 1e-12);
    }

    #[test]
    fn ref_video_takes_the_best_reference(seed in any::<u64>()) {
        let mut r = rng(seed);
        let v = video(&unit_rows(&mut r, 3, 4));
        let names = ["a", "dog", "<eos>"];
        let c = caption(&unit_rows(&mut r, 3, 4), &names);
        let r1 = caption(&unit_rows(&mut r, 3, 4), &names);
        let r2 = caption(&unit_rows(&mut r, 3, 4), &names);
        let idf = idf_fixture();
        let both = ref_video_score(&v, &c, &[r1.clone(), r2.clone()], &idf).unwrap();
        let one = ref_video_score(&v, &c, &[r1], &idf).unwrap();
        let two = ref_video_score(&v, &c, &[r2], &idf).unwrap();
        prop_assert_eq!(both.score, one.score.max(two.score));
    }
}

#[test]
fn idf_examples() {
    let idf = IdfTable::from_token_lists([vec!["dog"], vec!["cat"], vec!["cat"], vec!["bird"]]);
    assert!((idf.weight("dog") - 2.5f64.ln()).abs() < 1e-15);
    let all = IdfTable::from_token_lists([vec!["a"], vec!["a"], vec!["a"]]);
    assert_eq!(all.weight("a"), 0.0);
    assert!((all.weight("unseen") - 4f64.ln()).abs() < 1e-15);
}

#[test]
fn video_score_is_mean_of_coarse_and_f1() {
    let mut r = rng(3);
    let v = video(&unit_rows(&mut r, 4, 5));
    let c = caption(&unit_rows(&mut r, 3, 5), &["a", "dog", "<eos>"]);
    let s = video_score(&v, &c, &idf_fixture()).unwrap();
    assert_eq!(s.score, (s.coarse + s.fine.f1) / 2.0);
}

#[test]
fn zero_b_adapters_leave_every_score_bit_identical() {
    let mut r = rng(11);
    let (d_img, d_txt, d_out) = (9, 7, 5);
    let heads = FrozenHeads::new(
        Matrix::from_fn(d_img, d_out, |_, _| r.random_range(-1.0..1.0)),
        Matrix::from_fn(d_txt, d_out, |_, _| r.random_range(-1.0..1.0)),
    )
    .unwrap();
    let adapters = Adapters::init(&heads, 4, 8.0, 0.5, &mut r).unwrap();
    let feats = |r: &mut ChaCha8Rng, n: usize, d: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
    };
    let frozen = |m: &Matrix, xs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        xs.iter().map(|x| normalize_vec(&m.left_mul(x).unwrap()).unwrap()).collect()
    };
    let img_feats = feats(&mut r, 4, d_img);
    let txt_feats = feats(&mut r, 6, d_txt);
    let rows = |m: EmbeddingMatrix| -> Vec<Vec<f64>> { m.iter_rows().map(<[f64]>::to_vec).collect() };
    let adapted_img = rows(adapters.encode_images(&heads, &img_feats).unwrap());
    let adapted_txt = rows(adapters.encode_texts(&heads, &txt_feats).unwrap());
    let frozen_img = frozen(&heads.image, &img_feats);
    let frozen_txt = frozen(&heads.text, &txt_feats);

    let cfg = ScoreConfig::base();
    let names = ["a", "dog", "<eos>"];
    let idf = idf_fixture();
    let scores = |img: &[Vec<f64>], txt: &[Vec<f64>]| -> Vec<u64> {
        let v = video(img);
        let c = caption(&txt[..3], &names);
        let refc = caption(&txt[3..], &names);
        [
            pac_score(&img[0], &txt[2], &cfg).unwrap(),
            ref_pac_score(&img[0], &txt[2], &txt[3..], &cfg).unwrap(),
            video_score(&v, &c, &idf).unwrap().score,
            ref_video_score(&v, &c, &[refc], &idf).unwrap().score,
        ]
        .map(f64::to_bits)
        .to_vec()
    };
    assert_eq!(scores(&adapted_img, &adapted_txt), scores(&frozen_img, &frozen_txt));
}
