//! Acceptance runner: one PASS/FAIL line per primary criterion, exit status
//! non-zero if any fails. Built with `harness = false`.

mod common;

use std::time::{Duration, Instant};

use common::*;
use pacmetric::embedkit::{normalize_vec, read_embeddings, write_embeddings, EmbeddingMatrix, Matrix};
use pacmetric::evalstats::{foil_accuracy, kendall_tau_b, kendall_tau_c, spearman_rho, FoilPair, FoilSet};
use pacmetric::paclearn::{run_synthetic, Adapters, FrozenHeads, SyntheticTask, TrainConfig};
use pacmetric::scoring::{
    fine_grained_score, harmonic_mean, pac_score, ref_pac_score, ref_video_score, video_score, IdfTable, ScoreConfig,
    TokenizedCaption, VideoEmbedding,
};
use pacmetric::scst::{baseline, beam_search, reward, run_demo, scst_gradient, DemoConfig, GrammarConfig, ToyPolicy};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < budget_s as f64, || {
        format!("took {:.2}s, budget {budget_s}s", elapsed.as_secs_f64())
    })
}

fn correlation_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(77);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (x, y) = tied_lists(&mut r);
        let pairs = [
            (kendall_tau_b(&x, &y), brute_tau_b(&x, &y)),
            (kendall_tau_c(&x, &y), brute_tau_c(&x, &y)),
            (spearman_rho(&x, &y), brute_spearman(&x, &y)),
        ];
        for (got, want) in pairs {
            worst = worst.max((got.map_err(|e| e.to_string())? - want).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    within(t0.elapsed(), 5)?;
    Ok(format!("200 fixtures, max deviation {worst:.1e}"))
}

fn gradient_suite() -> Outcome {
    let t0 = Instant::now();
    let n = 24u64;
    let worst = (0..n).map(gradient_fixture_error).fold(0.0, f64::max);
    ensure(worst < 1e-5, || format!("worst relative error {worst:e}"))?;
    within(t0.elapsed(), 30)?;
    Ok(format!("{n} fixtures over {} lambda settings, worst rel. err {worst:.1e}", LAMBDA_GRID.len()))
}

fn lora_transparency() -> Outcome {
    let names = ["<sos>", "dog", "<eos>"];
    let idf = IdfTable::from_token_lists([names.to_vec(), vec!["<sos>", "cat", "<eos>"]]);
    let cfg = ScoreConfig::base();
    for seed in 0..20 {
        let mut r = rng(seed);
        let (di, dt, d) = (9, 7, 5);
        let heads = FrozenHeads::new(
            Matrix::from_fn(di, d, |_, _| r.random_range(-1.0..1.0)),
            Matrix::from_fn(dt, d, |_, _| r.random_range(-1.0..1.0)),
        )
        .map_err(|e| e.to_string())?;
        let adapters = Adapters::init(&heads, 4, 4.0, 0.3, &mut r).map_err(|e| e.to_string())?;
        let feats = |r: &mut ChaCha8Rng, n: usize, dim: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
        };
        let (fi, ft) = (feats(&mut r, 3, di), feats(&mut r, 6, dt));
        let rows = |m: EmbeddingMatrix| m.iter_rows().map(<[f64]>::to_vec).collect::<Vec<_>>();
        let frozen = |m: &Matrix, xs: &[Vec<f64>]| -> Vec<Vec<f64>> {
            xs.iter().map(|x| normalize_vec(&m.left_mul(x).unwrap()).unwrap()).collect()
        };
        let scores = |img: &[Vec<f64>], txt: &[Vec<f64>]| -> Vec<u64> {
            let tok = |rows: &[Vec<f64>]| {
                TokenizedCaption::new(
                    EmbeddingMatrix::from_rows(rows).unwrap(),
                    names.iter().map(|s| s.to_string()).collect(),
                )
                .unwrap()
            };
            let v = VideoEmbedding::new(EmbeddingMatrix::from_rows(img).unwrap()).unwrap();
            let (c, rf) = (tok(&txt[..3]), tok(&txt[3..]));
            [
                pac_score(&img[0], c.global(), &cfg).unwrap(),
                ref_pac_score(&img[0], c.global(), &[rf.global()], &cfg).unwrap(),
                video_score(&v, &c, &idf).unwrap().score,
                ref_video_score(&v, &c, &[rf], &idf).unwrap().score,
            ]
            .map(f64::to_bits)
            .to_vec()
        };
        let adapted = scores(
            &rows(adapters.encode_images(&heads, &fi).map_err(|e| e.to_string())?),
            &rows(adapters.encode_texts(&heads, &ft).map_err(|e| e.to_string())?),
        );
        let base = scores(&frozen(&heads.image, &fi), &frozen(&heads.text, &ft));
        ensure(adapted == base, || format!("seed {seed}: scores differ"))?;
    }
    Ok("20 fixtures, image/ref/video/ref-video scores bit-identical".into())
}

fn synthetic_training() -> Outcome {
    let t0 = Instant::now();
    let task = SyntheticTask::default();
    let cfg = TrainConfig {
        rank: 4,
        lr: 1e-3,
        batch_size: 64,
        max_iters: 2000,
        ..TrainConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let (a, b) = pool.install(|| (run_synthetic(&task, &cfg), run_synthetic(&task, &cfg)));
    let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
    ensure(a.outcome.history == b.outcome.history && a.trained_recall == b.trained_recall, || {
        "seeded reruns differ".into()
    })?;
    ensure(a.outcome.iterations <= 2000, || format!("{} iterations", a.outcome.iterations))?;
    ensure(a.trained_recall >= 0.9, || format!("R@1 {:.3}", a.trained_recall))?;
    within(t0.elapsed(), 60)?;
    Ok(format!(
        "R@1 {:.3} (frozen {:.3}) after {} iterations, reruns identical",
        a.trained_recall, a.frozen_recall, a.outcome.iterations
    ))
}

fn scst_exactness() -> Outcome {
    let cfg = ScoreConfig::base();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for seed in 0..10u64 {
        for (v, eos, len) in [(2, false, 1), (2, false, 2), (3, false, 2), (2, true, 2), (3, true, 1), (3, true, 2)] {
            let policy = tiny_policy(seed, v, eos, len, 3);
            let image = random_unit(&mut rng(seed + 1000), 3);
            let r = |s: &[usize]| reward(&policy, &image, s, &cfg, None).unwrap();
            let exact: Vec<f64> = exact_expected_reward_grad(&policy, &image, r).into_iter().map(|g| -g).collect();
            let beams = beam_search(&policy, &image, 3).map_err(|e| e.to_string())?;
            let b = baseline(&beams.iter().map(|x| r(&x.tokens)).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
            for base in [0.0, b] {
                worst = worst.max(max_abs_diff(&expected_reinforce(&policy, &image, r, base), &exact));
                cases += 1;
            }
        }
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;

    let vocab = vec!["A".to_string(), "B".to_string()];
    let p = ToyPolicy::new(vocab, None, vec![0.0], Matrix::from_vec(2, 1, vec![1.0, -1.0]).unwrap(), 1, 1)
        .map_err(|e| e.to_string())?;
    let g = scst_gradient(&p, &[0.0], &[vec![0], vec![1]], &[1.0, 0.0], 0.5).map_err(|e| e.to_string())?;
    let dz_a = g[g.len() - 2];
    ensure(dz_a == -0.25, || format!("worked example gives {dz_a}"))?;
    Ok(format!("{cases} cases, max deviation {worst:.1e}; worked example dloss/dz_A = {dz_a}"))
}

fn scst_demo() -> Outcome {
    let t0 = Instant::now();
    let cfg = DemoConfig::default();
    let report = run_demo(&cfg, &ScoreConfig::base(), &GrammarConfig::default()).map_err(|e| e.to_string())?;
    ensure(report.scst_reward_curve.len() == 200, || format!("{} SCST steps", report.scst_reward_curve.len()))?;
    let gain = report.relative_reward_gain();
    let (before, after) = (&report.after_xent, &report.after_scst);
    ensure(gain >= 0.2, || format!("reward gain {:.1}%", gain * 100.0))?;
    ensure(after.rep1 <= before.rep1, || format!("Rep-1 rose {:.3} -> {:.3}", before.rep1, after.rep1))?;
    within(t0.elapsed(), 60)?;
    Ok(format!(
        "200 steps, held-out reward over {} images {:.3} -> {:.3} (+{:.1}%), Rep-1 {:.2} -> {:.2}",
        cfg.held_out_images,
        before.mean_reward,
        after.mean_reward,
        gain * 100.0,
        before.rep1,
        after.rep1
    ))
}

fn scoring_formulas() -> Outcome {
    let mut r = rng(123);
    let idf = IdfTable::from_token_lists([vec!["a", "dog", "<eos>"], vec!["a", "cat", "<eos>"], vec!["grass", "<eos>"]]);
    let words = ["a", "dog", "cat", "grass", "<eos>"];
    let mut worst_f1: f64 = 0.0;
    for _ in 0..500 {
        let d = r.random_range(2..6);
        let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let t = random_unit(&mut r, d);
        let w = r.random_range(0.5..4.0);
        let c = r.random_range(0.01..50.0);
        let cfg = ScoreConfig::new(w, "t").map_err(|e| e.to_string())?;
        let s = pac_score(&v, &t, &cfg).map_err(|e| e.to_string())?;
        ensure((0.0..=w).contains(&s), || format!("pac {s} outside [0, {w}]"))?;
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let s2 = pac_score(&scaled, &t, &cfg).map_err(|e| e.to_string())?;
        ensure((s - s2).abs() <= 1e-12, || "pac not scale invariant".into())?;
        let refs = [random_unit(&mut r, d), random_unit(&mut r, d)];
        let h = ref_pac_score(&v, &t, &refs, &cfg).map_err(|e| e.to_string())?;
        let top = refs.iter().map(|x| dot(&t, x)).fold(f64::NEG_INFINITY, f64::max).max(0.0);
        if s > 0.0 && top > 0.0 {
            ensure(h >= s.min(top) - 1e-12 && h <= s.max(top) + 1e-12, || "harmonic mean outside bounds".into())?;
        }
        ensure((harmonic_mean(s, top) - h).abs() <= 1e-12, || "ref score is not the harmonic mean".into())?;

        let frames: Vec<Vec<f64>> = (0..r.random_range(1..=5)).map(|_| random_unit(&mut r, d)).collect();
        let n_tok = r.random_range(2..=5);
        let toks: Vec<Vec<f64>> = (0..n_tok).map(|_| random_unit(&mut r, d)).collect();
        let names: Vec<String> = (0..n_tok).map(|_| words[r.random_range(0..words.len())].to_string()).collect();
        let weights: Vec<f64> = names.iter().map(|s| idf.weight(s)).collect();
        let video = VideoEmbedding::new(EmbeddingMatrix::from_rows(&frames).unwrap()).unwrap();
        let cap = TokenizedCaption::new(EmbeddingMatrix::from_rows(&toks).unwrap(), names.clone()).unwrap();
        let fg = fine_grained_score(&video, &cap, &idf).map_err(|e| e.to_string())?;
        let (p, rc, f1) = brute_fine_grained(&frames, &toks, &weights);
        worst_f1 = worst_f1.max((fg.precision - p).abs()).max((fg.recall - rc).abs()).max((fg.f1 - f1).abs());

        // A zero-weight token appended to a caption with positive weight.
        if weights.iter().sum::<f64>() > 0.0 {
            let mut more = toks.clone();
            more.push(random_unit(&mut r, d));
            let mut more_names = names.clone();
            more_names.push("<eos>".into());
            let cap2 = TokenizedCaption::new(EmbeddingMatrix::from_rows(&more).unwrap(), more_names).unwrap();
            let fg2 = fine_grained_score(&video, &cap2, &idf).map_err(|e| e.to_string())?;
            ensure((fg.precision - fg2.precision).abs() <= 1e-12, || "zero-idf token changed precision".into())?;
        }
    }
    ensure(worst_f1 <= 1e-12, || format!("fine-grained deviation {worst_f1:e}"))?;
    Ok(format!("500 fixtures, fine-grained max deviation {worst_f1:.1e}"))
}

fn foil_property() -> Outcome {
    let mut r = rng(31);
    let d = 8;
    let n = 50;
    let mut images = Vec::new();
    let mut correct = Vec::new();
    let mut foils = Vec::new();
    for _ in 0..n {
        let img = random_unit(&mut r, d);
        // correct caption: close to the image; foil: image mixed with noise.
        let noise = random_unit(&mut r, d);
        correct.push(img.iter().zip(&noise).map(|(a, b)| a + 0.1 * b).collect::<Vec<_>>());
        foils.push(img.iter().zip(&noise).map(|(a, b)| a + 2.0 * b).collect::<Vec<_>>());
        images.push(img);
    }
    let set = FoilSet {
        pairs: (0..n)
            .map(|i| FoilPair {
                image_id: i.to_string(),
                correct_caption_id: format!("c{i}"),
                foil_caption_id: format!("f{i}"),
                refs: Vec::new(),
            })
            .collect(),
    };
    let cfg = ScoreConfig::base();
    let lookup = |img: &str, cap: &str, _: &[String]| {
        let i: usize = img.parse().unwrap();
        let t = if cap.starts_with('c') { &correct[i] } else { &foils[i] };
        pac_score(&images[i], t, &cfg)
    };
    let sep = foil_accuracy(&set, lookup).map_err(|e| e.to_string())?;
    let flat = foil_accuracy(&set, |_, _, _| Ok(1.0)).map_err(|e| e.to_string())?;
    ensure(sep == 1.0, || format!("separated fixture gives {sep}"))?;
    ensure(flat == 0.0, || format!("constant scorer gives {flat}"))?;
    Ok(format!("separated {sep}, constant {flat}"))
}

fn file_format() -> Outcome {
    let mut r = rng(2024);
    for k in 0..1000 {
        let rows = r.random_range(0..20);
        let dim = r.random_range(1..40);
        let bits: Vec<f32> = (0..rows * dim).map(|_| r.random_range(-1e6f32..1e6)).collect();
        let m = EmbeddingMatrix::new(rows, dim, bits.iter().map(|&b| f64::from(b)).collect()).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&m, &mut buf).map_err(|e| e.to_string())?;
        let back = read_embeddings(&buf).map_err(|e| format!("round trip {k}: {e}"))?;
        let exact = back.rows() == rows
            && back.dim() == dim
            && back.as_slice().iter().zip(&bits).all(|(a, b)| (*a as f32).to_bits() == b.to_bits());
        ensure(exact, || format!("round trip {k} not bit-exact"))?;
    }
    let corrupted = corrupted_headers();
    for (label, bytes) in &corrupted {
        ensure(read_embeddings(bytes).is_err(), || format!("corruption {label:?} accepted"))?;
    }
    Ok(format!("1000 round trips bit-exact, {} corrupted fixtures rejected", corrupted.len()))
}

fn main() {
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 9] = [
        ("correlation oracle", correlation_oracle),
        ("gradient suite", gradient_suite),
        ("LoRA transparency", lora_transparency),
        ("synthetic contrastive training", synthetic_training),
        ("SCST exactness", scst_exactness),
        ("SCST demo", scst_demo),
        ("scoring formula suite", scoring_formulas),
        ("FOIL property", foil_property),
        ("file format", file_format),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
