//! Command-line front end: flag and config-file resolution, validation,
//! and wiring of library operations into reports.
//!
//! Every command validates its whole configuration first, then computes all
//! artifacts in memory, then writes them. Any failure leaves no output files.

pub mod args;
pub mod error;
pub mod output;
pub mod settings;

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use pacmetric::embedkit::Corpus;
use pacmetric::evalstats::{
    correlations, foil_accuracy, pairwise_accuracy, Aggregation, FoilSet, Judgment, JudgmentSet, PairwiseConfig,
    PairwiseSet, ReportRecord,
};
use pacmetric::jsonl::read_jsonl;
use pacmetric::paclearn::{config_hash, encode_checkpoint, run_synthetic, SyntheticTask, TrainConfig, ALLOWED_RANKS};
use pacmetric::pipeline::{
    correlation_records, image_pair_score, judgment_metric_scores, score_images, score_videos, video_idf, IdfSource,
    METRIC_IMAGE, METRIC_IMAGE_REF,
};
use pacmetric::scst::{pct_incorrect_endings, rep_n, run_demo, tokenize, DemoConfig, GrammarConfig, DEFAULT_STOPLIST};
use pacmetric::{Manifest, ScoreConfig};

pub use args::Cli;
use args::{AggregationArg, Command, CorpusArgs, IdfSourceArg, ImageMetricArgs};
pub use error::{CliError, CliResult};
pub use output::{emit_plot_data, plot_data_bytes, Staged};
use settings::{pick, Settings};

/// Environment variable capping worker threads; `1` runs everything on one
/// thread.
pub const THREADS_ENV: &str = "PACMETRIC_THREADS";

/// Collects validation failures so they can be reported together.
#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn file(&mut self, label: &str, path: &Path) {
        if !path.is_file() {
            self.push(format!("{label} {} does not exist", path.display()));
        }
    }

    fn dir(&mut self, label: &str, path: &Path) {
        if !path.is_dir() {
            self.push(format!("{label} {} is not a directory", path.display()));
        }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.push(msg());
        }
    }

    fn finish(self) -> CliResult<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(self.0))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct CorpusPlan {
    manifest: PathBuf,
    embeddings_dir: PathBuf,
    refs: bool,
}

impl CorpusPlan {
    fn open(&self) -> CliResult<Corpus> {
        Ok(Corpus::open(Manifest::load(&self.manifest)?, &self.embeddings_dir)?)
    }
}

fn resolve_corpus(args: &CorpusArgs, file: &Settings, required: bool, p: &mut Problems) -> Option<CorpusPlan> {
    let refs = args.refs || file.refs.unwrap_or(false);
    let Some(manifest) = &args.manifest else {
        if required {
            p.push("--manifest is required");
        }
        if args.embeddings_dir.is_some() {
            p.push("--embeddings-dir needs --manifest");
        }
        return None;
    };
    p.file("manifest", manifest);
    let embeddings_dir = match &args.embeddings_dir {
        Some(d) => d.clone(),
        None => manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let shown = if embeddings_dir.as_os_str().is_empty() { PathBuf::from(".") } else { embeddings_dir.clone() };
    p.dir("embeddings directory", &shown);
    Some(CorpusPlan {
        manifest: manifest.clone(),
        embeddings_dir: shown,
        refs,
    })
}

fn resolve_score(args: &ImageMetricArgs, file: &Settings, p: &mut Problems) -> ScoreConfig {
    let backbone = args.backbone.clone().or_else(|| file.backbone.clone());
    let default = match backbone.as_deref() {
        Some("ViT-L/14") => ScoreConfig::large(),
        _ => ScoreConfig::base(),
    };
    let w = pick(args.w, file.w, default.w);
    p.check(w > 0.0 && w.is_finite(), || format!("--w must be positive, got {w}"));
    ScoreConfig {
        w,
        backbone_tag: backbone.unwrap_or(default.backbone_tag),
    }
}

fn parse_enum<T: ValueEnum>(flag: Option<T>, file: Option<&str>, name: &str, default: T, p: &mut Problems) -> T {
    if let Some(v) = flag {
        return v;
    }
    match file {
        None => default,
        Some(s) => T::from_str(s, true).unwrap_or_else(|_| {
            p.push(format!("config value {name} = {s:?} is not recognised"));
            default
        }),
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Plan {
    ScoreImage {
        corpus: CorpusPlan,
        score: ScoreConfig,
    },
    ScoreVideo {
        corpus: CorpusPlan,
        idf_source: IdfSource,
    },
    EvalCorr {
        judgments: PathBuf,
        aggregation: Aggregation,
        dataset: String,
        corpus: Option<CorpusPlan>,
        refs: bool,
        score: ScoreConfig,
    },
    EvalPairwise {
        pairs: PathBuf,
        dataset: String,
        corpus: CorpusPlan,
        score: ScoreConfig,
        pairwise: PairwiseConfig,
    },
    EvalFoil {
        foil: PathBuf,
        dataset: String,
        corpus: CorpusPlan,
        score: ScoreConfig,
    },
    TrainPac {
        task: SyntheticTask,
        train: TrainConfig,
        checkpoint: Option<PathBuf>,
    },
    ScstDemo {
        demo: DemoConfig,
    },
    Grammar {
        captions: PathBuf,
        stoplist: Option<PathBuf>,
        max_n: usize,
    },
}

fn dataset_name(flag: &Option<String>, file: &Settings, path: &Path) -> String {
    flag.clone()
        .or_else(|| file.dataset.clone())
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

fn positive(p: &mut Problems, name: &str, v: usize) {
    p.check(v >= 1, || format!("{name} must be at least 1"));
}

fn non_negative(p: &mut Problems, name: &str, v: f64) {
    p.check(v >= 0.0 && v.is_finite(), || format!("{name} must be a finite non-negative number, got {v}"));
}

fn resolve(cli: &Cli, file: &Settings, p: &mut Problems) -> Option<Plan> {
    let seed = cli.seed.or(file.seed);
    let plan = match &cli.command {
        Command::ScoreImage(a) => {
            let corpus = resolve_corpus(&a.corpus, file, true, p);
            let score = resolve_score(&a.metric, file, p);
            Plan::ScoreImage { corpus: corpus?, score }
        }
        Command::ScoreVideo(a) => {
            let corpus = resolve_corpus(&a.corpus, file, true, p);
            let src = parse_enum(a.idf_source, file.idf_source.as_deref(), "idf_source", IdfSourceArg::Auto, p);
            let idf_source = match src {
                IdfSourceArg::Auto => IdfSource::Auto,
                IdfSourceArg::References => IdfSource::References,
                IdfSourceArg::Candidates => IdfSource::Candidates,
            };
            Plan::ScoreVideo {
                corpus: corpus?,
                idf_source,
            }
        }
        Command::EvalCorr(a) => {
            p.file("judgments file", &a.judgments);
            let corpus = resolve_corpus(&a.corpus, file, false, p);
            let agg = parse_enum(a.aggregation, file.aggregation.as_deref(), "aggregation", AggregationArg::Raw, p);
            Plan::EvalCorr {
                judgments: a.judgments.clone(),
                aggregation: match agg {
                    AggregationArg::Raw => Aggregation::Raw,
                    AggregationArg::MeanProportionYes => Aggregation::MeanProportionYes,
                },
                dataset: dataset_name(&a.dataset, file, &a.judgments),
                refs: a.corpus.refs || file.refs.unwrap_or(false),
                corpus,
                score: resolve_score(&a.metric, file, p),
            }
        }
        Command::EvalPairwise(a) => {
            p.file("pairs file", &a.pairs);
            let corpus = resolve_corpus(&a.corpus, file, true, p);
            let defaults = PairwiseConfig::default();
            let pairwise = PairwiseConfig {
                seed: seed.unwrap_or(defaults.seed),
                draws: pick(a.draws, file.draws, defaults.draws),
                refs_per_draw: pick(a.refs_per_draw, file.refs_per_draw, defaults.refs_per_draw),
                reference_based: a.corpus.refs || file.refs.unwrap_or(false),
            };
            positive(p, "--draws", pairwise.draws);
            positive(p, "--refs-per-draw", pairwise.refs_per_draw);
            let score = resolve_score(&a.metric, file, p);
            Plan::EvalPairwise {
                pairs: a.pairs.clone(),
                dataset: dataset_name(&a.dataset, file, &a.pairs),
                corpus: corpus?,
                score,
                pairwise,
            }
        }
        Command::EvalFoil(a) => {
            p.file("foil file", &a.foil);
            let corpus = resolve_corpus(&a.corpus, file, true, p);
            let score = resolve_score(&a.metric, file, p);
            Plan::EvalFoil {
                foil: a.foil.clone(),
                dataset: dataset_name(&a.dataset, file, &a.foil),
                corpus: corpus?,
                score,
            }
        }
        Command::TrainPac(a) => {
            let d = TrainConfig::default();
            let train = TrainConfig {
                tau: pick(a.tau, file.tau, d.tau),
                lambda_v: pick(a.lambda_v, file.lambda_v, d.lambda_v),
                lambda_t: pick(a.lambda_t, file.lambda_t, d.lambda_t),
                lr: pick(a.lr, file.lr, d.lr),
                batch_size: pick(a.batch_size, file.batch_size, d.batch_size),
                patience_iters: pick(a.patience, file.patience, d.patience_iters),
                seed: seed.unwrap_or(d.seed),
                rank: pick(a.rank, file.rank, d.rank),
                max_iters: pick(a.max_iters, file.max_iters, d.max_iters),
                ..d
            };
            let t = SyntheticTask::default();
            let task = SyntheticTask {
                clusters: pick(a.clusters, file.clusters, t.clusters),
                d_in: pick(a.d_in, file.d_in, t.d_in),
                d_out: pick(a.d_out, file.d_out, t.d_out),
                n_train: pick(a.n_train, file.n_train, t.n_train),
                ..t
            };
            p.check(ALLOWED_RANKS.contains(&train.rank), || {
                format!("--rank must be one of {ALLOWED_RANKS:?}, got {}", train.rank)
            });
            p.check(train.tau > 0.0 && train.tau.is_finite(), || format!("--tau must be positive, got {}", train.tau));
            non_negative(p, "--lambda-v", train.lambda_v);
            non_negative(p, "--lambda-t", train.lambda_t);
            non_negative(p, "--lr", train.lr);
            positive(p, "--batch-size", train.batch_size);
            positive(p, "--max-iters", train.max_iters);
            positive(p, "--patience", train.patience_iters);
            p.check(task.clusters >= 2, || "--clusters must be at least 2".into());
            positive(p, "--d-in", task.d_in);
            positive(p, "--d-out", task.d_out);
            positive(p, "--n-train", task.n_train);
            Plan::TrainPac {
                task,
                train,
                checkpoint: a.checkpoint.clone(),
            }
        }
        Command::ScstDemo(a) => {
            let mut demo = DemoConfig::default();
            demo.scst.beam_size = pick(a.beam, file.beam, demo.scst.beam_size);
            demo.scst.lr = pick(a.lr, file.lr, demo.scst.lr);
            demo.scst.steps = pick(a.steps, file.steps, demo.scst.steps);
            demo.scst.seed = seed.unwrap_or(demo.scst.seed);
            demo.reference_based = a.refs || file.refs.unwrap_or(false);
            positive(p, "--beam", demo.scst.beam_size);
            positive(p, "--steps", demo.scst.steps);
            non_negative(p, "--lr", demo.scst.lr);
            Plan::ScstDemo { demo }
        }
        Command::Grammar(a) => {
            p.file("captions file", &a.captions);
            if let Some(s) = &a.stoplist {
                p.file("stoplist", s);
            }
            let max_n = pick(a.max_n, file.max_n, GrammarConfig::default().max_n);
            positive(p, "--max-n", max_n);
            Plan::Grammar {
                captions: a.captions.clone(),
                stoplist: a.stoplist.clone(),
                max_n,
            }
        }
    };
    Some(plan)
}

fn check_outputs(cli: &Cli, plan: Option<&Plan>, p: &mut Problems) {
    let mut outs: Vec<(&str, &PathBuf)> = Vec::new();
    if let Some(o) = &cli.out {
        outs.push(("--out", o));
    }
    if let Some(o) = &cli.plot_data {
        outs.push(("--plot-data", o));
    }
    if let Some(Plan::TrainPac {
        checkpoint: Some(c), ..
    }) = plan
    {
        outs.push(("--checkpoint", c));
    }
    for (i, (flag, path)) in outs.iter().enumerate() {
        let parent = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            p.push(format!("{flag} directory {} does not exist", parent.display()));
        }
        if path.is_dir() {
            p.push(format!("{flag} {} is a directory", path.display()));
        }
        if outs[..i].iter().any(|(_, q)| q == path) {
            p.push(format!("{flag} {} is used for more than one output", path.display()));
        }
    }
}

fn thread_count() -> Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got {s:?}")),
        },
    }
}

/// Everything a command produced, not yet written.
pub struct Artifacts {
    pub report: Value,
    pub plot: Option<Vec<u8>>,
    pub checkpoint: Option<(PathBuf, Vec<u8>)>,
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    id: &'a str,
    metric: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct PairScoreRow {
    item_id: String,
    metric_score: f64,
    human_score: f64,
}

#[derive(Serialize)]
struct CategoryRow {
    category: String,
    accuracy: f64,
}

#[derive(Serialize)]
struct FoilRow {
    image_id: String,
    caption_id: String,
    role: &'static str,
    score: f64,
}

#[derive(Serialize)]
struct RewardRow {
    step: usize,
    mean_reward: f64,
}

#[derive(Serialize)]
struct RepRow {
    n: usize,
    rep: f64,
}

fn metric_name(refs: bool) -> &'static str {
    if refs {
        METRIC_IMAGE_REF
    } else {
        METRIC_IMAGE
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn execute(plan: &Plan, want_plot: bool) -> CliResult<Artifacts> {
    let plot = |bytes: CliResult<Vec<u8>>| -> CliResult<Option<Vec<u8>>> { if want_plot { bytes.map(Some) } else { Ok(None) } };
    let mut checkpoint = None;
    let (results, plot) = match plan {
        Plan::ScoreImage { corpus, score } => {
            let c = corpus.open()?;
            let records = score_images(&c, score, corpus.refs)?;
            let rows: Vec<ScoreRow> = records.iter().map(|r| ScoreRow { id: &r.id, metric: &r.metric, score: r.score }).collect();
            let p = plot(plot_data_bytes(&rows))?;
            (json!({ "records": records }), p)
        }
        Plan::ScoreVideo { corpus, idf_source } => {
            let c = corpus.open()?;
            let idf = video_idf(&c, *idf_source)?;
            let records = score_videos(&c, &idf, corpus.refs)?;
            let rows: Vec<ScoreRow> = records.iter().map(|r| ScoreRow { id: &r.id, metric: &r.metric, score: r.score }).collect();
            let p = plot(plot_data_bytes(&rows))?;
            (json!({ "idf_corpus_size": idf.corpus_size(), "records": records }), p)
        }
        Plan::EvalCorr {
            judgments,
            aggregation,
            dataset,
            corpus,
            refs,
            score,
        } => {
            let items: Vec<Judgment> = read_jsonl(judgments)?;
            let set = JudgmentSet::new(items, *aggregation)?;
            let opened = corpus.as_ref().map(CorpusPlan::open).transpose()?;
            let metric = judgment_metric_scores(&set.items, opened.as_ref(), score, *refs)?;
            let human = set.human_scores()?;
            let c = correlations(&metric, &human)?;
            let records = correlation_records(&c, metric_name(*refs), dataset);
            let rows: Vec<PairScoreRow> = set
                .items
                .iter()
                .zip(metric.iter().zip(&human))
                .map(|(j, (&m, &h))| PairScoreRow {
                    item_id: j.item_id.clone(),
                    metric_score: m,
                    human_score: h,
                })
                .collect();
            let p = plot(plot_data_bytes(&rows))?;
            (json!({ "records": records }), p)
        }
        Plan::EvalPairwise {
            pairs,
            dataset,
            corpus,
            score,
            pairwise,
        } => {
            let set: PairwiseSet = read_json(pairs)?;
            let c = corpus.open()?;
            let acc = pairwise_accuracy(&set, |img, cap, refs| image_pair_score(&c, img, cap, refs, score), pairwise)?;
            let metric = metric_name(pairwise.reference_based);
            let mut records: Vec<ReportRecord> = acc
                .per_category
                .iter()
                .map(|(cat, &v)| ReportRecord {
                    metric: metric.into(),
                    dataset: dataset.clone(),
                    statistic: format!("accuracy_{cat:?}"),
                    value: v,
                    n: acc.n,
                    seed: Some(pairwise.seed),
                })
                .collect();
            records.push(ReportRecord {
                metric: metric.into(),
                dataset: dataset.clone(),
                statistic: "accuracy_mean".into(),
                value: acc.mean,
                n: acc.n,
                seed: Some(pairwise.seed),
            });
            let rows: Vec<CategoryRow> = acc
                .per_category
                .iter()
                .map(|(cat, &v)| CategoryRow {
                    category: format!("{cat:?}"),
                    accuracy: v,
                })
                .collect();
            let p = plot(plot_data_bytes(&rows))?;
            (json!({ "records": records, "accuracy": acc }), p)
        }
        Plan::EvalFoil {
            foil,
            dataset,
            corpus,
            score,
        } => {
            let set: FoilSet = read_json(foil)?;
            let c = corpus.open()?;
            let refs_on = corpus.refs;
            let mut seen: Vec<(String, String, f64)> = Vec::new();
            let acc = foil_accuracy(&set, |img, cap, refs| {
                let refs: &[String] = if refs_on { refs } else { &[] };
                if refs_on && refs.is_empty() {
                    return Err(pacmetric::Error::InvalidInput(format!("foil pair for {img:?} lists no references")));
                }
                let s = image_pair_score(&c, img, cap, refs, score)?;
                seen.push((img.to_owned(), cap.to_owned(), s));
                Ok(s)
            })?;
            let record = ReportRecord {
                metric: metric_name(refs_on).into(),
                dataset: dataset.clone(),
                statistic: "foil_accuracy".into(),
                value: acc,
                n: set.pairs.len(),
                seed: None,
            };
            let rows: Vec<FoilRow> = seen
                .into_iter()
                .enumerate()
                .map(|(i, (image_id, caption_id, score))| FoilRow {
                    image_id,
                    caption_id,
                    role: if i % 2 == 0 { "correct" } else { "foil" },
                    score,
                })
                .collect();
            let p = plot(plot_data_bytes(&rows))?;
            (json!({ "records": [record] }), p)
        }
        Plan::TrainPac {
            task,
            train,
            checkpoint: ckpt,
        } => {
            let run = run_synthetic(task, train)?;
            let hash = config_hash(train);
            if let Some(path) = ckpt {
                checkpoint = Some((path.clone(), encode_checkpoint(&run.outcome.adapters, train.seed, &hash)?));
            }
            let o = &run.outcome;
            let p = plot(plot_data_bytes(&o.history))?;
            (
                json!({
                    "config_hash": hash,
                    "frozen_recall_at_1": run.frozen_recall,
                    "trained_recall_at_1": run.trained_recall,
                    "initial_val_loss": o.initial_val_loss,
                    "best_val_loss": o.best_val_loss,
                    "best_iteration": o.best_iteration,
                    "iterations": o.iterations,
                    "stopped_early": o.stopped_early,
                }),
                p,
            )
        }
        Plan::ScstDemo { demo } => {
            let report = run_demo(demo, &ScoreConfig::base(), &GrammarConfig::default())?;
            let rows: Vec<RewardRow> = report
                .scst_reward_curve
                .iter()
                .enumerate()
                .map(|(step, &mean_reward)| RewardRow { step, mean_reward })
                .collect();
            let p = plot(plot_data_bytes(&rows))?;
            (
                json!({
                    "relative_reward_gain": report.relative_reward_gain(),
                    "after_xent": report.after_xent,
                    "after_scst": report.after_scst,
                    "xent_final_loss": report.xent_loss_curve.last(),
                }),
                p,
            )
        }
        Plan::Grammar {
            captions,
            stoplist,
            max_n,
        } => {
            let text = std::fs::read_to_string(captions).map_err(|e| CliError::io(captions, e))?;
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            let stop_text = match stoplist {
                Some(s) => std::fs::read_to_string(s).map_err(|e| CliError::io(s, e))?,
                None => DEFAULT_STOPLIST.to_owned(),
            };
            let cfg = GrammarConfig::from_stoplist_text(&stop_text, *max_n)?;
            let tokenized: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l)).collect();
            let reps = (1..=cfg.max_n)
                .map(|n| Ok(RepRow { n, rep: rep_n(&tokenized, n)? }))
                .collect::<CliResult<Vec<_>>>()?;
            let endings = pct_incorrect_endings(&lines, &cfg)?;
            let p = plot(plot_data_bytes(&reps))?;
            let rep: serde_json::Map<String, Value> =
                reps.iter().map(|r| (format!("rep_{}", r.n), json!(r.rep))).collect();
            (
                json!({
                    "captions": lines.len(),
                    "rep_n": rep,
                    "pct_incorrect_endings": endings.percent,
                    "empty_captions": endings.empty,
                }),
                p,
            )
        }
    };
    Ok(Artifacts {
        report: json!({ "config": plan, "results": results }),
        plot,
        checkpoint,
    })
}

/// Validates, runs and writes the outputs of one invocation. The report is
/// returned as well as written (or printed when `--out` is absent).
pub fn run(cli: &Cli) -> CliResult<Value> {
    let mut p = Problems::default();
    let file = match &cli.config {
        Some(path) if !path.is_file() => {
            p.push(format!("config file {} does not exist", path.display()));
            Settings::default()
        }
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let threads = thread_count().unwrap_or_else(|e| {
        p.push(e);
        None
    });
    let plan = resolve(cli, &file, &mut p);
    check_outputs(cli, plan.as_ref(), &mut p);
    p.finish()?;
    let plan = plan.expect("plan resolves when validation passes");

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker threads: {e}")))?;
    let artifacts = pool.install(|| execute(&plan, cli.plot_data.is_some()))?;

    let mut staged = Staged::default();
    let report_text = serde_json::to_string_pretty(&artifacts.report)? + "\n";
    if let Some(out) = &cli.out {
        staged.add(out, report_text.clone().into_bytes());
    }
    if let (Some(path), Some(bytes)) = (&cli.plot_data, artifacts.plot) {
        staged.add(path, bytes);
    }
    if let Some((path, bytes)) = artifacts.checkpoint {
        staged.add(path, bytes);
    }
    staged.commit()?;
    if cli.out.is_none() {
        print!("{report_text}");
    }
    Ok(artifacts.report)
}
