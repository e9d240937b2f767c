//! Corpus-level scoring: resolves manifest items into embeddings and scores
//! every candidate caption against its target image or video.
//!
//! Items are scored in parallel; results always come back in manifest order.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedkit::{Corpus, ItemKind, ItemRecord};
use crate::error::{Error, Result};
use crate::evalstats::{Correlations, Judgment, ReportRecord};
use crate::scoring::{
    build_idf, pac_score, ref_pac_score, ref_video_score, video_score, IdfTable, ScoreConfig, ScoreRecord,
    TokenizedCaption, VideoEmbedding, FLAG_UNIFORM_IDF,
};

pub const METRIC_IMAGE: &str = "pac_s";
pub const METRIC_IMAGE_REF: &str = "ref_pac_s";
pub const METRIC_VIDEO: &str = "pac_s_video";
pub const METRIC_VIDEO_REF: &str = "ref_pac_s_video";

/// Which captions the IDF table is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfSource {
    /// References when the manifest lists any, otherwise candidates.
    Auto,
    References,
    Candidates,
}

/// Candidate captions whose target has the given kind, in manifest order.
pub fn candidates(corpus: &Corpus, target_kind: ItemKind) -> Result<Vec<&ItemRecord>> {
    let mut out = Vec::new();
    for item in &corpus.manifest().items {
        if item.kind != ItemKind::Caption {
            continue;
        }
        if let Some(target) = &item.target {
            if corpus.item(target)?.kind == target_kind {
                out.push(item);
            }
        }
    }
    Ok(out)
}

fn reference_ids(item: &ItemRecord, required: bool) -> Result<&[String]> {
    match item.refs.as_deref() {
        Some(r) if !r.is_empty() => Ok(r),
        _ if required => Err(Error::invalid(format!("caption {:?} lists no references", item.id))),
        _ => Ok(&[]),
    }
}

fn target(item: &ItemRecord) -> Result<&str> {
    item.target
        .as_deref()
        .ok_or_else(|| Error::invalid(format!("caption {:?} has no target", item.id)))
}

/// Per-token caption view of a caption item.
pub fn tokenized_caption(corpus: &Corpus, id: &str) -> Result<TokenizedCaption> {
    let item = corpus.item(id)?;
    let tokens = item
        .tokens
        .clone()
        .ok_or_else(|| Error::invalid(format!("caption {id:?} has no token strings")))?;
    TokenizedCaption::from_raw(&corpus.rows(id)?, tokens)
}

/// Image score of `caption_id` against `image_id`; reference-based when
/// `refs` is non-empty.
pub fn image_pair_score(corpus: &Corpus, image_id: &str, caption_id: &str, refs: &[String], cfg: &ScoreConfig) -> Result<f64> {
    let v = corpus.global_vector(image_id)?;
    let t = corpus.global_vector(caption_id)?;
    if refs.is_empty() {
        pac_score(&v, &t, cfg)
    } else {
        let r = refs.iter().map(|id| corpus.global_vector(id)).collect::<Result<Vec<_>>>()?;
        ref_pac_score(&v, &t, &r, cfg)
    }
}

/// Scores every caption that targets an image.
pub fn score_images(corpus: &Corpus, cfg: &ScoreConfig, use_refs: bool) -> Result<Vec<ScoreRecord>> {
    let items = candidates(corpus, ItemKind::Image)?;
    if items.is_empty() {
        return Err(Error::invalid("manifest has no captions targeting images"));
    }
    let metric = if use_refs { METRIC_IMAGE_REF } else { METRIC_IMAGE };
    items
        .par_iter()
        .map(|item| {
            let refs = if use_refs { reference_ids(item, true)? } else { &[] };
            Ok(ScoreRecord {
                id: item.id.clone(),
                metric: metric.to_owned(),
                score: image_pair_score(corpus, target(item)?, &item.id, refs, cfg)?,
                flags: Vec::new(),
            })
        })
        .collect()
}

/// Builds the IDF table for the video candidates of `corpus`.
pub fn video_idf(corpus: &Corpus, source: IdfSource) -> Result<IdfTable> {
    let items = candidates(corpus, ItemKind::FrameSequence)?;
    let refs: BTreeSet<&str> = items
        .iter()
        .flat_map(|i| i.refs.iter().flatten().map(String::as_str))
        .collect();
    let use_refs = match source {
        IdfSource::References if refs.is_empty() => {
            return Err(Error::invalid("IDF over references requested but no captions list references"))
        }
        IdfSource::References => true,
        IdfSource::Candidates => false,
        IdfSource::Auto => !refs.is_empty(),
    };
    let ids: Vec<&str> = if use_refs {
        refs.into_iter().collect()
    } else {
        items.iter().map(|i| i.id.as_str()).collect()
    };
    let captions = ids
        .iter()
        .map(|id| tokenized_caption(corpus, id))
        .collect::<Result<Vec<_>>>()?;
    Ok(build_idf(&captions))
}

/// Scores every caption that targets a frame sequence.
pub fn score_videos(corpus: &Corpus, idf: &IdfTable, use_refs: bool) -> Result<Vec<ScoreRecord>> {
    let items = candidates(corpus, ItemKind::FrameSequence)?;
    if items.is_empty() {
        return Err(Error::invalid("manifest has no captions targeting videos"));
    }
    let metric = if use_refs { METRIC_VIDEO_REF } else { METRIC_VIDEO };
    items
        .par_iter()
        .map(|item| {
            let video = VideoEmbedding::from_raw(&corpus.rows(target(item)?)?)?;
            let caption = tokenized_caption(corpus, &item.id)?;
            let (score, fallback) = if use_refs {
                let refs = reference_ids(item, true)?
                    .iter()
                    .map(|id| tokenized_caption(corpus, id))
                    .collect::<Result<Vec<_>>>()?;
                let s = ref_video_score(&video, &caption, &refs, idf)?;
                (s.score, !s.flags.is_empty())
            } else {
                let s = video_score(&video, &caption, idf)?;
                (s.score, s.fine.uniform_fallback)
            };
            Ok(ScoreRecord {
                id: item.id.clone(),
                metric: metric.to_owned(),
                score,
                flags: if fallback { vec![FLAG_UNIFORM_IDF.to_owned()] } else { Vec::new() },
            })
        })
        .collect()
}

/// Metric value of each judgment: the stored `metric_score`, or the image
/// score computed from the corpus when the judgment only names its items.
pub fn judgment_metric_scores(
    items: &[Judgment],
    corpus: Option<&Corpus>,
    cfg: &ScoreConfig,
    use_refs: bool,
) -> Result<Vec<f64>> {
    items
        .par_iter()
        .map(|j| {
            if let Some(s) = j.metric_score {
                return Ok(s);
            }
            let (Some(image), Some(caption)) = (&j.image, &j.caption) else {
                return Err(Error::invalid(format!(
                    "judgment {:?} has neither metric_score nor image and caption",
                    j.item_id
                )));
            };
            let corpus = corpus.ok_or_else(|| {
                Error::invalid(format!("judgment {:?} needs a manifest to be scored", j.item_id))
            })?;
            if use_refs && j.refs.is_empty() {
                return Err(Error::invalid(format!("judgment {:?} lists no references", j.item_id)));
            }
            let refs: &[String] = if use_refs { &j.refs } else { &[] };
            image_pair_score(corpus, image, caption, refs, cfg)
        })
        .collect()
}

/// Report rows for a set of correlations.
pub fn correlation_records(c: &Correlations, metric: &str, dataset: &str) -> Vec<ReportRecord> {
    [("kendall_tau_b", c.tau_b), ("kendall_tau_c", c.tau_c), ("spearman_rho", c.rho)]
        .into_iter()
        .map(|(statistic, value)| ReportRecord {
            metric: metric.to_owned(),
            dataset: dataset.to_owned(),
            statistic: statistic.to_owned(),
            value,
            n: c.n,
            seed: None,
        })
        .collect()
}
