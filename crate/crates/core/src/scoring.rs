//! PAC scores for image-caption and video-caption pairs.
//!
//! Image scoring clamps and scales a cosine similarity; the reference-based
//! variant takes the harmonic mean with the best reference similarity. Video
//! scoring averages a coarse (pooled) match with an IDF-weighted fine-grained
//! frame/token F1.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::embedkit::{cosine_sim, dot, norm, normalize_vec, EmbeddingMatrix};
use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-6;

/// Flag attached to results whose IDF weights summed to zero.
pub const FLAG_UNIFORM_IDF: &str = "idf_uniform_fallback";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub w: f64,
    pub backbone_tag: String,
}

impl ScoreConfig {
    pub fn new(w: f64, backbone_tag: impl Into<String>) -> Result<Self> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!("scaling factor w must be positive, got {w}")));
        }
        Ok(ScoreConfig {
            w,
            backbone_tag: backbone_tag.into(),
        })
    }

    /// ViT-B/32 backbone, `w = 2.5`.
    pub fn base() -> Self {
        ScoreConfig {
            w: 2.5,
            backbone_tag: "ViT-B/32".into(),
        }
    }

    /// ViT-L/14 backbone, `w = 3.0`.
    pub fn large() -> Self {
        ScoreConfig {
            w: 3.0,
            backbone_tag: "ViT-L/14".into(),
        }
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self::base()
    }
}

/// Harmonic mean, defined as 0 when either argument is non-positive.
pub fn harmonic_mean(x: f64, y: f64) -> f64 {
    if x <= 0.0 || y <= 0.0 {
        0.0
    } else {
        2.0 * x * y / (x + y)
    }
}

/// `w · max(cos(v, t), 0)`.
pub fn pac_score(v: &[f64], t: &[f64], cfg: &ScoreConfig) -> Result<f64> {
    Ok(cfg.w * cosine_sim(v, t)?.max(0.0))
}

/// Best clamped similarity between the candidate and any reference.
pub fn top_ref_similarity<R: AsRef<[f64]>>(t: &[f64], refs: &[R]) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::invalid("reference-based score needs at least one reference"));
    }
    let mut best = f64::NEG_INFINITY;
    for r in refs {
        best = best.max(cosine_sim(t, r.as_ref())?);
    }
    Ok(best.max(0.0))
}

/// Harmonic mean of [`pac_score`] and the best reference similarity.
///
/// The first argument is `w`-scaled while the reference term is a raw cosine.
pub fn ref_pac_score<R: AsRef<[f64]>>(v: &[f64], t: &[f64], refs: &[R], cfg: &ScoreConfig) -> Result<f64> {
    let top_r = top_ref_similarity(t, refs)?;
    let score = pac_score(v, t, cfg)?;
    Ok(harmonic_mean(score, top_r))
}

fn check_unit_rows(m: &EmbeddingMatrix, what: &str) -> Result<()> {
    for (i, row) in m.iter_rows().enumerate() {
        let n = norm(row);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!("{what} row {i} has norm {n}, expected unit norm")));
        }
    }
    Ok(())
}

/// Per-token caption embeddings, start marker first and end marker last.
/// The end-marker row doubles as the global caption embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedCaption {
    token_embeddings: EmbeddingMatrix,
    token_strings: Vec<String>,
}

impl TokenizedCaption {
    /// Wraps unit-norm token rows.
    pub fn new(token_embeddings: EmbeddingMatrix, token_strings: Vec<String>) -> Result<Self> {
        if token_embeddings.rows() < 2 {
            return Err(Error::invalid("a tokenized caption needs start and end markers (L >= 2)"));
        }
        if token_strings.len() != token_embeddings.rows() {
            return Err(Error::DimensionMismatch {
                expected: token_embeddings.rows(),
                got: token_strings.len(),
            });
        }
        check_unit_rows(&token_embeddings, "token")?;
        Ok(TokenizedCaption {
            token_embeddings,
            token_strings,
        })
    }

    /// Normalises raw token rows first.
    pub fn from_raw(token_embeddings: &EmbeddingMatrix, token_strings: Vec<String>) -> Result<Self> {
        Self::new(crate::embedkit::l2_normalize(token_embeddings)?, token_strings)
    }

    pub fn len(&self) -> usize {
        self.token_strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_strings.is_empty()
    }

    pub fn token_embeddings(&self) -> &EmbeddingMatrix {
        &self.token_embeddings
    }

    pub fn token_strings(&self) -> &[String] {
        &self.token_strings
    }

    /// The end-marker embedding.
    pub fn global(&self) -> &[f64] {
        self.token_embeddings.row(self.token_embeddings.rows() - 1)
    }
}

/// Unit-norm frame embeddings of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoEmbedding {
    frames: EmbeddingMatrix,
}

impl VideoEmbedding {
    pub fn new(frames: EmbeddingMatrix) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("a video needs at least one frame"));
        }
        check_unit_rows(&frames, "frame")?;
        Ok(VideoEmbedding { frames })
    }

    pub fn from_raw(frames: &EmbeddingMatrix) -> Result<Self> {
        Self::new(crate::embedkit::l2_normalize(frames)?)
    }

    pub fn frames(&self) -> &EmbeddingMatrix {
        &self.frames
    }
}

/// Smoothed inverse document frequencies: `ln((M + 1) / (df + 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    weights: BTreeMap<String, f64>,
    corpus_size: usize,
}

impl IdfTable {
    /// Each inner list is one caption's tokens; repeated tokens within a
    /// caption count once.
    pub fn from_token_lists<I, S>(captions: I) -> Self
    where
        I: IntoIterator,
        I::Item: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut m = 0usize;
        for caption in captions {
            m += 1;
            let uniq: BTreeSet<String> = caption.into_iter().map(|s| s.as_ref().to_owned()).collect();
            for tok in uniq {
                *df.entry(tok).or_default() += 1;
            }
        }
        let weights = df
            .into_iter()
            .map(|(tok, d)| (tok, idf_value(m, d)))
            .collect();
        IdfTable {
            weights,
            corpus_size: m,
        }
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    /// Weight of `token`; unseen tokens behave as `df = 0`.
    pub fn weight(&self, token: &str) -> f64 {
        self.weights
            .get(token)
            .copied()
            .unwrap_or_else(|| idf_value(self.corpus_size, 0))
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }
}

fn idf_value(m: usize, df: usize) -> f64 {
    ((m as f64 + 1.0) / (df as f64 + 1.0)).ln()
}

pub fn build_idf(corpus: &[TokenizedCaption]) -> IdfTable {
    IdfTable::from_token_lists(corpus.iter().map(|c| c.token_strings().iter()))
}

/// Normalised mean of the frame embeddings.
pub fn coarse_video_embedding(video: &VideoEmbedding) -> Result<Vec<f64>> {
    let frames = video.frames();
    let mut mean = vec![0.0; frames.dim()];
    for row in frames.iter_rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    let count = frames.rows() as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    normalize_vec(&mean).map_err(|_| Error::Degenerate("mean-pooled frame embedding has zero norm".into()))
}

pub fn coarse_score(video: &VideoEmbedding, caption: &TokenizedCaption) -> Result<f64> {
    let wc = coarse_video_embedding(video)?;
    check_dim(wc.len(), caption.global().len())?;
    Ok(dot(&wc, caption.global()))
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineGrained {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// IDF weights summed to zero and uniform token weights were used.
    pub uniform_fallback: bool,
}

/// Precision over tokens (IDF-weighted), recall over frames, combined by F1.
pub fn fine_grained_score(video: &VideoEmbedding, caption: &TokenizedCaption, idf: &IdfTable) -> Result<FineGrained> {
    fine_grained_rows(video.frames(), caption, idf)
}

fn fine_grained_rows(frames: &EmbeddingMatrix, caption: &TokenizedCaption, idf: &IdfTable) -> Result<FineGrained> {
    let tokens = caption.token_embeddings();
    check_dim(frames.dim(), tokens.dim())?;
    // sims[l][j] = frame j · token l
    let sims: Vec<Vec<f64>> = tokens
        .iter_rows()
        .map(|t| frames.iter_rows().map(|f| dot(f, t)).collect())
        .collect();

    let mut weights: Vec<f64> = caption.token_strings().iter().map(|s| idf.weight(s)).collect();
    let mut total: f64 = weights.iter().sum();
    let uniform_fallback = total <= 0.0;
    if uniform_fallback {
        weights.iter_mut().for_each(|w| *w = 1.0);
        total = weights.len() as f64;
    }
    let precision = sims
        .iter()
        .zip(&weights)
        .map(|(row, w)| w * row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / total;

    let recall = (0..frames.rows())
        .map(|j| sims.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / frames.rows() as f64;

    let f1 = if precision + recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(FineGrained {
        precision,
        recall,
        f1,
        uniform_fallback,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub coarse: f64,
    pub fine: FineGrained,
    pub score: f64,
}

/// Mean of the coarse score and the fine-grained F1.
pub fn video_score(video: &VideoEmbedding, caption: &TokenizedCaption, idf: &IdfTable) -> Result<VideoScore> {
    let coarse = coarse_score(video, caption)?;
    let fine = fine_grained_score(video, caption, idf)?;
    Ok(VideoScore {
        coarse,
        fine,
        score: (coarse + fine.f1) / 2.0,
    })
}

/// Caption-vs-reference score: the reference's tokens stand in for video
/// frames and its end-marker embedding for the pooled video embedding.
pub fn text_score(caption: &TokenizedCaption, reference: &TokenizedCaption, idf: &IdfTable) -> Result<VideoScore> {
    check_dim(reference.global().len(), caption.global().len())?;
    let coarse = dot(reference.global(), caption.global());
    let fine = fine_grained_rows(reference.token_embeddings(), caption, idf)?;
    Ok(VideoScore {
        coarse,
        fine,
        score: (coarse + fine.f1) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefVideoScore {
    pub video: VideoScore,
    pub best_text: f64,
    pub best_ref_index: usize,
    pub score: f64,
    pub flags: Vec<String>,
}

/// `(video_score + max_i text_score(caption, ref_i)) / 2`.
pub fn ref_video_score(
    video: &VideoEmbedding,
    caption: &TokenizedCaption,
    refs: &[TokenizedCaption],
    idf: &IdfTable,
) -> Result<RefVideoScore> {
    if refs.is_empty() {
        return Err(Error::invalid("reference-based video score needs at least one reference"));
    }
    let vs = video_score(video, caption, idf)?;
    let mut fallback = vs.fine.uniform_fallback;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, r) in refs.iter().enumerate() {
        let ts = text_score(caption, r, idf)?;
        fallback |= ts.fine.uniform_fallback;
        if ts.score > best.0 {
            best = (ts.score, i);
        }
    }
    let flags = if fallback { vec![FLAG_UNIFORM_IDF.to_owned()] } else { Vec::new() };
    Ok(RefVideoScore {
        score: (vs.score + best.0) / 2.0,
        video: vs,
        best_text: best.0,
        best_ref_index: best.1,
        flags,
    })
}

/// One line of the score JSON-lines output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub metric: String,
    pub score: f64,
    pub flags: Vec<String>,
}
