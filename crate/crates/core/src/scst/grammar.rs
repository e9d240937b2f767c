use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Built-in list of English prepositions, conjunctions and determiners.
pub const DEFAULT_STOPLIST: &str = include_str!("../../data/stoplist.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarConfig {
    pub stoplist: BTreeSet<String>,
    pub max_n: usize,
}

impl GrammarConfig {
    /// Parses a newline-separated stoplist; blank lines and `#` comments are
    /// skipped and words are lowercased.
    pub fn from_stoplist_text(text: &str, max_n: usize) -> Result<Self> {
        let stoplist: BTreeSet<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        if stoplist.is_empty() {
            return Err(Error::invalid("stoplist is empty"));
        }
        if max_n == 0 {
            return Err(Error::invalid("max_n must be at least 1"));
        }
        Ok(GrammarConfig { stoplist, max_n })
    }
}

impl Default for GrammarConfig {
    fn default() -> Self {
        Self::from_stoplist_text(DEFAULT_STOPLIST, 4).expect("built-in stoplist is valid")
    }
}

/// Average over captions of `(#n-grams - #distinct n-grams)`.
pub fn rep_n<S: AsRef<str>>(captions: &[Vec<S>], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if captions.is_empty() {
        return Err(Error::invalid("no captions"));
    }
    let total: usize = captions
        .iter()
        .map(|c| {
            if c.len() < n {
                return 0;
            }
            let grams: Vec<Vec<&str>> = c.windows(n).map(|w| w.iter().map(AsRef::as_ref).collect()).collect();
            let distinct: HashSet<&Vec<&str>> = grams.iter().collect();
            grams.len() - distinct.len()
        })
        .sum();
    Ok(total as f64 / captions.len() as f64)
}

/// Whitespace tokenisation used by the grammar metrics.
pub fn tokenize(caption: &str) -> Vec<String> {
    caption.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndingStats {
    pub percent: f64,
    /// Captions with no words, counted as incorrect.
    pub empty: usize,
}

/// Percentage of captions whose last word (trailing punctuation stripped,
/// lowercased) is in the stoplist.
pub fn pct_incorrect_endings<S: AsRef<str>>(captions: &[S], cfg: &GrammarConfig) -> Result<EndingStats> {
    if captions.is_empty() {
        return Err(Error::invalid("no captions"));
    }
    let mut bad = 0usize;
    let mut empty = 0usize;
    for c in captions {
        let trimmed = c.as_ref().trim_end_matches(|ch: char| ch.is_ascii_punctuation() || ch.is_whitespace());
        match trimmed.split_whitespace().last() {
            None => {
                empty += 1;
                bad += 1;
            }
            Some(w) => {
                let w = w.trim_matches(|ch: char| ch.is_ascii_punctuation()).to_lowercase();
                if cfg.stoplist.contains(&w) {
                    bad += 1;
                }
            }
        }
    }
    Ok(EndingStats {
        percent: 100.0 * bad as f64 / captions.len() as f64,
        empty,
    })
}
