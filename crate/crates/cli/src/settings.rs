use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Optional defaults read from `--config`. Every field is optional; a flag
/// given on the command line always wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub w: Option<f64>,
    pub backbone: Option<String>,
    pub refs: Option<bool>,
    pub idf_source: Option<String>,
    pub aggregation: Option<String>,
    pub dataset: Option<String>,
    pub draws: Option<usize>,
    pub refs_per_draw: Option<usize>,
    pub rank: Option<usize>,
    pub lambda_v: Option<f64>,
    pub lambda_t: Option<f64>,
    pub tau: Option<f64>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_iters: Option<usize>,
    pub patience: Option<usize>,
    pub clusters: Option<usize>,
    pub d_in: Option<usize>,
    pub d_out: Option<usize>,
    pub n_train: Option<usize>,
    pub beam: Option<usize>,
    pub steps: Option<usize>,
    pub max_n: Option<usize>,
}

impl Settings {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(vec![format!("config file {}: {e}", path.display())]))
    }
}

/// Flag, then config file, then built-in default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
