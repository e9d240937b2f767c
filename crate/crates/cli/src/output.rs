//! Output staging and plot-data CSV.
//!
//! Commands compute every artifact in memory first and hand them to
//! [`Staged::commit`], which writes temporary files next to the targets and
//! renames them into place only once all writes succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// CSV bytes for `rows`, header taken from the row type's field order.
pub fn plot_data_bytes<T: Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    if rows.is_empty() {
        return Err(CliError::Usage("plot data needs a non-empty series".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::io("<csv buffer>", e.into_error()))
}

/// Writes `rows` as CSV with a header line.
pub fn emit_plot_data<T: Serialize>(rows: &[T], path: &Path) -> CliResult<()> {
    let bytes = plot_data_bytes(rows)?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn commit(self) -> CliResult<()> {
        let mut temps: Vec<(PathBuf, &Path)> = Vec::new();
        let cleanup = |temps: &[(PathBuf, &Path)]| {
            for (t, _) in temps {
                let _ = fs::remove_file(t);
            }
        };
        for (path, bytes) in &self.files {
            let mut name = path.file_name().unwrap_or_default().to_os_string();
            name.push(".partial");
            let tmp = path.with_file_name(name);
            if let Err(e) = fs::write(&tmp, bytes) {
                cleanup(&temps);
                return Err(CliError::io(&tmp, e));
            }
            temps.push((tmp, path));
        }
        for (i, (tmp, path)) in temps.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, path) {
                cleanup(&temps[i..]);
                return Err(CliError::io(*path, e));
            }
        }
        Ok(())
    }
}
