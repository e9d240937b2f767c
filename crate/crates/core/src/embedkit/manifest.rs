use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_embeddings, EmbeddingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Image,
    Caption,
    FrameSequence,
}

/// One manifest entry pointing at a block of rows inside an embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub kind: ItemKind,
    /// Embedding file, relative to the embeddings directory.
    pub file: PathBuf,
    /// Half-open `[start, end)` row range.
    pub row_range: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refs: Option<Vec<String>>,
    /// For candidate captions: id of the image or video being described.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl ItemRecord {
    pub fn row_count(&self) -> usize {
        self.row_range[1].saturating_sub(self.row_range[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub corpus_id: String,
    pub items: Vec<ItemRecord>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        m.check_structure()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Checks invariants that do not need the embedding files.
    pub fn check_structure(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::invalid(format!("duplicate item id {:?}", item.id)));
            }
            let [start, end] = item.row_range;
            if start > end {
                return Err(Error::invalid(format!("item {:?} has inverted row range", item.id)));
            }
            if let Some(tokens) = &item.tokens {
                if item.kind != ItemKind::Caption {
                    return Err(Error::invalid(format!("item {:?} has tokens but is not a caption", item.id)));
                }
                if tokens.len() != item.row_count() {
                    return Err(Error::invalid(format!(
                        "caption {:?} has {} tokens but {} rows",
                        item.id,
                        tokens.len(),
                        item.row_count()
                    )));
                }
            }
        }
        for item in &self.items {
            for r in item.refs.iter().flatten() {
                if !seen.contains(r.as_str()) {
                    return Err(Error::invalid(format!("item {:?} references unknown id {r:?}", item.id)));
                }
            }
            if let Some(t) = &item.target {
                if !seen.contains(t.as_str()) {
                    return Err(Error::invalid(format!("item {:?} targets unknown id {t:?}", item.id)));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ItemRecord> {
        self.items.iter().find(|i| i.id == id)
    }
}

/// A manifest with its embedding files loaded and validated.
#[derive(Debug, Clone)]
pub struct Corpus {
    manifest: Manifest,
    index: HashMap<String, usize>,
    files: BTreeMap<PathBuf, EmbeddingMatrix>,
}

impl Corpus {
    /// Loads every referenced file under `embeddings_dir` and checks that each
    /// row range fits inside its file.
    pub fn open(manifest: Manifest, embeddings_dir: impl AsRef<Path>) -> Result<Self> {
        manifest.check_structure()?;
        let dir = embeddings_dir.as_ref();
        let mut files = BTreeMap::new();
        for item in &manifest.items {
            if !files.contains_key(&item.file) {
                let m = load_embeddings(dir.join(&item.file))?;
                files.insert(item.file.clone(), m);
            }
            let m = &files[&item.file];
            if item.row_range[1] > m.rows() {
                return Err(Error::invalid(format!(
                    "item {:?} row range {:?} exceeds {} rows in {}",
                    item.id,
                    item.row_range,
                    m.rows(),
                    item.file.display()
                )));
            }
        }
        let index = manifest
            .items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.id.clone(), i))
            .collect();
        Ok(Corpus { manifest, index, files })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn item(&self, id: &str) -> Result<&ItemRecord> {
        self.index
            .get(id)
            .map(|&i| &self.manifest.items[i])
            .ok_or_else(|| Error::invalid(format!("unknown item id {id:?}")))
    }

    /// The embedding rows belonging to `id`.
    pub fn rows(&self, id: &str) -> Result<EmbeddingMatrix> {
        let item = self.item(id)?;
        let [start, end] = item.row_range;
        self.files[&item.file].slice_rows(start, end)
    }

    /// Single-vector view of an item: the only row of an image, or the last
    /// (end-marker) row of a caption.
    pub fn global_vector(&self, id: &str) -> Result<Vec<f64>> {
        let rows = self.rows(id)?;
        if rows.is_empty() {
            return Err(Error::invalid(format!("item {id:?} has no rows")));
        }
        Ok(rows.row(rows.rows() - 1).to_vec())
    }
}
