//! Evaluation manifest: one CSV row per image.
//!
//! Columns: `image_id,gt,pred[,dist,semantic]`. When `pred` is empty the
//! prediction is computed from `dist` and `semantic`. Relative paths are
//! resolved against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::{CliError, CliResult};

#[derive(Debug, Deserialize)]
struct RawRow {
    image_id: String,
    gt: String,
    #[serde(default)]
    pred: Option<String>,
    #[serde(default)]
    dist: Option<String>,
    #[serde(default)]
    semantic: Option<String>,
}

#[derive(Clone, Debug)]
pub enum Prediction {
    File(PathBuf),
    Computed { dist: PathBuf, semantic: PathBuf },
}

#[derive(Clone, Debug)]
pub struct ManifestRow {
    pub image_id: String,
    pub gt: PathBuf,
    pub pred: Prediction,
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty())
}

pub fn read_manifest(path: &Path) -> CliResult<Vec<ManifestRow>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: String| -> PathBuf {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (line, record) in reader.deserialize::<RawRow>().enumerate() {
        let raw = record.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if !seen.insert(raw.image_id.clone()) {
            return Err(CliError::usage(format!(
                "duplicate image_id {:?} in manifest",
                raw.image_id
            )));
        }
        let pred = match (non_empty(raw.pred), non_empty(raw.dist), non_empty(raw.semantic)) {
            (Some(p), _, _) => Prediction::File(resolve(p)),
            (None, Some(dist), Some(semantic)) => Prediction::Computed {
                dist: resolve(dist),
                semantic: resolve(semantic),
            },
            _ => {
                return Err(CliError::usage(format!(
                    "manifest row {} ({}): needs either pred or both dist and semantic",
                    line + 1,
                    raw.image_id
                )))
            }
        };
        rows.push(ManifestRow {
            image_id: raw.image_id,
            gt: resolve(raw.gt),
            pred,
        });
    }
    if rows.is_empty() {
        return Err(CliError::usage(format!("{}: manifest has no rows", path.display())));
    }
    Ok(rows)
}
