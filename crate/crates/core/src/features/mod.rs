//! Feature ingestion and the two built-in featurizers.

pub mod bow;
pub mod npy;
pub mod pixel;

use std::path::{Path, PathBuf};

pub use bow::{bow_histogram, build_codebook, BowCodebook, DescriptorSet};
pub use npy::NpyDtype;
pub use pixel::{pixel_features, ImageTensor, DEFAULT_SIDE};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::subspace::{FeatureKind, FeatureMatrix};

/// `features.npy` → `features.ids.txt`
pub fn ids_sidecar(npy_path: &Path) -> PathBuf {
    let stem = npy_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    npy_path.with_file_name(format!("{stem}.ids.txt"))
}

pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut text = String::with_capacity(ids.iter().map(|s| s.len() + 1).sum());
    for id in ids {
        if id.contains('\n') || id.contains('\r') {
            return Err(Error::InvalidData(format!("item id {id:?} contains a line break")));
        }
        text.push_str(id);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Loads an `(n, d)` NPY array with its id sidecar.
///
/// `ids` defaults to the sidecar next to `path`; when that file does not
/// exist, rows are named by their index.
pub fn load_npy(path: &Path, ids: Option<&Path>, kind: FeatureKind) -> Result<FeatureMatrix> {
    let array = npy::read_array(path)?;
    let default_sidecar = ids_sidecar(path);
    let ids_path = ids.unwrap_or(&default_sidecar);
    let ids = if ids.is_some() || ids_path.exists() {
        let ids = read_ids(ids_path)?;
        if ids.len() != array.rows {
            return Err(Error::format(
                ids_path,
                format!("{} ids for {} rows", ids.len(), array.rows),
            ));
        }
        ids
    } else {
        log::warn!("no id sidecar for {}; using row numbers", path.display());
        (0..array.rows).map(|i| i.to_string()).collect()
    };
    FeatureMatrix::new(ids, array.data, array.cols, kind)
}

/// Writes the matrix and its id sidecar (`<stem>.ids.txt`).
pub fn save_npy(m: &FeatureMatrix, path: &Path, dtype: NpyDtype) -> Result<()> {
    npy::write_array(path, m.n_items(), m.dim(), m.as_slice(), dtype)?;
    write_ids(&ids_sidecar(path), m.ids())
}

/// Reads a CSV whose first column is `id` and whose remaining columns are numeric.
pub fn load_csv(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    if headers.get(0).map(str::trim) != Some("id") {
        return Err(Error::format(path, "first column must be `id`"));
    }
    let cols = headers.len() - 1;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        ids.push(record[0].to_string());
        for (col, cell) in record.iter().enumerate().skip(1) {
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::format(
                    path,
                    format!("row {}, column {}: `{cell}` is not a number", line + 1, col + 1),
                )
            })?;
            data.push(value);
        }
    }
    if ids.is_empty() {
        return Err(Error::format(path, "no data rows"));
    }
    FeatureMatrix::new(ids, data, cols, FeatureKind::Generic)
}
