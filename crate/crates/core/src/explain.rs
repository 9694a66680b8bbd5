//! Per-selection explanations: what the model could represent, what it could
//! not, and a mean-aligned copy of the residual for external feature inverters.

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::npy::{self, NpyDtype};
use crate::io::{fmt_f64, write_atomic};
use crate::linalg::norm;
use crate::subspace::{FeatureKind, SubspaceModel};

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub item_id: String,
    pub item_index: usize,
    pub round: usize,
    pub selected: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub residual: Vec<f64>,
    pub shifted_residual: Vec<f64>,
    /// `‖residual‖₂`
    pub score: f64,
}

/// Explains `selected` against `model`, which must be the model *before* it
/// learns the item.
pub fn make_explanation(
    model: &SubspaceModel,
    selected: &[f64],
    item_id: &str,
    item_index: usize,
    round: usize,
) -> Result<Explanation> {
    let reconstruction = model.reconstruct(selected)?;
    let residual: Vec<f64> = selected
        .iter()
        .zip(&reconstruction)
        .map(|(x, r)| x - r)
        .collect();
    let shifted_residual = shift_residual(&residual, &reconstruction)?;
    Ok(Explanation {
        item_id: item_id.to_string(),
        item_index,
        round,
        selected: selected.to_vec(),
        score: norm(&residual),
        reconstruction,
        residual,
        shifted_residual,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Translates the residual so its mean equals the reconstruction's mean.
pub fn shift_residual(residual: &[f64], reconstruction: &[f64]) -> Result<Vec<f64>> {
    check_dim(reconstruction.len(), residual.len())?;
    if residual.is_empty() {
        return Ok(Vec::new());
    }
    let shift = mean(reconstruction) - mean(residual);
    Ok(residual.iter().map(|r| r + shift).collect())
}

/// Renders a pixel-feature explanation as `(reconstruction, residual)` images.
///
/// The reconstruction is clamped to `[0, 255]` and rounded. The residual is
/// mapped to `[0, 255]` by one affine map shared by all channels; a constant
/// residual renders as mid-gray.
pub fn render_pixel_explanation(e: &Explanation, side: u32) -> Result<(RgbImage, RgbImage)> {
    let expected = side as usize * side as usize * 3;
    check_dim(expected, e.selected.len())?;
    check_dim(expected, e.reconstruction.len())?;
    check_dim(expected, e.residual.len())?;

    let recon: Vec<u8> = e
        .reconstruction
        .iter()
        .map(|v| v.clamp(0.0, 255.0).round() as u8)
        .collect();

    let (lo, hi) = e
        .residual
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let resid: Vec<u8> = if hi > lo {
        let range = hi - lo;
        e.residual
            .iter()
            .map(|v| ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    } else {
        vec![128; expected]
    };

    let to_image = |buf: Vec<u8>| {
        RgbImage::from_raw(side, side, buf)
            .ok_or_else(|| Error::Internal("image buffer size mismatch".into()))
    };
    Ok((to_image(recon)?, to_image(resid)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMeta {
    pub id: String,
    pub index: usize,
    pub round: usize,
    pub score: f64,
    pub feature_kind: FeatureKind,
}

/// Paths written by [`export_explanation`].
#[derive(Debug, Clone)]
pub struct ExportedFiles {
    pub reconstruction: PathBuf,
    pub residual: PathBuf,
    pub shifted_residual: PathBuf,
    pub metadata: PathBuf,
}

pub fn export_paths(dir: &Path, round: usize) -> ExportedFiles {
    ExportedFiles {
        reconstruction: dir.join(format!("sel_{round}_recon.npy")),
        residual: dir.join(format!("sel_{round}_resid.npy")),
        shifted_residual: dir.join(format!("sel_{round}_resid_shifted.npy")),
        metadata: dir.join(format!("sel_{round}.json")),
    }
}

/// Writes the reconstruction, residual and shifted residual as `(1, d)`
/// float32 arrays plus a JSON metadata record.
pub fn export_explanation(e: &Explanation, dir: &Path, kind: FeatureKind) -> Result<ExportedFiles> {
    std::fs::create_dir_all(dir).map_err(|err| Error::io(dir, err))?;
    let paths = export_paths(dir, e.round);
    let d = e.selected.len();
    for (path, values) in [
        (&paths.reconstruction, &e.reconstruction),
        (&paths.residual, &e.residual),
        (&paths.shifted_residual, &e.shifted_residual),
    ] {
        npy::write_array(path, 1, d, values, NpyDtype::F32)?;
    }
    write_atomic(&paths.metadata, metadata_json(e, kind).as_bytes())?;
    Ok(paths)
}

fn metadata_json(e: &Explanation, kind: FeatureKind) -> String {
    format!(
        "{{\"id\":{},\"index\":{},\"round\":{},\"score\":{},\"feature_kind\":\"{}\"}}\n",
        serde_json::Value::from(e.item_id.as_str()),
        e.item_index,
        e.round,
        fmt_f64(e.score),
        kind
    )
}

pub fn read_metadata(path: &Path) -> Result<ExplanationMeta> {
    let text = std::fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
    serde_json::from_str(&text).map_err(|err| Error::format(path, err.to_string()))
}
