use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What produced the feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum FeatureKind {
    #[serde(rename = "pixel")]
    Pixel,
    #[serde(rename = "bow")]
    Bow,
    #[serde(rename = "cnn-fc6")]
    CnnFc6,
    #[serde(rename = "cnn-fc7")]
    CnnFc7,
    #[serde(rename = "cnn-fc8")]
    CnnFc8,
    #[default]
    #[serde(rename = "generic")]
    Generic,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Pixel => "pixel",
            FeatureKind::Bow => "bow",
            FeatureKind::CnnFc6 => "cnn-fc6",
            FeatureKind::CnnFc7 => "cnn-fc7",
            FeatureKind::CnnFc8 => "cnn-fc8",
            FeatureKind::Generic => "generic",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pixel" => FeatureKind::Pixel,
            "bow" => FeatureKind::Bow,
            "cnn-fc6" => FeatureKind::CnnFc6,
            "cnn-fc7" => FeatureKind::CnnFc7,
            "cnn-fc8" => FeatureKind::CnnFc8,
            "generic" => FeatureKind::Generic,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown feature kind `{other}`"
                )))
            }
        })
    }
}

/// The data set: `n` items by `d` features, row-major, each row tagged with a unique id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    kind: FeatureKind,
}

impl FeatureMatrix {
    /// Validates shape, finiteness and id uniqueness.
    pub fn new(ids: Vec<String>, data: Vec<f64>, cols: usize, kind: FeatureKind) -> Result<Self> {
        let rows = ids.len();
        if rows == 0 {
            return Err(Error::InvalidData("feature matrix has no rows".into()));
        }
        if cols == 0 {
            return Err(Error::InvalidData("feature matrix has no columns".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidData(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        let mut seen = HashSet::with_capacity(rows);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidData(format!("duplicate item id `{id}`")));
            }
        }
        Ok(FeatureMatrix {
            ids,
            data,
            rows,
            cols,
            kind,
        })
    }

    /// Builds a matrix from row vectors with ids `"0"`, `"1"`, ...
    pub fn from_rows(rows: &[Vec<f64>], kind: FeatureKind) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                actual: bad.len(),
            });
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(ids, rows.concat(), cols, kind)
    }

    pub fn n_items(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// Row-major payload.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn with_kind(mut self, kind: FeatureKind) -> Self {
        self.kind = kind;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_contents() {
        let ids = vec!["a".to_string(), "b".to_string()];
        assert!(FeatureMatrix::new(ids.clone(), vec![1.0, f64::NAN], 1, FeatureKind::Generic).is_err());
        assert!(FeatureMatrix::new(ids.clone(), vec![1.0], 1, FeatureKind::Generic).is_err());
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(FeatureMatrix::new(dup, vec![1.0, 2.0], 1, FeatureKind::Generic).is_err());
        assert!(FeatureMatrix::new(vec![], vec![], 1, FeatureKind::Generic).is_err());
        let m = FeatureMatrix::new(ids, vec![1.0, 2.0, 3.0, 4.0], 2, FeatureKind::Bow).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.kind(), FeatureKind::Bow);
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for kind in [
            FeatureKind::Pixel,
            FeatureKind::Bow,
            FeatureKind::CnnFc6,
            FeatureKind::CnnFc7,
            FeatureKind::CnnFc8,
            FeatureKind::Generic,
        ] {
            assert_eq!(kind.as_str().parse::<FeatureKind>().unwrap(), kind);
        }
        assert!("fc9".parse::<FeatureKind>().is_err());
    }
}
