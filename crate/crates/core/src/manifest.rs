//! JSON-lines run manifest: one header record, then one record per selection.
//!
//! Lines are rendered by hand so key order is fixed and every float carries
//! 17 significant digits; identical runs give byte-identical files.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_atomic};
use crate::selectors::{Method, RankingResult, SelectionRecord};
use crate::subspace::FeatureKind;

pub const TOOL_VERSION: &str = concat!("demud ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestHeader {
    pub tool_version: String,
    pub method: Method,
    /// Component cap used for DEMUD/SVD.
    pub cap: Option<usize>,
    pub seed: Option<u64>,
    pub t: Option<usize>,
    pub n_select: usize,
    pub n_items: usize,
    pub dim: usize,
    pub feature_digest: String,
    pub feature_kind: FeatureKind,
    pub generator: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<SelectionRecord>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "null".to_string(), |v| v.to_string())
}

fn json_str(s: &str) -> String {
    Value::from(s).to_string()
}

impl Manifest {
    pub fn ranking(&self) -> RankingResult {
        RankingResult {
            method: self.header.method,
            records: self.records.clone(),
            cap: self.header.cap,
            seed: self.header.seed,
            n_select: self.header.n_select,
        }
    }

    pub fn render(&self) -> String {
        let h = &self.header;
        let mut out = format!(
            "{{\"type\":\"header\",\"tool_version\":{},\"method\":\"{}\",\"k\":{},\"seed\":{},\"t\":{},\"n\":{},\"n_items\":{},\"dim\":{},\"feature_digest\":{},\"feature_kind\":\"{}\",\"generator\":{}}}\n",
            json_str(&h.tool_version),
            h.method,
            opt(h.cap),
            opt(h.seed),
            opt(h.t),
            h.n_select,
            h.n_items,
            h.dim,
            json_str(&h.feature_digest),
            h.feature_kind,
            h.generator.as_deref().map_or_else(|| "null".to_string(), json_str),
        );
        for r in &self.records {
            out.push_str(&format!(
                "{{\"type\":\"selection\",\"round\":{},\"id\":{},\"index\":{},\"score\":{}}}\n",
                r.round,
                json_str(&r.item_id),
                r.item_index,
                r.score.map_or_else(|| "null".to_string(), fmt_f64),
            ));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|reason| Error::format(path, reason))
    }

    pub fn parse(text: &str) -> std::result::Result<Manifest, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines.next().ok_or("empty manifest")?;
        let h: Value = serde_json::from_str(first).map_err(|e| format!("line 1: {e}"))?;
        if h["type"] != "header" {
            return Err("first record is not a header".into());
        }
        let get_str = |v: &Value, key: &str| {
            v[key]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("header field `{key}` missing"))
        };
        let get_usize = |v: &Value, key: &str| {
            v[key]
                .as_u64()
                .map(|n| n as usize)
                .ok_or_else(|| format!("field `{key}` missing"))
        };
        let header = ManifestHeader {
            tool_version: get_str(&h, "tool_version")?,
            method: get_str(&h, "method")?.parse().map_err(|e: Error| e.to_string())?,
            cap: h["k"].as_u64().map(|v| v as usize),
            seed: h["seed"].as_u64(),
            t: h["t"].as_u64().map(|v| v as usize),
            n_select: get_usize(&h, "n")?,
            n_items: get_usize(&h, "n_items")?,
            dim: get_usize(&h, "dim")?,
            feature_digest: get_str(&h, "feature_digest")?,
            feature_kind: get_str(&h, "feature_kind")?.parse().map_err(|e: Error| e.to_string())?,
            generator: h["generator"].as_str().map(str::to_string),
        };

        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let v: Value = serde_json::from_str(line).map_err(|e| format!("line {lineno}: {e}"))?;
            if v["type"] != "selection" {
                return Err(format!("line {lineno}: expected a selection record"));
            }
            let round = get_usize(&v, "round").map_err(|e| format!("line {lineno}: {e}"))?;
            if round != records.len() + 1 {
                return Err(format!("line {lineno}: round {round} out of sequence"));
            }
            let score = match &v["score"] {
                Value::Null => None,
                s => Some(s.as_f64().ok_or_else(|| format!("line {lineno}: bad score"))?),
            };
            records.push(SelectionRecord {
                round,
                item_id: v["id"]
                    .as_str()
                    .ok_or_else(|| format!("line {lineno}: missing id"))?
                    .to_string(),
                item_index: get_usize(&v, "index").map_err(|e| format!("line {lineno}: {e}"))?,
                score,
            });
        }
        Ok(Manifest { header, records })
    }
}
