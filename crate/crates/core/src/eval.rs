//! Class-discovery evaluation: discovery curves, normalized area under the
//! curve, and the Monte-Carlo random baseline.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampling::PermutationSampler;
use crate::selectors::RankingResult;

pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_T_CAP: usize = 300;

/// Ground-truth class of every item, keyed by item id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelMap {
    labels: BTreeMap<String, String>,
}

impl LabelMap {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut labels = BTreeMap::new();
        for (id, label) in pairs {
            let id = id.into();
            if labels.insert(id.clone(), label.into()).is_some() {
                return Err(Error::InvalidData(format!("item `{id}` labeled twice")));
            }
        }
        if labels.is_empty() {
            return Err(Error::InvalidData("label map is empty".into()));
        }
        Ok(LabelMap { labels })
    }

    /// Reads a CSV with header `id,label`.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::format(path, e.to_string()))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::format(path, e.to_string()))?
            .clone();
        if headers.len() != 2 || headers[0].trim() != "id" || headers[1].trim() != "label" {
            return Err(Error::format(path, "expected header `id,label`"));
        }
        let mut pairs = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::format(path, e.to_string()))?;
            pairs.push((record[0].to_string(), record[1].to_string()));
        }
        Self::from_pairs(pairs).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of distinct classes.
    pub fn classes(&self) -> usize {
        self.labels.values().collect::<HashSet<_>>().len()
    }

    /// Labels in id order, as dense class indices.
    fn class_indices(&self) -> Vec<usize> {
        let mut index = BTreeMap::new();
        self.labels
            .values()
            .map(|l| {
                let next = index.len();
                *index.entry(l.as_str()).or_insert(next)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscoveryCurve {
    /// `counts[i]` = distinct classes among the first `i + 1` selections.
    pub counts: Vec<usize>,
    /// Classes in the data set.
    pub classes: usize,
}

impl DiscoveryCurve {
    pub fn t(&self) -> usize {
        self.counts.len()
    }

    /// Curve for a sequence of class labels, truncated to `t`.
    pub fn from_sequence<T: Eq + std::hash::Hash>(labels: &[T], classes: usize, t: usize) -> Self {
        let mut seen = HashSet::new();
        let counts = labels
            .iter()
            .take(t)
            .map(|l| {
                seen.insert(l);
                seen.len()
            })
            .collect();
        DiscoveryCurve { counts, classes }
    }
}

pub fn discovery_curve(ranking: &RankingResult, labels: &LabelMap, t: usize) -> Result<DiscoveryCurve> {
    if t == 0 || t > ranking.records.len() {
        return Err(Error::InvalidArgument(format!(
            "t = {t} outside 1..={}",
            ranking.records.len()
        )));
    }
    let seq = ranking.records[..t]
        .iter()
        .map(|r| {
            labels
                .get(&r.item_id)
                .ok_or_else(|| Error::MissingLabel(r.item_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscoveryCurve::from_sequence(&seq, labels.classes(), t))
}

/// Area under the discovery curve as a percentage of perfect discovery.
///
/// The perfect curve finds a new class on each of the first `min(t, c)`
/// selections and stays at `c` afterwards, so its area is
/// `Σ_{i ≤ min(t,c)} i + c·max(0, t − c)`.
pub fn nauc(curve: &DiscoveryCurve) -> f64 {
    let t = curve.t();
    let c = curve.classes;
    let m = t.min(c);
    let perfect = m * (m + 1) / 2 + c * t.saturating_sub(c);
    let area: usize = curve.counts.iter().sum();
    area as f64 / perfect as f64 * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineStats {
    pub mean: f64,
    /// Sample standard deviation across trials.
    pub std: f64,
    pub trials: usize,
    pub seed: u64,
    pub t: usize,
}

/// Mean nAUC_t of `trials` uniformly random orderings of the labeled items.
///
/// Trial `i` draws from stream `i` of the seeded generator, so trials can run
/// in parallel and still aggregate identically.
pub fn random_baseline(labels: &LabelMap, t: usize, trials: usize, seed: u64) -> Result<BaselineStats> {
    let n = labels.len();
    if t == 0 || t > n {
        return Err(Error::InvalidArgument(format!("t = {t} outside 1..={n}")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let classes = labels.class_indices();
    let c = labels.classes();
    let scores: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let order = PermutationSampler::with_stream(seed, trial as u64).permutation_prefix(n, t);
            let seq: Vec<usize> = order.iter().map(|&i| classes[i]).collect();
            nauc(&DiscoveryCurve::from_sequence(&seq, c, t))
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / trials as f64;
    let std = if trials > 1 {
        (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(BaselineStats {
        mean,
        std,
        trials,
        seed,
        t,
    })
}

/// Expected number of random selections needed to see every class (rounded
/// up), capped at `cap_t` and at the number of items.
pub fn choose_t(labels: &LabelMap, cap_t: usize, trials: usize, seed: u64) -> usize {
    let n = labels.len();
    let classes = labels.class_indices();
    let c = labels.classes();
    let trials = trials.max(1);
    let covers: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut sampler = PermutationSampler::with_stream(seed, trial as u64);
            let mut seen = vec![false; c];
            let mut found = 0;
            for (step, i) in sampler.draws(n).enumerate() {
                if !seen[classes[i]] {
                    seen[classes[i]] = true;
                    found += 1;
                    if found == c {
                        return step + 1;
                    }
                }
            }
            n
        })
        .collect();
    let expected = covers.iter().sum::<usize>() as f64 / trials as f64;
    (expected.ceil() as usize).min(cap_t).min(n).max(1)
}
