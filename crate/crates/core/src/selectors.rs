//! Ranking strategies: DEMUD's greedy select-then-learn loop, the static SVD
//! baseline, and a seeded random baseline.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{make_explanation, Explanation};
use crate::sampling::PermutationSampler;
use crate::subspace::{FeatureMatrix, SubspaceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Demud,
    Svd,
    Random,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Demud => "demud",
            Method::Svd => "svd",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "demud" => Ok(Method::Demud),
            "svd" => Ok(Method::Svd),
            "random" => Ok(Method::Random),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    /// 1-based.
    pub round: usize,
    pub item_id: String,
    pub item_index: usize,
    /// Reconstruction error at selection time; `None` for random selections.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub method: Method,
    pub records: Vec<SelectionRecord>,
    pub cap: Option<usize>,
    pub seed: Option<u64>,
    pub n_select: usize,
}

fn check_n_select(x: &FeatureMatrix, n_select: usize) -> Result<()> {
    if n_select == 0 || n_select > x.n_items() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {n_select} of {} items",
            x.n_items()
        )));
    }
    Ok(())
}

/// First index holding the maximum score among `candidates`.
fn argmax(candidates: &[usize], scores: &[f64]) -> usize {
    let mut best = candidates[0];
    let mut best_score = scores[0];
    for (&i, &s) in candidates.iter().zip(scores).skip(1) {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Step-wise DEMUD selection.
///
/// Round 1 picks the item with the largest reconstruction error under a batch
/// SVD of the whole data set, then restarts the model from that item alone.
/// Every later round explains and selects the worst-reconstructed unselected
/// item under the current model, then folds it into the model.
pub struct DemudRun<'a> {
    data: &'a FeatureMatrix,
    cap: usize,
    model: Option<SubspaceModel>,
    remaining: Vec<usize>,
    round: usize,
}

impl<'a> DemudRun<'a> {
    pub fn new(data: &'a FeatureMatrix, cap: usize) -> Self {
        DemudRun {
            data,
            cap,
            model: None,
            remaining: (0..data.n_items()).collect(),
            round: 0,
        }
    }

    /// The model that will score the next round, if round 1 has run.
    pub fn model(&self) -> Option<&SubspaceModel> {
        self.model.as_ref()
    }

    /// Scores of the currently unselected items under `model`, in index order.
    fn candidate_scores(&self, model: &SubspaceModel) -> Vec<f64> {
        self.remaining
            .par_iter()
            .map(|&i| model.score_unchecked(self.data.row(i)))
            .collect()
    }

    /// Runs one round. Returns `None` once every item has been selected.
    pub fn step(&mut self) -> Result<Option<(SelectionRecord, Explanation)>> {
        if self.remaining.is_empty() {
            return Ok(None);
        }
        self.round += 1;
        let (pick, explanation, next_model) = match self.model.take() {
            None => {
                let batch = SubspaceModel::fit_batch(self.data, self.cap)?;
                let scores = self.candidate_scores(&batch);
                let pick = argmax(&self.remaining, &scores);
                let row = self.data.row(pick);
                let e = make_explanation(&batch, row, self.data.id(pick), pick, self.round)?;
                (pick, e, SubspaceModel::init_singleton(row, self.cap)?)
            }
            Some(model) => {
                let scores = self.candidate_scores(&model);
                let pick = argmax(&self.remaining, &scores);
                let row = self.data.row(pick);
                let e = make_explanation(&model, row, self.data.id(pick), pick, self.round)?;
                let next = model.update(row)?;
                (pick, e, next)
            }
        };
        self.model = Some(next_model);
        self.remaining.retain(|&i| i != pick);
        let record = SelectionRecord {
            round: self.round,
            item_id: self.data.id(pick).to_string(),
            item_index: pick,
            score: Some(explanation.score),
        };
        Ok(Some((record, explanation)))
    }
}

/// DEMUD ranking of `n_select` items, with the explanation of each selection
/// computed against the model as it stood before that item was learned.
pub fn demud_rank(
    x: &FeatureMatrix,
    cap: usize,
    n_select: usize,
) -> Result<(RankingResult, Vec<Explanation>)> {
    check_n_select(x, n_select)?;
    let mut run = DemudRun::new(x, cap);
    let mut records = Vec::with_capacity(n_select);
    let mut explanations = Vec::with_capacity(n_select);
    while records.len() < n_select {
        let (record, e) = run
            .step()?
            .ok_or_else(|| Error::Internal("ran out of items".into()))?;
        records.push(record);
        explanations.push(e);
    }
    Ok((
        RankingResult {
            method: Method::Demud,
            records,
            cap: Some(cap),
            seed: None,
            n_select,
        },
        explanations,
    ))
}

/// Ranks by reconstruction error under one batch model of the whole data set.
pub fn svd_rank(x: &FeatureMatrix, cap: usize, n_select: usize) -> Result<RankingResult> {
    Ok(svd_rank_with_model(x, cap, n_select)?.0)
}

/// [`svd_rank`] plus an explanation of every selection against the batch model.
pub fn svd_rank_explained(
    x: &FeatureMatrix,
    cap: usize,
    n_select: usize,
) -> Result<(RankingResult, Vec<Explanation>)> {
    let (ranking, model) = svd_rank_with_model(x, cap, n_select)?;
    let explanations = ranking
        .records
        .iter()
        .map(|r| make_explanation(&model, x.row(r.item_index), &r.item_id, r.item_index, r.round))
        .collect::<Result<Vec<_>>>()?;
    Ok((ranking, explanations))
}

fn svd_rank_with_model(
    x: &FeatureMatrix,
    cap: usize,
    n_select: usize,
) -> Result<(RankingResult, SubspaceModel)> {
    check_n_select(x, n_select)?;
    let model = SubspaceModel::fit_batch(x, cap)?;
    let scores = model.score_all(x)?;
    let mut order: Vec<usize> = (0..x.n_items()).collect();
    // stable sort keeps lower indices first among equal scores
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let records = order
        .into_iter()
        .take(n_select)
        .enumerate()
        .map(|(i, idx)| SelectionRecord {
            round: i + 1,
            item_id: x.id(idx).to_string(),
            item_index: idx,
            score: Some(scores[idx]),
        })
        .collect();
    Ok((
        RankingResult {
            method: Method::Svd,
            records,
            cap: Some(cap),
            seed: None,
            n_select,
        },
        model,
    ))
}

/// A uniform random permutation prefix; no scores.
pub fn random_rank(x: &FeatureMatrix, seed: u64, n_select: usize) -> Result<RankingResult> {
    check_n_select(x, n_select)?;
    let picks = PermutationSampler::new(seed).permutation_prefix(x.n_items(), n_select);
    let records = picks
        .into_iter()
        .enumerate()
        .map(|(i, idx)| SelectionRecord {
            round: i + 1,
            item_id: x.id(idx).to_string(),
            item_index: idx,
            score: None,
        })
        .collect();
    Ok(RankingResult {
        method: Method::Random,
        records,
        cap: None,
        seed: Some(seed),
        n_select,
    })
}
