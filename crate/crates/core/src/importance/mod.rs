//! Explaining detected anomalies: which variables separate flagged
//! observations from anomaly-free ones.
//!
//! A supervised dataset is assembled from a window of test observations
//! (targets are the detection flags) plus optional anomaly-free training
//! rows. Two rankings are available: mean Gini-impurity decrease of a
//! random forest, and the relative contribution to deviance explained of a
//! logistic regression.

mod forest;
mod logistic;

pub use forest::{gini_importance, train_forest, Forest, ForestParams, Node, Tree};
pub use logistic::{fit_logistic, rcde, LogisticFit, DEFAULT_RIDGE};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{LabelVector, SeriesMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    TestWindow,
    TrainingTail,
}

/// Rows are observations, columns the original (unpruned) variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Step5Dataset {
    names: Vec<String>,
    features: Vec<f64>,
    targets: Vec<u8>,
    provenance: Vec<Provenance>,
}

impl Step5Dataset {
    pub fn new(
        names: Vec<String>,
        features: Vec<f64>,
        targets: Vec<u8>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        let p = names.len();
        if p == 0 || features.len() != p * targets.len() || provenance.len() != targets.len() {
            return Err(Error::Shape("step-5 dataset dimensions disagree".into()));
        }
        if targets.len() < 2 {
            return Err(Error::Shape("step-5 dataset needs at least two rows".into()));
        }
        if targets.iter().any(|&t| t > 1) {
            return Err(Error::InvalidParameter("targets must be 0 or 1".into()));
        }
        let ones = targets.iter().filter(|&&t| t == 1).count();
        if ones == 0 || ones == targets.len() {
            return Err(Error::SingleClass);
        }
        Ok(Self {
            names,
            features,
            targets,
            provenance,
        })
    }

    /// Dataset with every row tagged as coming from the test window.
    pub fn from_rows(names: Vec<String>, features: Vec<f64>, targets: Vec<u8>) -> Result<Self> {
        let n = targets.len();
        Self::new(names, features, targets, vec![Provenance::TestWindow; n])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.features[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features() + j]
    }

    pub fn targets(&self) -> &[u8] {
        &self.targets
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Copy without feature `j`; `None` when it is the only feature.
    pub(crate) fn without_feature(&self, j: usize) -> Option<Self> {
        let p = self.n_features();
        if p == 1 {
            return None;
        }
        let names = self
            .names
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, n)| n.clone())
            .collect();
        let features = self
            .features
            .chunks_exact(p)
            .flat_map(|r| r.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, v)| *v))
            .collect();
        Some(Self {
            names,
            features,
            targets: self.targets.clone(),
            provenance: self.provenance.clone(),
        })
    }
}

/// Test rows in `window` (targets are the flags) followed by the last
/// `n_extra` rows of `train_tail` (targets 0).
pub fn assemble_step5_dataset(
    test: &SeriesMatrix,
    flags: &LabelVector,
    window: Range<usize>,
    train_tail: &SeriesMatrix,
    n_extra: usize,
) -> Result<Step5Dataset> {
    if flags.len() != test.len() {
        return Err(Error::DimensionMismatch {
            expected: test.len(),
            got: flags.len(),
        });
    }
    if window.start >= window.end || window.end > test.len() {
        return Err(Error::InvalidParameter(format!(
            "window {window:?} outside test range 0..{}",
            test.len()
        )));
    }
    if n_extra > train_tail.len() {
        return Err(Error::InvalidParameter(format!(
            "{n_extra} extra rows requested from a training tail of {}",
            train_tail.len()
        )));
    }
    if test.names() != train_tail.names() {
        return Err(Error::Shape("test and training variables differ".into()));
    }
    let p = test.n_vars();
    let rows = window.len() + n_extra;
    let mut features = Vec::with_capacity(rows * p);
    let mut targets = Vec::with_capacity(rows);
    let mut provenance = Vec::with_capacity(rows);
    for t in window {
        features.extend_from_slice(test.observation(t));
        targets.push(flags.as_slice()[t]);
        provenance.push(Provenance::TestWindow);
    }
    for t in train_tail.len() - n_extra..train_tail.len() {
        features.extend_from_slice(train_tail.observation(t));
        targets.push(0);
        provenance.push(Provenance::TrainingTail);
    }
    Step5Dataset::new(test.names().to_vec(), features, targets, provenance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImportanceMethod {
    #[serde(rename = "RF-GINI")]
    RfGini,
    #[serde(rename = "LR-RCDE")]
    LrRcde,
}

impl ImportanceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ImportanceMethod::RfGini => "RF-GINI",
            ImportanceMethod::LrRcde => "LR-RCDE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedVariable {
    pub name: String,
    pub index: usize,
    pub score: f64,
}

/// Variables in decreasing order of importance; ties keep index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    pub ranking: Vec<RankedVariable>,
}

impl ImportanceReport {
    pub fn from_scores(method: ImportanceMethod, names: &[String], scores: &[f64]) -> Self {
        let mut ranking: Vec<RankedVariable> = names
            .iter()
            .zip(scores)
            .enumerate()
            .map(|(index, (name, &score))| RankedVariable {
                name: name.clone(),
                index,
                score,
            })
            .collect();
        ranking.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
        Self { method, ranking }
    }

    pub fn top(&self, v: usize) -> &[RankedVariable] {
        &self.ranking[..v.min(self.ranking.len())]
    }

    pub fn score_of(&self, name: &str) -> Option<f64> {
        self.ranking.iter().find(|r| r.name == name).map(|r| r.score)
    }

    /// 1-based rank of a variable.
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.ranking.iter().position(|r| r.name == name).map(|p| p + 1)
    }
}
