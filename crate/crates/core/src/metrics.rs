//! Point-wise detection metrics and the ratio of identified clusters.
//!
//! Zero denominators yield 0 for every metric.

use serde::{Deserialize, Serialize};

use crate::data::LabelVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// Matthews correlation coefficient.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, tn, fn_) = (self.tp as f64, self.fp as f64, self.tn as f64, self.fn_ as f64);
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / denom.sqrt()
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(pred: &LabelVector, truth: &LabelVector) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

/// A maximal run of ground-truth anomalies, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyCluster {
    pub start: usize,
    pub end: usize,
    pub length: usize,
}

impl AnomalyCluster {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(end >= start);
        Self {
            start,
            end,
            length: end - start + 1,
        }
    }
}

/// Maximal runs of ones no shorter than `min_length`, in time order.
pub fn extract_clusters(truth: &LabelVector, min_length: usize) -> Vec<AnomalyCluster> {
    let labels = truth.as_slice();
    let mut out = Vec::new();
    let mut t = 0;
    while t < labels.len() {
        if labels[t] == 1 {
            let start = t;
            while t < labels.len() && labels[t] == 1 {
                t += 1;
            }
            let c = AnomalyCluster::new(start, t - 1);
            if c.length >= min_length.max(1) {
                out.push(c);
            }
        } else {
            t += 1;
        }
    }
    out
}

/// Fraction of clusters containing at least one predicted positive.
pub fn ric(pred: &LabelVector, clusters: &[AnomalyCluster]) -> Result<f64> {
    if clusters.is_empty() {
        return Err(Error::NoClusters);
    }
    let p = pred.as_slice();
    if let Some(c) = clusters.iter().find(|c| c.end >= p.len()) {
        return Err(Error::Shape(format!(
            "cluster {}..={} beyond prediction length {}",
            c.start,
            c.end,
            p.len()
        )));
    }
    let hit = clusters
        .iter()
        .filter(|c| p[c.start..=c.end].contains(&1))
        .count();
    Ok(hit as f64 / clusters.len() as f64)
}

/// All evaluation quantities for one prediction/truth pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    /// `None` when the truth holds no cluster of the requested length.
    pub ric: Option<f64>,
    pub clusters: Vec<AnomalyCluster>,
    pub counts: ConfusionCounts,
    pub n_flags: u64,
}

/// Computes the metrics block; `pred` and `truth` must be aligned.
pub fn evaluate(pred: &LabelVector, truth: &LabelVector, min_cluster_len: usize) -> Result<MetricsBlock> {
    let counts = confusion(pred, truth)?;
    let clusters = extract_clusters(truth, min_cluster_len);
    let ric = if clusters.is_empty() {
        None
    } else {
        Some(ric(pred, &clusters)?)
    };
    Ok(MetricsBlock {
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        mcc: counts.mcc(),
        ric,
        clusters,
        counts,
        n_flags: counts.tp + counts.fp,
    })
}
