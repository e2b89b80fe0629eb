//! Moving-window location filters.
//!
//! Windows are trailing and "valid": output `j` summarizes inputs
//! `j ..= j + h - 1`, so a series of length `T` shrinks to `T - (h - 1)`
//! and output `j` corresponds to original timestamp `j + h - 1`.

use serde::{Deserialize, Serialize};

use crate::data::{LabelVector, SeriesMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Mean,
    Median,
}

impl FilterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Mean => "mean",
            FilterKind::Median => "median",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(FilterKind::Mean),
            "median" => Ok(FilterKind::Median),
            other => Err(Error::InvalidParameter(format!("unknown filter kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothConfig {
    pub h: usize,
    pub kind: FilterKind,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        Self {
            h: 1,
            kind: FilterKind::Median,
        }
    }
}

impl SmoothConfig {
    pub fn new(h: usize, kind: FilterKind) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidParameter("window length h must be >= 1".into()));
        }
        Ok(Self { h, kind })
    }

    /// Timestamp of the first smoothed output within its segment.
    pub fn offset(&self) -> usize {
        self.h - 1
    }
}

/// Smooths one series.
pub fn smooth_series(x: &[f64], cfg: SmoothConfig) -> Result<Vec<f64>> {
    let h = cfg.h;
    if h == 0 {
        return Err(Error::InvalidParameter("window length h must be >= 1".into()));
    }
    if x.len() < h {
        return Err(Error::WindowTooLong { h, len: x.len() });
    }
    if h == 1 {
        return Ok(x.to_vec());
    }
    Ok(match cfg.kind {
        FilterKind::Mean => x.windows(h).map(|w| w.iter().sum::<f64>() / h as f64).collect(),
        FilterKind::Median => rolling_median(x, h),
    })
}

/// Sliding median keeping a sorted copy of the current window.
fn rolling_median(x: &[f64], h: usize) -> Vec<f64> {
    let mut window: Vec<f64> = x[..h].to_vec();
    window.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(x.len() - h + 1);
    out.push(sorted_median(&window));
    for j in 1..=x.len() - h {
        let leaving = x[j - 1];
        let pos = window
            .binary_search_by(|v| v.total_cmp(&leaving))
            .expect("leaving value is in the window");
        window.remove(pos);
        let entering = x[j + h - 1];
        let pos = window.partition_point(|v| v.total_cmp(&entering).is_lt());
        window.insert(pos, entering);
        out.push(sorted_median(&window));
    }
    out
}

fn sorted_median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Smooths every variable of one segment independently. The result records
/// `time_offset = h - 1`.
pub fn smooth_matrix(x: &SeriesMatrix, cfg: SmoothConfig) -> Result<SeriesMatrix> {
    if cfg.h == 1 {
        return Ok(x.clone());
    }
    let columns = (0..x.n_vars())
        .map(|v| smooth_series(&x.variable(v), cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut out = SeriesMatrix::from_columns(x.names().to_vec(), &columns)?;
    if let Some(p) = x.period_seconds() {
        out = out.with_period(p)?;
    }
    Ok(out.with_time_offset(x.time_offset() + cfg.offset()))
}

/// Maps labels of an unsmoothed segment onto the smoothed timeline: position
/// `j` takes the label of original position `j + h - 1` (the window end).
pub fn align_labels(labels: &LabelVector, h: usize) -> Result<LabelVector> {
    if h == 0 {
        return Err(Error::InvalidParameter("window length h must be >= 1".into()));
    }
    if labels.len() < h {
        return Err(Error::WindowTooLong { h, len: labels.len() });
    }
    LabelVector::new(labels.as_slice()[h - 1..].to_vec(), labels.aligned_to())
}
