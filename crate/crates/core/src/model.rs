//! The fitted detector and its versioned text serialization.
//!
//! File layout: a `sand-model <version>` header, one `key: value` line per
//! field, and a closing `end` line. Reals are written with 17 significant
//! digits so a reload reproduces every bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{LabelVector, SeriesMatrix};
use crate::error::{Error, Result};
use crate::scoring::ScatterFit;
use crate::smoothing::{smooth_matrix, FilterKind, SmoothConfig};
use crate::threshold::{flag, GpdFit, ThresholdKind};

pub const MODEL_VERSION: u32 = 1;
const MAGIC: &str = "sand-model";

#[derive(Debug, Clone, PartialEq)]
pub struct SandModel {
    /// Every variable of the training data, in input order.
    pub names: Vec<String>,
    /// Indices into `names` of the variables kept after pruning.
    pub retained: Vec<usize>,
    pub smoothing: SmoothConfig,
    pub fit: ScatterFit,
    pub threshold_kind: ThresholdKind,
    pub k: f64,
    pub gpd: Option<GpdFit>,
    /// `(variable index, VIF at removal)` in removal order.
    pub vif_trace: Vec<(usize, f64)>,
}

/// Scores and flags for one segment; index `i` belongs to original row
/// `i + time_offset` of that segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub scores: Vec<f64>,
    pub flags: LabelVector,
    pub time_offset: usize,
}

impl DetectionResult {
    /// Flagged runs as inclusive `(start, end)` pairs on the original
    /// timeline of the segment.
    pub fn intervals(&self) -> Vec<(usize, usize)> {
        let f = self.flags.as_slice();
        let mut out = Vec::new();
        let mut t = 0;
        while t < f.len() {
            if f[t] == 1 {
                let s = t;
                while t < f.len() && f[t] == 1 {
                    t += 1;
                }
                out.push((s + self.time_offset, t - 1 + self.time_offset));
            } else {
                t += 1;
            }
        }
        out
    }
}

impl SandModel {
    pub fn new(
        names: Vec<String>,
        retained: Vec<usize>,
        smoothing: SmoothConfig,
        fit: ScatterFit,
        threshold_kind: ThresholdKind,
        k: f64,
        gpd: Option<GpdFit>,
        vif_trace: Vec<(usize, f64)>,
    ) -> Result<Self> {
        let model = Self {
            names,
            retained,
            smoothing,
            fit,
            threshold_kind,
            k,
            gpd,
            vif_trace,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let n = self.names.len();
        if self.retained.is_empty() || self.retained.iter().any(|&i| i >= n) {
            return Err(Error::ModelFormat("retained indices out of range".into()));
        }
        if self.retained.len() != self.fit.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.retained.len(),
                got: self.fit.dim(),
            });
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::ModelFormat(format!("threshold {} must be positive", self.k)));
        }
        if self.threshold_kind == ThresholdKind::Pot && self.gpd.is_none() {
            return Err(Error::ModelFormat("POT model without a GPD fit".into()));
        }
        if self.smoothing.h == 0 {
            return Err(Error::ModelFormat("window length 0".into()));
        }
        Ok(())
    }

    pub fn retained_names(&self) -> Vec<&str> {
        self.retained.iter().map(|&i| self.names[i].as_str()).collect()
    }

    /// Picks the retained variables of `x` by name and smooths them.
    pub fn prepare(&self, x: &SeriesMatrix) -> Result<SeriesMatrix> {
        let idx = self
            .retained_names()
            .into_iter()
            .map(|name| x.index_of(name).ok_or_else(|| Error::UnknownColumn(name.to_string())))
            .collect::<Result<Vec<_>>>()?;
        smooth_matrix(&x.select(&idx)?, self.smoothing)
    }

    /// Scores and flags a raw (unsmoothed) segment.
    pub fn detect(&self, x: &SeriesMatrix) -> Result<DetectionResult> {
        let prepared = self.prepare(x)?;
        let scores = self.fit.score_all_raw(&prepared)?;
        let flags = flag(&scores, self.k);
        Ok(DetectionResult {
            scores,
            flags,
            time_offset: prepared.time_offset(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC} {MODEL_VERSION}\n");
        let names = serde_json::to_string(&self.names).expect("strings serialize");
        let _ = writeln!(s, "names: {names}");
        let _ = writeln!(s, "retained: {}", join(self.retained.iter().map(|i| i.to_string())));
        let _ = writeln!(s, "h: {}", self.smoothing.h);
        let _ = writeln!(s, "filter_kind: {}", self.smoothing.kind.as_str());
        let _ = writeln!(s, "threshold_kind: {}", self.threshold_kind.as_str());
        let _ = writeln!(s, "k: {}", real(self.k));
        let _ = writeln!(s, "n_train: {}", self.fit.n_train());
        let _ = writeln!(s, "mu: {}", reals(self.fit.mu()));
        let _ = writeln!(s, "sigma: {}", reals(self.fit.sigma()));
        let _ = writeln!(s, "sigma_chol: {}", reals(self.fit.chol()));
        let trace = join(self.vif_trace.iter().map(|&(i, v)| format!("{i}:{}", real(v))));
        let _ = writeln!(s, "vif_trace: {trace}");
        match &self.gpd {
            Some(g) => {
                let _ = writeln!(
                    s,
                    "gpd: gamma={} delta={} l={} t_l={} t_total={} loglik={}",
                    real(g.gamma),
                    real(g.delta),
                    real(g.l),
                    g.t_l,
                    g.t_total,
                    real(g.loglik)
                );
            }
            None => s.push_str("gpd: none\n"),
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| fmt_err("empty model file"))?;
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| fmt_err("missing model header"))?;
        if version != MODEL_VERSION.to_string() {
            return Err(Error::ModelVersion {
                found: version.to_string(),
                expected: MODEL_VERSION,
            });
        }
        let mut fields = HashMap::new();
        let mut ended = false;
        for line in lines {
            if line == "end" {
                ended = true;
                break;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| fmt_err(&format!("malformed line {line:?}")))?;
            if fields.insert(key.trim(), value.trim()).is_some() {
                return Err(fmt_err(&format!("duplicate field {key:?}")));
            }
        }
        if !ended {
            return Err(fmt_err("truncated model file (no end marker)"));
        }
        let get = |key: &str| fields.get(key).copied().ok_or_else(|| fmt_err(&format!("missing field {key:?}")));

        let names: Vec<String> =
            serde_json::from_str(get("names")?).map_err(|e| fmt_err(&format!("names: {e}")))?;
        let retained = parse_list::<usize>(get("retained")?, "retained")?;
        let h = parse_one::<usize>(get("h")?, "h")?;
        let kind: FilterKind = get("filter_kind")?.parse()?;
        let threshold_kind: ThresholdKind = get("threshold_kind")?.parse()?;
        let k = parse_one::<f64>(get("k")?, "k")?;
        let n_train = parse_one::<usize>(get("n_train")?, "n_train")?;
        let mu = parse_list::<f64>(get("mu")?, "mu")?;
        let sigma = parse_list::<f64>(get("sigma")?, "sigma")?;
        let chol = parse_list::<f64>(get("sigma_chol")?, "sigma_chol")?;
        let vif_trace = parse_list::<String>(get("vif_trace")?, "vif_trace")?
            .iter()
            .map(|item| {
                let (i, v) = item
                    .split_once(':')
                    .ok_or_else(|| fmt_err(&format!("vif_trace entry {item:?}")))?;
                Ok((parse_one(i, "vif_trace")?, parse_one(v, "vif_trace")?))
            })
            .collect::<Result<Vec<_>>>()?;
        let gpd = parse_gpd(get("gpd")?)?;

        let fit = ScatterFit::from_parts(mu, sigma, n_train)?;
        if fit.chol().len() != chol.len() || fit.chol().iter().zip(&chol).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Err(fmt_err("sigma_chol does not match sigma"));
        }
        let smoothing = SmoothConfig::new(h, kind)?;
        Self::new(names, retained, smoothing, fit, threshold_kind, k, gpd, vif_trace)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn fmt_err(msg: &str) -> Error {
    Error::ModelFormat(msg.to_string())
}

fn real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

fn reals(v: &[f64]) -> String {
    join(v.iter().map(|&x| real(x)))
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(" ")
}

fn parse_one<T: std::str::FromStr>(s: &str, field: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| fmt_err(&format!("{field}: cannot parse {s:?}")))
}

fn parse_list<T: std::str::FromStr>(s: &str, field: &str) -> Result<Vec<T>> {
    s.split_whitespace().map(|item| parse_one(item, field)).collect()
}

fn parse_gpd(s: &str) -> Result<Option<GpdFit>> {
    if s == "none" {
        return Ok(None);
    }
    let mut kv = HashMap::new();
    for item in s.split_whitespace() {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| fmt_err(&format!("gpd entry {item:?}")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| fmt_err(&format!("gpd missing {k}")));
    Ok(Some(GpdFit {
        gamma: parse_one(get("gamma")?, "gpd")?,
        delta: parse_one(get("delta")?, "gpd")?,
        l: parse_one(get("l")?, "gpd")?,
        t_l: parse_one(get("t_l")?, "gpd")?,
        t_total: parse_one(get("t_total")?, "gpd")?,
        loglik: parse_one(get("loglik")?, "gpd")?,
    }))
}
