//! Threshold selection on training scores and flag generation.
//!
//! Three rules are available: the maximum training score (MVT), a
//! peaks-over-threshold extrapolation from a generalized Pareto fit to the
//! upper tail (POT), and a chi-square quantile on the distance scale.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::LabelVector;
use crate::error::{Error, GpdFitError, Result};

/// Minimum number of exceedances for a GPD fit.
pub const MIN_EXCEEDANCES: usize = 30;

/// Below this |shape| the exponential-limit formulas are used.
const SHAPE_ZERO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdKind {
    Mvt,
    Pot,
    Chi2,
}

impl ThresholdKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdKind::Mvt => "mvt",
            ThresholdKind::Pot => "pot",
            ThresholdKind::Chi2 => "chi2",
        }
    }
}

impl std::str::FromStr for ThresholdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mvt" => Ok(ThresholdKind::Mvt),
            "pot" => Ok(ThresholdKind::Pot),
            "chi2" => Ok(ThresholdKind::Chi2),
            other => Err(Error::InvalidParameter(format!("unknown threshold kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub kind: ThresholdKind,
    /// Target exceedance probability for POT.
    pub q: f64,
    /// Peak cutoff percentile for POT, as a fraction.
    pub percentile: f64,
    /// Tail probability for the chi-square rule.
    pub alpha: f64,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self {
            kind: ThresholdKind::Mvt,
            q: 0.001,
            percentile: 0.99,
            alpha: 0.01,
        }
    }
}

impl ThresholdSpec {
    pub fn with_kind(kind: ThresholdKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("q", self.q), ("percentile", self.percentile), ("alpha", self.alpha)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Generalized Pareto fit of the exceedances over `l`.
///
/// [`fit_gpd`] fills `l = 0` and `t_total = t_l`; [`pot_threshold`] records
/// the actual cutoff and training size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub gamma: f64,
    pub delta: f64,
    pub l: f64,
    pub t_l: usize,
    pub t_total: usize,
    pub loglik: f64,
}

impl GpdFit {
    /// Level exceeded with probability `q` per observation.
    pub fn quantile(&self, q: f64) -> f64 {
        let ratio = q * self.t_total as f64 / self.t_l as f64;
        if self.gamma.abs() < SHAPE_ZERO {
            self.l - self.delta * ratio.ln()
        } else {
            self.l + self.delta / self.gamma * (ratio.powf(-self.gamma) - 1.0)
        }
    }
}

/// Maximum of the training scores.
pub fn mvt_threshold(md_a: &[f64]) -> Result<f64> {
    md_a.iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::Empty("training scores"))
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile input"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("percentile must be in [0, 1], got {p}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// GPD log-likelihood of `y`; `-inf` outside the parameter space or support.
pub fn gpd_loglik(gamma: f64, delta: f64, y: &[f64]) -> f64 {
    if !(delta > 0.0) || !gamma.is_finite() {
        return f64::NEG_INFINITY;
    }
    let n = y.len() as f64;
    if gamma.abs() < 1e-12 {
        return -n * delta.ln() - y.iter().sum::<f64>() / delta;
    }
    let r = gamma / delta;
    let mut s = 0.0;
    for &v in y {
        let z = r * v;
        if !(z > -1.0) {
            return f64::NEG_INFINITY;
        }
        s += z.ln_1p();
    }
    -n * delta.ln() - (1.0 + 1.0 / gamma) * s
}

/// Objective over `(gamma, ln delta)`. Shapes at or below -1 are excluded:
/// the likelihood is unbounded there.
fn neg_loglik(p: [f64; 2], y: &[f64]) -> f64 {
    if p[0] <= -1.0 {
        return f64::INFINITY;
    }
    let ll = gpd_loglik(p[0], p[1].exp(), y);
    if ll.is_finite() {
        -ll
    } else {
        f64::INFINITY
    }
}

/// Method-of-moments start, pulled into the feasible region if needed.
fn moments_start(y: &[f64]) -> [f64; 2] {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ratio = mean * mean / var;
    let mut gamma = (0.5 * (1.0 - ratio)).clamp(-0.9, 2.0);
    let delta = 0.5 * mean * (ratio + 1.0);
    let ymax = y.iter().cloned().fold(0.0, f64::max);
    while gamma < 0.0 && 1.0 + gamma * ymax / delta <= 0.0 {
        gamma *= 0.5;
        if gamma.abs() < 1e-8 {
            gamma = 0.0;
        }
    }
    [gamma, delta.ln()]
}

struct Simplex {
    best: [f64; 2],
    value: f64,
    converged: bool,
    iterations: usize,
}

/// Nelder–Mead on a 2-D objective.
fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: [f64; 2]) -> Simplex {
    const MAX_ITER: usize = 2000;
    const FTOL: f64 = 1e-12;
    const XTOL: f64 = 1e-9;
    let mut pts = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let mut vals = pts.map(&f);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.map(|i| pts[i]);
        vals = idx.map(|i| vals[i]);
        let spread = (vals[2] - vals[0]).abs();
        let size = (1..3)
            .map(|i| (pts[i][0] - pts[0][0]).abs().max((pts[i][1] - pts[0][1]).abs()))
            .fold(0.0, f64::max);
        if vals[0].is_finite() && spread <= FTOL * (vals[0].abs() + 1.0) && size <= XTOL {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid = [(pts[0][0] + pts[1][0]) / 2.0, (pts[0][1] + pts[1][1]) / 2.0];
        let along = |t: f64| {
            [
                centroid[0] + t * (pts[2][0] - centroid[0]),
                centroid[1] + t * (pts[2][1] - centroid[1]),
            ]
        };
        let refl = along(-1.0);
        let fr = f(refl);
        if fr < vals[0] {
            let exp = along(-2.0);
            let fe = f(exp);
            if fe < fr {
                pts[2] = exp;
                vals[2] = fe;
            } else {
                pts[2] = refl;
                vals[2] = fr;
            }
            continue;
        }
        if fr < vals[1] {
            pts[2] = refl;
            vals[2] = fr;
            continue;
        }
        let (cand, fc) = if fr < vals[2] {
            let c = along(-0.5);
            (c, f(c))
        } else {
            let c = along(0.5);
            (c, f(c))
        };
        if fc < vals[2].min(fr) {
            pts[2] = cand;
            vals[2] = fc;
            continue;
        }
        for i in 1..3 {
            pts[i] = [
                pts[0][0] + 0.5 * (pts[i][0] - pts[0][0]),
                pts[0][1] + 0.5 * (pts[i][1] - pts[0][1]),
            ];
            vals[i] = f(pts[i]);
        }
    }
    let b = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Simplex {
        best: pts[b],
        value: vals[b],
        converged,
        iterations,
    }
}

/// Central-difference Hessian of the objective; true when positive definite.
fn hessian_is_positive_definite(y: &[f64], p: [f64; 2]) -> bool {
    let h = [1e-4 * p[0].abs().max(1.0), 1e-4 * p[1].abs().max(1.0)];
    let f = |a: f64, b: f64| neg_loglik([p[0] + a, p[1] + b], y);
    let f0 = f(0.0, 0.0);
    let h00 = (f(h[0], 0.0) - 2.0 * f0 + f(-h[0], 0.0)) / (h[0] * h[0]);
    let h11 = (f(0.0, h[1]) - 2.0 * f0 + f(0.0, -h[1])) / (h[1] * h[1]);
    let h01 = (f(h[0], h[1]) - f(h[0], -h[1]) - f(-h[0], h[1]) + f(-h[0], -h[1]))
        / (4.0 * h[0] * h[1]);
    let det = h00 * h11 - h01 * h01;
    h00.is_finite() && h11.is_finite() && h01.is_finite() && h00 > 0.0 && det > 1e-10 * h00 * h11
}

/// Maximum-likelihood fit of a generalized Pareto distribution to positive
/// exceedances.
///
/// The search runs Nelder–Mead over `(gamma, ln delta)` from the
/// method-of-moments start and keeps the exponential (`gamma = 0`) closed
/// form as a competing candidate. The fit fails when the optimizer does not
/// converge, when the optimum leaves the support, or when the observed
/// information there is not positive definite.
pub fn fit_gpd(exceedances: &[f64]) -> Result<GpdFit, GpdFitError> {
    let n = exceedances.len();
    if n < MIN_EXCEEDANCES {
        return Err(GpdFitError::TooFewExceedances {
            got: n,
            required: MIN_EXCEEDANCES,
        });
    }
    if let Some(i) = exceedances.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(GpdFitError::NonPositiveExceedance {
            index: i,
            value: exceedances[i],
        });
    }
    let y = exceedances;
    let objective = |p: [f64; 2]| neg_loglik(p, y);

    let mean = y.iter().sum::<f64>() / n as f64;
    let exponential = [0.0, mean.ln()];
    let start = moments_start(y);
    let run = nelder_mead(objective, start, [0.1, 0.1]);
    let mut best = run.best;
    let mut best_val = run.value;
    let mut converged = run.converged;
    let exp_val = objective(exponential);
    if exp_val < best_val {
        best = exponential;
        best_val = exp_val;
        converged = true;
    }
    if !converged {
        return Err(GpdFitError::NoConvergence {
            iterations: run.iterations,
        });
    }
    if !best_val.is_finite() {
        return Err(GpdFitError::Infeasible);
    }
    let (gamma, delta) = (best[0], best[1].exp());
    if y.iter().any(|&v| !(1.0 + gamma * v / delta > 0.0)) {
        return Err(GpdFitError::Infeasible);
    }
    if !hessian_is_positive_definite(y, best) {
        return Err(GpdFitError::SingularHessian);
    }
    Ok(GpdFit {
        gamma,
        delta,
        l: 0.0,
        t_l: n,
        t_total: n,
        loglik: -best_val,
    })
}

/// Peaks-over-threshold: fit a GPD to the training scores above the
/// `spec.percentile` cutoff and extrapolate the level exceeded with
/// probability `spec.q`.
pub fn pot_threshold(md_a: &[f64], spec: &ThresholdSpec) -> Result<(f64, GpdFit)> {
    spec.validate()?;
    let l = percentile(md_a, spec.percentile)?;
    let peaks: Vec<f64> = md_a.iter().filter(|&&v| v > l).map(|v| v - l).collect();
    if peaks.is_empty() {
        return Err(GpdFitError::NoExceedances { cutoff: l }.into());
    }
    let mut fit = fit_gpd(&peaks)?;
    fit.l = l;
    fit.t_total = md_a.len();
    Ok((fit.quantile(spec.q), fit))
}

/// `sqrt` of the chi-square `(1 - alpha)` quantile with `m` degrees of
/// freedom, i.e. on the same scale as the distances.
pub fn chi2_threshold(m: usize, alpha: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("chi-square needs m >= 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let dist = ChiSquared::new(m as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - alpha).max(0.0).sqrt())
}

/// `1` where the score is strictly above `k`.
pub fn flag(scores: &[f64], k: f64) -> LabelVector {
    LabelVector::from_bools(scores.iter().map(|&s| s > k), "scores")
}
