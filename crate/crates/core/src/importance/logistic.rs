//! Logistic regression by iteratively reweighted least squares and the
//! relative contribution to deviance explained (RCDE).

use nalgebra::{DMatrix, DVector};

use super::{ImportanceMethod, ImportanceReport, Step5Dataset};
use crate::error::{Error, Result};

/// Ridge penalty on the standardized slopes; keeps separable data finite.
pub const DEFAULT_RIDGE: f64 = 1e-6;

const MAX_ITER: usize = 500;
const TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub intercept: f64,
    /// Slopes on the original feature scale; constant columns get 0.
    pub coefficients: Vec<f64>,
    pub deviance: f64,
    pub null_deviance: f64,
    pub iterations: usize,
    pub ridge: f64,
}

impl LogisticFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        1.0 / (1.0 + (-self.linear_predictor(x)).exp())
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.linear_predictor(x) >= 0.0)
    }

    pub fn accuracy(&self, data: &Step5Dataset) -> f64 {
        let correct = (0..data.n_rows())
            .filter(|&i| self.predict(data.row(i)) == data.targets()[i])
            .count();
        correct as f64 / data.n_rows() as f64
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// -2 log-likelihood for linear predictors `eta`.
fn deviance(eta: &DVector<f64>, y: &[u8]) -> f64 {
    2.0 * eta
        .iter()
        .zip(y)
        .map(|(&e, &t)| if t == 1 { softplus(-e) } else { softplus(e) })
        .sum::<f64>()
}

/// Deviance of the intercept-only model.
pub fn null_deviance(y: &[u8]) -> f64 {
    let n = y.len() as f64;
    let ones = y.iter().filter(|&&t| t == 1).count() as f64;
    let mut d = 0.0;
    if ones > 0.0 {
        d -= ones * (ones / n).ln();
    }
    if ones < n {
        d -= (n - ones) * ((n - ones) / n).ln();
    }
    2.0 * d
}

/// Fits P(y = 1 | x) = sigmoid(b0 + x.b) with a ridge penalty on the
/// standardized slopes (never the intercept).
pub fn fit_logistic(data: &Step5Dataset, ridge: f64) -> Result<LogisticFit> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge {ridge} must be non-negative")));
    }
    let n = data.n_rows();
    let p = data.n_features();
    let y = data.targets();

    let mut means = vec![0.0; p];
    let mut sds = vec![0.0; p];
    for j in 0..p {
        let m = (0..n).map(|i| data.get(i, j)).sum::<f64>() / n as f64;
        let v = (0..n).map(|i| (data.get(i, j) - m).powi(2)).sum::<f64>() / n as f64;
        means[j] = m;
        sds[j] = v.sqrt();
    }
    let active: Vec<usize> = (0..p).filter(|&j| sds[j] > 1e-12 * (1.0 + means[j].abs())).collect();
    let k = active.len() + 1;
    let x = DMatrix::from_fn(n, k, |i, c| {
        if c == 0 {
            1.0
        } else {
            let j = active[c - 1];
            (data.get(i, j) - means[j]) / sds[j]
        }
    });
    let yv = DVector::from_iterator(n, y.iter().map(|&t| f64::from(t)));
    let ybar = yv.mean();

    let objective = |beta: &DVector<f64>| {
        let eta = &x * beta;
        let pen: f64 = beta.iter().skip(1).map(|b| b * b).sum();
        0.5 * deviance(&eta, y) + 0.5 * ridge * pen
    };

    let mut beta = DVector::zeros(k);
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let mut obj = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let eta = &x * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-300));
        let mut grad = x.tr_mul(&(&yv - &mu));
        let xw = DMatrix::from_fn(n, k, |i, c| x[(i, c)] * w[i]);
        let mut h = x.tr_mul(&xw);
        for c in 1..k {
            grad[c] -= ridge * beta[c];
            h[(c, c)] += ridge;
        }
        let Some(chol) = h.cholesky() else {
            break;
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &beta + &step * t;
            let c_obj = objective(&cand);
            if c_obj <= obj + 1e-12 * obj.abs().max(1.0) {
                accepted = Some((cand, c_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, c_obj)) = accepted else {
            break;
        };
        let change = (&cand - &beta).amax();
        beta = cand;
        obj = c_obj;
        if change < TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::LogisticNoConvergence { iterations });
    }

    let eta = &x * &beta;
    let mut coefficients = vec![0.0; p];
    let mut intercept = beta[0];
    for (c, &j) in active.iter().enumerate() {
        let b = beta[c + 1] / sds[j];
        coefficients[j] = b;
        intercept -= b * means[j];
    }
    Ok(LogisticFit {
        intercept,
        coefficients,
        deviance: deviance(&eta, y),
        null_deviance: null_deviance(y),
        iterations,
        ridge,
    })
}

/// Share of the full model's explained deviance lost when each variable is
/// left out. A single predictor gets exactly 1.
pub fn rcde(data: &Step5Dataset, ridge: f64) -> Result<(LogisticFit, ImportanceReport)> {
    let full = fit_logistic(data, ridge)?;
    let explained = full.null_deviance - full.deviance;
    if !(explained > 0.0) {
        return Err(Error::NoDevianceExplained);
    }
    let p = data.n_features();
    let mut scores = Vec::with_capacity(p);
    for j in 0..p {
        let reduced = match data.without_feature(j) {
            Some(d) => fit_logistic(&d, ridge)?.deviance,
            None => full.null_deviance,
        };
        let without = full.null_deviance - reduced;
        scores.push((explained - without) / explained);
    }
    let report = ImportanceReport::from_scores(ImportanceMethod::LrRcde, data.names(), &scores);
    Ok((full, report))
}
