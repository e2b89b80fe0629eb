//! Iterative variance-inflation-factor pruning.
//!
//! VIFs are computed on correlation-scaled, centered data. Regressing
//! variable `i` on the others without intercept gives a residual sum of
//! squares that, on the correlation scale, equals `1 - R_i^2` directly; it is
//! obtained from the Schur complement of the predictors' block in the
//! correlation matrix. Rank-deficient predictor sets are handled by skipping
//! predictors whose residual variance vanishes, which yields the same fitted
//! values as a minimum-norm least-squares solution.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::data::SeriesMatrix;
use crate::error::{Error, Result};

/// Default pruning threshold.
pub const DEFAULT_VIF_THRESHOLD: f64 = 5.0;

/// `1 - R^2` at or below this maps to an infinite VIF.
const EXACT_COLLINEARITY: f64 = 1e-12;
/// Predictors whose residual variance (correlation scale) drops below this
/// are treated as linear combinations of earlier predictors.
const PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VifReport {
    /// `(variable index, VIF at removal)` in removal order.
    #[serde(serialize_with = "ser_removed")]
    pub removed: Vec<(usize, f64)>,
    pub retained: Vec<usize>,
    #[serde(serialize_with = "ser_vifs")]
    pub final_vifs: Vec<f64>,
}

impl VifReport {
    pub fn max_final_vif(&self) -> f64 {
        self.final_vifs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn vif_json(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::json!("inf")
    }
}

fn ser_removed<S: Serializer>(v: &[(usize, f64)], s: S) -> Result<S::Ok, S::Error> {
    let items: Vec<_> = v
        .iter()
        .map(|&(i, vif)| serde_json::json!({ "variable": i, "vif": vif_json(vif) }))
        .collect();
    items.serialize(s)
}

fn ser_vifs<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let items: Vec<_> = v.iter().map(|&x| vif_json(x)).collect();
    items.serialize(s)
}

/// Subtracts each variable's mean. Returns the centered matrix and the means.
pub fn center(x: &SeriesMatrix) -> Result<(SeriesMatrix, Vec<f64>)> {
    let n = x.n_vars();
    let len = x.len() as f64;
    let mut means = vec![0.0; n];
    for obs in x.observations() {
        for (m, v) in means.iter_mut().zip(obs) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= len);
    for (var, name) in x.names().iter().enumerate() {
        let first = x.get(0, var);
        if x.observations().all(|o| o[var] == first) {
            return Err(Error::ConstantVariable(name.clone()));
        }
    }
    let values = x
        .observations()
        .flat_map(|o| o.iter().zip(&means).map(|(v, m)| v - m))
        .collect();
    Ok((SeriesMatrix::new(x.names().to_vec(), values)?, means))
}

/// Correlation matrix (row-major, `n x n`) of centered data.
fn correlation(d: &SeriesMatrix) -> Result<Vec<f64>> {
    let n = d.n_vars();
    let mut gram = vec![0.0; n * n];
    for obs in d.observations() {
        for i in 0..n {
            let xi = obs[i];
            let row = &mut gram[i * n..i * n + i + 1];
            for (g, xj) in row.iter_mut().zip(&obs[..=i]) {
                *g += xi * xj;
            }
        }
    }
    let scale: Vec<f64> = (0..n).map(|i| gram[i * n + i].sqrt()).collect();
    if let Some(i) = scale.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::ConstantVariable(d.names()[i].clone()));
    }
    for i in 0..n {
        for j in 0..=i {
            let c = gram[i * n + j] / (scale[i] * scale[j]);
            gram[i * n + j] = c;
            gram[j * n + i] = c;
        }
    }
    Ok(gram)
}

/// `1 - R^2` of regressing `target` on `predictors`, from the correlation
/// matrix `corr` of dimension `n`.
fn unexplained_fraction(corr: &[f64], n: usize, predictors: &[usize], target: usize) -> f64 {
    let k = predictors.len();
    let dim = k + 1;
    let at = |i: usize| if i < k { predictors[i] } else { target };
    let mut a = vec![0.0; dim * dim];
    for r in 0..dim {
        for c in 0..=r {
            a[r * dim + c] = corr[at(r) * n + at(c)];
        }
    }
    for j in 0..k {
        let d = a[j * dim + j];
        if d <= PIVOT_TOLERANCE {
            continue;
        }
        for r in j + 1..dim {
            let f = a[r * dim + j] / d;
            if f == 0.0 {
                continue;
            }
            for c in j + 1..=r {
                a[r * dim + c] -= f * a[c * dim + j];
            }
        }
    }
    a[k * dim + k].clamp(0.0, 1.0)
}

fn vif_from_unexplained(u: f64) -> f64 {
    if u <= EXACT_COLLINEARITY {
        f64::INFINITY
    } else {
        (1.0 / u).max(1.0)
    }
}

fn vifs_for(corr: &[f64], n: usize, active: &[usize]) -> Vec<f64> {
    active
        .par_iter()
        .enumerate()
        .map(|(pos, &target)| {
            let others: Vec<usize> = active
                .iter()
                .enumerate()
                .filter(|&(p, _)| p != pos)
                .map(|(_, &v)| v)
                .collect();
            vif_from_unexplained(unexplained_fraction(corr, n, &others, target))
        })
        .collect()
}

/// VIF of every variable of a centered matrix; `+inf` marks exact
/// collinearity.
pub fn compute_vifs(d: &SeriesMatrix) -> Result<Vec<f64>> {
    let n = d.n_vars();
    if n < 2 {
        return Err(Error::TooFewVariables(n));
    }
    let corr = correlation(d)?;
    let all: Vec<usize> = (0..n).collect();
    Ok(vifs_for(&corr, n, &all))
}

/// Repeatedly removes the variable with the largest VIF until every
/// remaining VIF is below `threshold` or a single variable is left. Ties go
/// to the lowest original index.
pub fn vif_prune(x: &SeriesMatrix, threshold: f64) -> Result<VifReport> {
    if !(threshold > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "VIF threshold must exceed 1, got {threshold}"
        )));
    }
    let (d, _) = center(x)?;
    let n = d.n_vars();
    let mut active: Vec<usize> = (0..n).collect();
    let mut removed = Vec::new();
    if n == 1 {
        return Ok(VifReport {
            removed,
            retained: active,
            final_vifs: vec![1.0],
        });
    }
    let corr = correlation(&d)?;
    loop {
        let vifs = vifs_for(&corr, n, &active);
        // first maximal entry wins, active stays sorted by original index
        let (worst, &worst_vif) = vifs
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, &f64)>, (i, v)| match best {
                Some((_, b)) if *v <= *b => best,
                _ => Some((i, v)),
            })
            .expect("active set is non-empty");
        if worst_vif < threshold {
            return Ok(VifReport {
                removed,
                retained: active,
                final_vifs: vifs,
            });
        }
        removed.push((active.remove(worst), worst_vif));
        if active.len() == 1 {
            return Ok(VifReport {
                removed,
                retained: active,
                final_vifs: vec![1.0],
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    fn gaussian_columns(n: usize, t: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..t).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    /// Oracle: VIF_i = [C^-1]_ii for the correlation matrix C.
    fn inverse_correlation_vifs(cols: &[Vec<f64>]) -> Vec<f64> {
        let n = cols.len();
        let t = cols[0].len();
        let centered: Vec<Vec<f64>> = cols
            .iter()
            .map(|c| {
                let m = c.iter().sum::<f64>() / t as f64;
                c.iter().map(|v| v - m).collect()
            })
            .collect();
        let c = DMatrix::from_fn(n, n, |i, j| {
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            dot(&centered[i], &centered[j])
                / (dot(&centered[i], &centered[i]) * dot(&centered[j], &centered[j])).sqrt()
        });
        let inv = c.try_inverse().expect("full rank");
        (0..n).map(|i| inv[(i, i)]).collect()
    }

    #[test]
    fn center_simple() {
        let x = SeriesMatrix::from_columns(names(1), &[vec![1.0, 2.0, 3.0]]).unwrap();
        let (d, m) = center(&x).unwrap();
        assert_eq!(m, [2.0]);
        assert_eq!(d.variable(0), [-1.0, 0.0, 1.0]);
        let (d2, m2) = center(&d).unwrap();
        assert_eq!(m2, [0.0]);
        assert_eq!(d2, d);
    }

    #[test]
    fn center_rows_sum_to_zero() {
        let cols = gaussian_columns(3, 1000, 4);
        let cols: Vec<Vec<f64>> = cols.into_iter().map(|c| c.iter().map(|v| 1e3 + 50.0 * v).collect()).collect();
        let x = SeriesMatrix::from_columns(names(3), &cols).unwrap();
        let (d, _) = center(&x).unwrap();
        for v in 0..3 {
            let s: f64 = d.variable(v).iter().sum();
            assert!(s.abs() <= 1e-9 * 1000.0 * 1e3);
        }
    }

    #[test]
    fn center_rejects_constant() {
        let x = SeriesMatrix::from_columns(names(2), &[vec![1.0, 2.0], vec![5.0, 5.0]]).unwrap();
        match center(&x) {
            Err(Error::ConstantVariable(name)) => assert_eq!(name, "x1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uncorrelated_pair_has_unit_vif() {
        // orthogonal centered vectors: R^2 = 0 exactly
        let x = SeriesMatrix::from_columns(
            names(2),
            &[vec![1.0, -1.0, 1.0, -1.0], vec![1.0, 1.0, -1.0, -1.0]],
        )
        .unwrap();
        let (d, _) = center(&x).unwrap();
        let v = compute_vifs(&d).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-9 && (v[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_variable_is_infinite() {
        let c = gaussian_columns(1, 200, 1).remove(0);
        let x = SeriesMatrix::from_columns(names(2), &[c.clone(), c]).unwrap();
        let (d, _) = center(&x).unwrap();
        assert_eq!(compute_vifs(&d).unwrap(), [f64::INFINITY, f64::INFINITY]);
    }

    #[test]
    fn one_variable_is_an_error() {
        let x = SeriesMatrix::from_columns(names(1), &[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(compute_vifs(&x), Err(Error::TooFewVariables(1))));
    }

    #[test]
    fn regression_vifs_match_inverse_correlation_diagonal() {
        let mut cols = gaussian_columns(4, 5000, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let noisy: Vec<f64> = cols[0]
            .iter()
            .map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        cols.push(noisy);
        let oracle = inverse_correlation_vifs(&cols);
        let x = SeriesMatrix::from_columns(names(5), &cols).unwrap();
        let (d, _) = center(&x).unwrap();
        let got = compute_vifs(&d).unwrap();
        assert!(oracle[0] > 50.0);
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() <= 1e-6 * o, "{g} vs {o}");
        }
    }

    #[test]
    fn independent_variables_survive() {
        let cols = gaussian_columns(6, 3000, 2);
        let x = SeriesMatrix::from_columns(names(6), &cols).unwrap();
        let r = vif_prune(&x, 5.0).unwrap();
        assert!(r.removed.is_empty());
        assert_eq!(r.retained, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn sum_dependency_removes_one() {
        let mut cols = gaussian_columns(2, 2000, 3);
        let sum: Vec<f64> = cols[0].iter().zip(&cols[1]).map(|(a, b)| a + b).collect();
        cols.push(sum);
        let x = SeriesMatrix::from_columns(names(3), &cols).unwrap();
        let r = vif_prune(&x, 5.0).unwrap();
        // brute force on the first pass: all three are exact combinations
        assert_eq!(r.removed.len(), 1);
        assert_eq!(r.removed[0], (0, f64::INFINITY));
        assert_eq!(r.retained, [1, 2]);
        // second pass: corr(x1, x1 + x0) ~ 1/sqrt(2), VIF ~ 2
        assert!(r.max_final_vif() < 5.0);
        assert!((r.final_vifs[0] - 2.0).abs() < 0.2);
        let kept = x.select(&r.retained).unwrap();
        let (d, _) = center(&kept).unwrap();
        assert_eq!(compute_vifs(&d).unwrap(), r.final_vifs);
    }

    #[test]
    fn single_variable_report() {
        let x = SeriesMatrix::from_columns(names(1), &[vec![1.0, 2.0, 4.0]]).unwrap();
        let r = vif_prune(&x, 5.0).unwrap();
        assert_eq!(r.retained, [0]);
        assert!(r.removed.is_empty());
    }

    #[test]
    fn permutation_equivariance_without_ties() {
        let mut cols = gaussian_columns(5, 3000, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a: Vec<f64> = (0..3000)
            .map(|t| cols[0][t] + cols[1][t] + 0.2 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let b: Vec<f64> = (0..3000)
            .map(|t| cols[2][t] - 0.5 * cols[3][t] + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        cols.push(a);
        cols.push(b);
        let x = SeriesMatrix::from_columns(names(7), &cols).unwrap();
        let base = vif_prune(&x, 5.0).unwrap();
        let perm = [3usize, 6, 0, 5, 1, 4, 2];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| cols[p].clone()).collect();
        let y = SeriesMatrix::from_columns(names(7), &permuted).unwrap();
        let r = vif_prune(&y, 5.0).unwrap();
        let mut mapped: Vec<usize> = r.retained.iter().map(|&i| perm[i]).collect();
        mapped.sort_unstable();
        assert_eq!(mapped, base.retained);
        assert!(!base.removed.is_empty());
    }

    #[test]
    fn report_serializes_infinite_vifs() {
        let r = VifReport {
            removed: vec![(2, f64::INFINITY)],
            retained: vec![0, 1],
            final_vifs: vec![1.5, 1.5],
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"inf\""));
    }
}
