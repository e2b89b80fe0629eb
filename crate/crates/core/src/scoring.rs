//! Mahalanobis anomaly scores against the training location and scatter.
//!
//! Production scoring solves against the Cholesky factor of the training
//! covariance; no explicit inverse is formed. [`EigenBasis`] is a
//! diagnostics path that splits a squared score into principal-component
//! contributions.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::data::SeriesMatrix;
use crate::error::{Error, Result};

/// Pivots whose squared value falls below this fraction of the matching
/// covariance diagonal count as a failed factorization.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// Training mean, covariance (normalized by the number of training rows)
/// and its lower Cholesky factor. Matrices are `m x m`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterFit {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    chol: Vec<f64>,
    m: usize,
    n_train: usize,
}

impl ScatterFit {
    /// Rebuilds a fit from stored parts, re-checking the factorization.
    pub fn from_parts(mu: Vec<f64>, sigma: Vec<f64>, n_train: usize) -> Result<Self> {
        let m = mu.len();
        if sigma.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                got: sigma.len(),
            });
        }
        let chol = cholesky(&sigma, m)?;
        Ok(Self {
            mu,
            sigma,
            chol,
            m,
            n_train,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Lower-triangular `L` with `L L' = sigma`.
    pub fn chol(&self) -> &[f64] {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// Distance of an observation already centered by the training means.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: x.len(),
            });
        }
        let mut z = vec![0.0; self.m];
        Ok(self.quad_form(x, &mut z).sqrt())
    }

    /// Distance of a raw observation (centered here with the stored means).
    pub fn score_raw(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        self.score(&centered)
    }

    /// `x' sigma^-1 x` via the forward solve `L z = x`; `z` is scratch.
    fn quad_form(&self, x: &[f64], z: &mut [f64]) -> f64 {
        let m = self.m;
        let mut acc = 0.0;
        for i in 0..m {
            let row = &self.chol[i * m..i * m + i];
            let s: f64 = row.iter().zip(&z[..i]).map(|(l, zj)| l * zj).sum();
            z[i] = (x[i] - s) / self.chol[i * m + i];
            acc += z[i] * z[i];
        }
        acc
    }

    /// Scores every row of a centered, time-major buffer with `m` columns.
    pub fn score_rows(&self, centered: &[f64]) -> Result<Vec<f64>> {
        if centered.len() % self.m != 0 {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: centered.len() % self.m,
            });
        }
        Ok(centered
            .par_chunks(self.m * 1024)
            .flat_map_iter(|block| {
                let mut z = vec![0.0; self.m];
                block
                    .chunks_exact(self.m)
                    .map(|x| self.quad_form(x, &mut z).sqrt())
                    .collect::<Vec<_>>()
            })
            .collect())
    }

    /// Scores every observation of a centered matrix restricted to the
    /// retained variables.
    pub fn score_all(&self, centered: &SeriesMatrix) -> Result<Vec<f64>> {
        if centered.n_vars() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: centered.n_vars(),
            });
        }
        self.score_rows(centered.values())
    }

    /// Centers raw rows with the training means and scores them.
    pub fn score_all_raw(&self, x: &SeriesMatrix) -> Result<Vec<f64>> {
        if x.n_vars() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: x.n_vars(),
            });
        }
        let centered: Vec<f64> = x
            .observations()
            .flat_map(|o| o.iter().zip(&self.mu).map(|(a, b)| a - b))
            .collect();
        self.score_rows(&centered)
    }
}

/// Lower Cholesky factor of a row-major `m x m` matrix.
fn cholesky(a: &[f64], m: usize) -> Result<Vec<f64>> {
    for i in 0..m {
        for j in 0..i {
            let (x, y) = (a[i * m + j], a[j * m + i]);
            if (x - y).abs() > 1e-12 * (x.abs() + y.abs()).max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidParameter("covariance is not symmetric".into()));
            }
        }
    }
    let mut l = vec![0.0; m * m];
    for j in 0..m {
        let s: f64 = l[j * m..j * m + j].iter().map(|v| v * v).sum();
        let d = a[j * m + j] - s;
        if !(d > PIVOT_TOLERANCE * a[j * m + j]) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        l[j * m + j] = djj;
        for i in j + 1..m {
            let s: f64 = l[i * m..i * m + j]
                .iter()
                .zip(&l[j * m..j * m + j])
                .map(|(a, b)| a * b)
                .sum();
            l[i * m + j] = (a[i * m + j] - s) / djj;
        }
    }
    Ok(l)
}

/// Fits the scatter of a centered, reduced training matrix. `mu` are the
/// training means that were subtracted.
pub fn fit_scatter(centered: &SeriesMatrix, mu: Vec<f64>) -> Result<ScatterFit> {
    let m = centered.n_vars();
    if mu.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: mu.len(),
        });
    }
    let t = centered.len();
    if t <= m {
        return Err(Error::Shape(format!(
            "need more training rows ({t}) than variables ({m}) for a positive definite covariance"
        )));
    }
    let mut sigma = vec![0.0; m * m];
    for obs in centered.observations() {
        for i in 0..m {
            let xi = obs[i];
            for (s, xj) in sigma[i * m..i * m + i + 1].iter_mut().zip(&obs[..=i]) {
                *s += xi * xj;
            }
        }
    }
    for i in 0..m {
        for j in 0..=i {
            let v = sigma[i * m + j] / t as f64;
            sigma[i * m + j] = v;
            sigma[j * m + i] = v;
        }
    }
    ScatterFit::from_parts(mu, sigma, t)
}

/// Eigen-decomposition of the training covariance with eigenvalues in
/// decreasing order, plus the smallest `p` whose leading eigenvalues explain
/// more than a fraction `alpha` of the total variance.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub eigenvalues: Vec<f64>,
    /// `m x m`, one eigenvector per column.
    pub vectors: DMatrix<f64>,
    pub p: usize,
    pub alpha: f64,
}

impl EigenBasis {
    pub fn new(fit: &ScatterFit, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha must be in [0, 1], got {alpha}")));
        }
        let m = fit.dim();
        let sigma = DMatrix::from_row_slice(m, m, fit.sigma());
        let eig = SymmetricEigen::new(sigma);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
        let total: f64 = eigenvalues.iter().sum();
        let mut acc = 0.0;
        let mut p = m;
        for (i, l) in eigenvalues.iter().enumerate() {
            acc += l;
            if acc / total > alpha {
                p = i + 1;
                break;
            }
        }
        Ok(Self {
            eigenvalues,
            vectors,
            p,
            alpha,
        })
    }

    /// Same basis with an explicit split index.
    pub fn with_split(mut self, p: usize) -> Result<Self> {
        if p > self.eigenvalues.len() {
            return Err(Error::InvalidParameter(format!(
                "split {p} exceeds dimension {}",
                self.eigenvalues.len()
            )));
        }
        self.p = p;
        Ok(self)
    }

    /// Principal-component coordinates `V' x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let m = self.eigenvalues.len();
        (0..m)
            .map(|c| (0..m).map(|r| self.vectors[(r, c)] * x[r]).sum())
            .collect()
    }
}

/// Splits the squared score of a centered observation into the
/// contributions of the leading `p` components and of the remaining ones.
pub fn decompose_score(fit: &ScatterFit, basis: &EigenBasis, x: &[f64]) -> Result<(f64, f64)> {
    let m = fit.dim();
    if basis.eigenvalues.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: basis.eigenvalues.len(),
        });
    }
    if x.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: x.len(),
        });
    }
    let xi = basis.project(x);
    let mut head = 0.0;
    let mut tail = 0.0;
    for (i, (c, l)) in xi.iter().zip(&basis.eigenvalues).enumerate() {
        let term = c * c / l;
        if i < basis.p {
            head += term;
        } else {
            tail += term;
        }
    }
    Ok((head, tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collinearity::center;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    fn fixed(sigma: Vec<f64>) -> ScatterFit {
        let m = (sigma.len() as f64).sqrt() as usize;
        ScatterFit::from_parts(vec![0.0; m], sigma, 100).unwrap()
    }

    #[test]
    fn zero_offset_scores_zero() {
        let f = fixed(vec![2.0, 1.0, 1.0, 2.0]);
        assert_eq!(f.score(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn identity_is_euclidean() {
        let f = fixed(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let s = f.score(&[3.0, 4.0, 12.0]).unwrap();
        assert!((s - 13.0).abs() < 1e-12);
    }

    #[test]
    fn hand_inverted_two_by_two() {
        // inverse is (1/3)[[2,-1],[-1,2]], quadratic form at (1,1) is 2/3
        let f = fixed(vec![2.0, 1.0, 1.0, 2.0]);
        let s = f.score(&[1.0, 1.0]).unwrap();
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((s - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch() {
        let f = fixed(vec![1.0]);
        assert!(matches!(f.score(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn independent_unit_series_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..100_000).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let x = SeriesMatrix::from_columns(names(2), &cols).unwrap();
        let (d, mu) = center(&x).unwrap();
        let f = fit_scatter(&d, mu).unwrap();
        let ident = [1.0, 0.0, 0.0, 1.0];
        for (s, e) in f.sigma().iter().zip(ident) {
            assert!((s - e).abs() < 0.05);
        }
    }

    #[test]
    fn duplicated_variable_fails_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let x = SeriesMatrix::from_columns(names(3), &[a.clone(), b, a]).unwrap();
        let (d, mu) = center(&x).unwrap();
        assert!(matches!(fit_scatter(&d, mu), Err(Error::NotPositiveDefinite { pivot: 2 })));
    }

    #[test]
    fn scalar_case_is_variance() {
        let x = SeriesMatrix::from_columns(names(1), &[vec![1.0, 3.0, 5.0, 7.0]]).unwrap();
        let (d, mu) = center(&x).unwrap();
        let f = fit_scatter(&d, mu).unwrap();
        assert_eq!(f.sigma(), [5.0]);
        assert!((f.score_raw(&[4.0 + 5f64.sqrt()]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn training_trace_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..2000).map(|_| (k + 1) as f64 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut cols = cols;
        let mixed: Vec<f64> = (0..2000).map(|t| cols[0][t] + 0.5 * cols[1][t]).collect();
        cols[2] = cols[2].iter().zip(&mixed).map(|(a, b)| a + b).collect();
        let x = SeriesMatrix::from_columns(names(4), &cols).unwrap();
        let (d, mu) = center(&x).unwrap();
        let f = fit_scatter(&d, mu).unwrap();
        let s = f.score_all(&d).unwrap();
        let mean_sq = s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
        assert!((mean_sq - 4.0).abs() <= 1e-8 * 4.0);
        // one-at-a-time matches batch, raw path matches centered path
        for t in [0, 17, 1999] {
            assert_eq!(f.score(d.observation(t)).unwrap(), s[t]);
        }
        let raw = f.score_all_raw(&x).unwrap();
        for (a, b) in raw.iter().zip(&s) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
        assert!(f.score_raw(f.mu()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn scores_ignore_row_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..300).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let x = SeriesMatrix::from_columns(names(3), &cols).unwrap();
        let (d, mu) = center(&x).unwrap();
        let f = fit_scatter(&d, mu).unwrap();
        let s = f.score_all(&d).unwrap();
        let rev: Vec<f64> = d.observations().rev().flatten().copied().collect();
        let mut r = f.score_rows(&rev).unwrap();
        r.reverse();
        assert_eq!(r, s);
    }

    fn random_spd(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = &a * a.transpose() + DMatrix::identity(m, m) * 0.1;
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = s[(i, j)];
            }
        }
        // exact symmetry
        for i in 0..m {
            for j in 0..i {
                out[j * m + i] = out[i * m + j];
            }
        }
        out
    }

    #[test]
    fn decomposition_sums_to_squared_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = fixed(random_spd(5, &mut rng));
        let b = EigenBasis::new(&f, 0.9).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
            let (h, t) = decompose_score(&f, &b, &x).unwrap();
            let s = f.score(&x).unwrap();
            assert!((h + t - s * s).abs() <= 1e-8 * s * s);
        }
    }

    #[test]
    fn eigenbasis_is_orthonormal_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sigma = random_spd(6, &mut rng);
        let f = fixed(sigma.clone());
        let b = EigenBasis::new(&f, 0.99).unwrap();
        let v = &b.vectors;
        let vtv = v.transpose() * v;
        for i in 0..6 {
            for j in 0..6 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[(i, j)] - e).abs() < 1e-9);
            }
        }
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(b.eigenvalues.clone()));
        let rec = v * lam * v.transpose();
        let norm: f64 = sigma.iter().map(|x| x * x).sum::<f64>().sqrt();
        let err: f64 = (0..36).map(|k| (rec[(k / 6, k % 6)] - sigma[k]).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-8 * norm);
        assert!(b.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_head_has_empty_tail_and_aligned_vector_has_no_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = fixed(random_spd(4, &mut rng));
        let b = EigenBasis::new(&f, 1.0).unwrap();
        assert_eq!(b.p, 4);
        let x = [0.3, -1.0, 2.0, 0.5];
        assert_eq!(decompose_score(&f, &b, &x).unwrap().1, 0.0);
        let b1 = b.with_split(1).unwrap();
        let v1: Vec<f64> = (0..4).map(|r| 2.5 * b1.vectors[(r, 0)]).collect();
        let (h, t) = decompose_score(&f, &b1, &v1).unwrap();
        assert!(t <= 1e-10 * h);
    }

    #[test]
    fn shrinking_tail_variance_increases_score() {
        // Training data along e1, e2 with a tail direction e3 of shrinking
        // variance; an observation with an e3 component scores higher as the
        // tail collapses.
        let x = [1.0, 1.0, 0.5];
        let mut last = 0.0;
        for tail_sd in [1.0, 0.5, 0.2, 0.1, 0.05] {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let cols: Vec<Vec<f64>> = [3.0, 2.0, tail_sd]
                .iter()
                .map(|&sd| (0..4000).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let data = SeriesMatrix::from_columns(names(3), &cols).unwrap();
            let (d, mu) = center(&data).unwrap();
            let f = fit_scatter(&d, mu).unwrap();
            let s = f.score_raw(&x).unwrap();
            assert!(s > last, "{s} <= {last}");
            last = s;
            let b = EigenBasis::new(&f, 0.95).unwrap();
            let centered: Vec<f64> = x.iter().zip(f.mu()).map(|(a, m)| a - m).collect();
            let (head, tail) = decompose_score(&f, &b, &centered).unwrap();
            if tail_sd <= 0.2 {
                // the tail component dominates the distance
                assert!(tail > head);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn affine_invariance(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = 3;
            let cols: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..400).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let a = DMatrix::from_fn(m, m, |i, j| if i == j { 2.0 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal) * 0.5);
            prop_assume!(a.determinant().abs() > 0.1);
            let shift: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal) * 10.0).collect();
            let transform = |obs: &[f64]| -> Vec<f64> {
                (0..m).map(|i| (0..m).map(|j| a[(i, j)] * obs[j]).sum::<f64>() + shift[i]).collect()
            };
            let x = SeriesMatrix::from_columns(names(m), &cols).unwrap();
            let y_vals: Vec<f64> = x.observations().flat_map(|o| transform(o)).collect();
            let y = SeriesMatrix::new(names(m), y_vals).unwrap();
            let (dx, mx) = center(&x).unwrap();
            let (dy, my) = center(&y).unwrap();
            let fx = fit_scatter(&dx, mx).unwrap();
            let fy = fit_scatter(&dy, my).unwrap();
            let probe: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
            let sx = fx.score_raw(&probe).unwrap();
            let sy = fy.score_raw(&transform(&probe)).unwrap();
            prop_assert!((sx - sy).abs() <= 1e-6 * sx.max(1e-12));
        }
    }
}
