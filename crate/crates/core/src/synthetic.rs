//! Seeded multicollinear processes with planted mean-shift anomalies.
//!
//! Free variables follow a latent AR(1) factor model plus idiosyncratic
//! noise. Dependent variables are scaled copies of a base variable plus
//! optional noise. Anomalies are additive shifts, measured in training
//! standard deviations, placed in the test segment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{LabelVector, SeriesMatrix, SplitSpec};
use crate::error::{Error, Result};

const BURN_IN: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearGroup {
    pub base: usize,
    pub dependents: Vec<usize>,
    /// Standard deviation of the noise added to each dependent; 0 gives
    /// exact linear dependence.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAnomaly {
    /// Offset into the test segment.
    pub start: usize,
    pub length: usize,
    pub vars: Vec<usize>,
    /// Shift in units of each variable's training standard deviation.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub t_a: usize,
    pub t_b: usize,
    pub collinear_groups: Vec<CollinearGroup>,
    pub anomalies: Vec<PlantedAnomaly>,
    pub seed: u64,
    pub n_factors: usize,
    /// AR(1) coefficient of the latent factors.
    pub ar: f64,
    /// Standard deviation of factor loadings.
    pub loading: f64,
}

impl SynthConfig {
    pub fn new(n: usize, t_a: usize, t_b: usize, seed: u64) -> Self {
        Self {
            n,
            t_a,
            t_b,
            collinear_groups: Vec::new(),
            anomalies: Vec::new(),
            seed,
            n_factors: 3,
            ar: 0.5,
            loading: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 || self.t_a < 2 || self.t_b == 0 {
            return bad(format!(
                "need n >= 1, t_a >= 2, t_b >= 1 (got {}, {}, {})",
                self.n, self.t_a, self.t_b
            ));
        }
        if !(self.ar.abs() < 1.0) || !(self.loading >= 0.0) {
            return bad(format!("ar {} must be in (-1, 1), loading {} >= 0", self.ar, self.loading));
        }
        let mut dependent = vec![false; self.n];
        for g in &self.collinear_groups {
            if g.base >= self.n || !(g.noise >= 0.0) {
                return bad(format!("invalid collinear group with base {}", g.base));
            }
            for &d in &g.dependents {
                if d >= self.n || d == g.base || dependent[d] {
                    return bad(format!("invalid or repeated dependent {d}"));
                }
                dependent[d] = true;
            }
        }
        if self.collinear_groups.iter().any(|g| dependent[g.base]) {
            return bad("a base variable is also a dependent".into());
        }
        for a in &self.anomalies {
            if a.length == 0 || a.start + a.length > self.t_b {
                return bad(format!(
                    "anomaly window {}+{} outside test range 0..{}",
                    a.start, a.length, self.t_b
                ));
            }
            if a.vars.iter().any(|&v| v >= self.n) || !a.shift.is_finite() {
                return bad("anomaly references an unknown variable or non-finite shift".into());
            }
        }
        Ok(())
    }
}

/// Training rows followed by test rows, the truth labels over the whole
/// series, and the split between the two segments.
pub fn generate(cfg: &SynthConfig) -> Result<(SeriesMatrix, LabelVector, SplitSpec)> {
    cfg.validate()?;
    let n = cfg.n;
    let k = cfg.n_factors;
    let len = cfg.t_a + cfg.t_b;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let loadings: Vec<f64> = (0..n * k).map(|_| cfg.loading * normal(&mut rng)).collect();
    let means: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let scales: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut coeffs = vec![0.0; n];
    for g in &cfg.collinear_groups {
        for &d in &g.dependents {
            coeffs[d] = rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }

    let innovation = (1.0 - cfg.ar * cfg.ar).sqrt();
    let mut factors = vec![0.0; k];
    for _ in 0..BURN_IN {
        for f in factors.iter_mut() {
            *f = cfg.ar * *f + innovation * normal(&mut rng);
        }
    }
    let mut values = vec![0.0; len * n];
    for t in 0..len {
        for f in factors.iter_mut() {
            *f = cfg.ar * *f + innovation * normal(&mut rng);
        }
        let row = &mut values[t * n..(t + 1) * n];
        for (i, v) in row.iter_mut().enumerate() {
            let common: f64 = (0..k).map(|j| loadings[i * k + j] * factors[j]).sum();
            *v = means[i] + scales[i] * (common + normal(&mut rng));
        }
        for g in &cfg.collinear_groups {
            let base = row[g.base];
            for &d in &g.dependents {
                row[d] = coeffs[d] * base + g.noise * normal(&mut rng);
            }
        }
    }

    let sd: Vec<f64> = (0..n)
        .map(|i| {
            let col = (0..cfg.t_a).map(|t| values[t * n + i]);
            let m = col.clone().sum::<f64>() / cfg.t_a as f64;
            (col.map(|v| (v - m).powi(2)).sum::<f64>() / cfg.t_a as f64).sqrt()
        })
        .collect();
    let mut truth = vec![0u8; len];
    for a in &cfg.anomalies {
        for t in cfg.t_a + a.start..cfg.t_a + a.start + a.length {
            truth[t] = 1;
            for &v in &a.vars {
                values[t * n + v] += a.shift * sd[v];
            }
        }
    }

    let names = (0..n).map(|i| format!("x{i}")).collect();
    let x = SeriesMatrix::new(names, values)?;
    Ok((
        x,
        LabelVector::new(truth, "synthetic")?,
        SplitSpec { train_end: cfg.t_a },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collinearity::vif_prune;
    use crate::data::split;

    fn with_groups(seed: u64) -> SynthConfig {
        let mut cfg = SynthConfig::new(20, 5000, 1000, seed);
        cfg.collinear_groups = vec![
            CollinearGroup { base: 0, dependents: vec![15, 16, 17], noise: 0.0 },
            CollinearGroup { base: 1, dependents: vec![18, 19], noise: 0.0 },
        ];
        cfg
    }

    #[test]
    fn no_anomalies_means_no_truth() {
        let (x, truth, s) = generate(&SynthConfig::new(4, 100, 50, 1)).unwrap();
        assert_eq!(x.len(), 150);
        assert_eq!(truth.count_ones(), 0);
        assert_eq!(s.train_end, 100);
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&with_groups(3)).unwrap();
        let b = generate(&with_groups(3)).unwrap();
        assert_eq!(a.0.values(), b.0.values());
        let c = generate(&with_groups(4)).unwrap();
        assert_ne!(a.0.values(), c.0.values());
    }

    #[test]
    fn exact_dependents_are_pruned() {
        let (x, _, s) = generate(&with_groups(5)).unwrap();
        let (train, _) = split(&x, s).unwrap();
        let report = vif_prune(&train, 5.0).unwrap();
        assert!(report.removed.len() >= 5);
        assert!(report.max_final_vif() < 5.0);
    }

    #[test]
    fn truth_marks_planted_windows() {
        let mut cfg = SynthConfig::new(5, 200, 100, 2);
        cfg.anomalies = vec![PlantedAnomaly { start: 10, length: 20, vars: vec![1], shift: 6.0 }];
        let (x, truth, _) = generate(&cfg).unwrap();
        let ones: Vec<usize> = (0..300).filter(|&t| truth.as_slice()[t] == 1).collect();
        assert_eq!(ones, (210..230).collect::<Vec<_>>());
        let clean = generate(&SynthConfig { anomalies: vec![], ..cfg }).unwrap().0;
        assert!(x.get(215, 1) > clean.get(215, 1));
        assert_eq!(x.get(215, 0), clean.get(215, 0));
        assert_eq!(x.get(100, 1), clean.get(100, 1));
    }

    #[test]
    fn rejects_bad_windows() {
        let mut cfg = SynthConfig::new(3, 100, 50, 0);
        cfg.anomalies = vec![PlantedAnomaly { start: 40, length: 11, vars: vec![0], shift: 1.0 }];
        assert!(generate(&cfg).is_err());
        cfg.anomalies[0].length = 0;
        assert!(generate(&cfg).is_err());
        cfg.anomalies[0].length = 10;
        assert!(generate(&cfg).is_ok());
    }

    #[test]
    fn training_halves_are_stationary() {
        let cfg = SynthConfig::new(6, 100_000, 10, 8);
        let (x, _, _) = generate(&cfg).unwrap();
        let half = 50_000;
        for v in 0..6 {
            let col = x.variable(v);
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            let all = &col[..100_000];
            let m = mean(all);
            let sd = (all.iter().map(|a| (a - m).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
            let diff = (mean(&col[..half]) - mean(&col[half..100_000])).abs();
            assert!(diff < 0.1 * sd, "variable {v}: {diff} vs {sd}");
        }
    }
}
