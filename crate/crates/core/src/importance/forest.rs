//! Random forest of CART classification trees with Gini importance.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ImportanceMethod, ImportanceReport, Step5Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Nodes with at most this many samples become leaves.
    pub min_node_size: usize,
    /// Features tried per split; `None` means floor(sqrt(p)).
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_node_size: 2,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        counts: [usize; 2],
        /// Node-fraction-weighted impurity decrease.
        decrease: f64,
    },
}

impl Node {
    pub fn counts(&self) -> [usize; 2] {
        match self {
            Node::Leaf { counts } | Node::Split { counts, .. } => *counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    /// Number of times each row was drawn into the bootstrap sample.
    in_bag: Vec<u32>,
    n_features: usize,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn in_bag(&self) -> &[u32] {
        &self.in_bag
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return u8::from(counts[1] >= counts[0]),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let Node::Split {
                feature, decrease, ..
            } = node
            {
                imp[*feature] += decrease;
            }
        }
        imp
    }

    /// Root impurity minus the sample-weighted impurity of the leaves.
    pub fn total_decrease(&self) -> f64 {
        let root = self.nodes[0].counts();
        let n = (root[0] + root[1]) as f64;
        let leaves: f64 = self
            .nodes
            .iter()
            .filter_map(|node| match node {
                Node::Leaf { counts } => Some((counts[0] + counts[1]) as f64 / n * gini(*counts)),
                _ => None,
            })
            .sum();
        gini(root) - leaves
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    params: ForestParams,
    names: Vec<String>,
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    /// Majority vote; ties go to the anomalous class.
    pub fn predict(&self, x: &[f64]) -> u8 {
        let ones = self.trees.iter().filter(|t| t.predict(x) == 1).count();
        u8::from(2 * ones >= self.trees.len())
    }

    pub fn accuracy(&self, data: &Step5Dataset) -> f64 {
        let correct = (0..data.n_rows())
            .filter(|&i| self.predict(data.row(i)) == data.targets()[i])
            .count();
        correct as f64 / data.n_rows() as f64
    }

    /// Accuracy of out-of-bag votes over the rows left out by at least one tree.
    pub fn oob_accuracy(&self, data: &Step5Dataset) -> Option<f64> {
        let mut scored = 0usize;
        let mut correct = 0usize;
        for i in 0..data.n_rows() {
            let mut votes = [0usize; 2];
            for t in self.trees.iter().filter(|t| t.in_bag[i] == 0) {
                votes[t.predict(data.row(i)) as usize] += 1;
            }
            if votes[0] + votes[1] == 0 {
                continue;
            }
            scored += 1;
            if u8::from(votes[1] >= votes[0]) == data.targets()[i] {
                correct += 1;
            }
        }
        (scored > 0).then(|| correct as f64 / scored as f64)
    }

    /// Mean over trees of the per-feature impurity decrease.
    pub fn importances(&self) -> Vec<f64> {
        let p = self.names.len();
        let mut imp = vec![0.0; p];
        for t in &self.trees {
            for (a, b) in imp.iter_mut().zip(t.importances()) {
                *a += b;
            }
        }
        imp.iter_mut().for_each(|v| *v /= self.trees.len() as f64);
        imp
    }
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

/// Midpoint of `a < b` that still separates them after rounding.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + 0.5 * (b - a);
    if m < b {
        m
    } else {
        a
    }
}

fn class_counts(rows: &[usize], y: &[u8]) -> [usize; 2] {
    let mut c = [0usize; 2];
    for &r in rows {
        c[y[r] as usize] += 1;
    }
    c
}

struct Builder<'a> {
    data: &'a Step5Dataset,
    q: usize,
    min_node_size: usize,
    n_boot: f64,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

impl Builder<'_> {
    fn grow(&mut self, rows: &mut [usize], rng: &mut ChaCha8Rng) -> usize {
        let y = self.data.targets();
        let counts = class_counts(rows, y);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        if rows.len() <= self.min_node_size || counts[0] == 0 || counts[1] == 0 {
            return id;
        }
        let Some(best) = self.best_split(rows, counts, rng) else {
            return id;
        };
        // Stable partition keeps the subtree independent of sort internals.
        let (mut l, mut r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.data.get(i, best.feature) <= best.threshold);
        debug_assert_eq!(l.len(), best.n_left);
        let left = self.grow(&mut l, rng);
        let right = self.grow(&mut r, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            counts,
            decrease: rows.len() as f64 / self.n_boot * best.gain,
        };
        id
    }

    fn best_split(&self, rows: &[usize], counts: [usize; 2], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let p = self.data.n_features();
        let y = self.data.targets();
        let n = rows.len();
        let parent = gini(counts);
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(n);
        for feature in sample(rng, p, self.q).into_iter() {
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.data.get(r, feature), y[r])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0usize; 2];
            for k in 0..n - 1 {
                left[pairs[k].1 as usize] += 1;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let nl = k + 1;
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let child = (nl as f64 * gini(left) + (n - nl) as f64 * gini(right)) / n as f64;
                let gain = parent - child;
                if gain > 1e-15 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        feature,
                        threshold: midpoint(pairs[k].0, pairs[k + 1].0),
                        gain,
                        n_left: nl,
                    });
                }
            }
        }
        best
    }
}

fn grow_tree(data: &Step5Dataset, q: usize, min_node_size: usize, seed: u64) -> Tree {
    let n = data.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_bag = vec![0u32; n];
    let mut rows: Vec<usize> = (0..n)
        .map(|_| {
            let r = rng.random_range(0..n);
            in_bag[r] += 1;
            r
        })
        .collect();
    rows.sort_unstable();
    let mut b = Builder {
        data,
        q,
        min_node_size,
        n_boot: n as f64,
        nodes: Vec::new(),
    };
    b.grow(&mut rows, &mut rng);
    Tree {
        nodes: b.nodes,
        in_bag,
        n_features: data.n_features(),
    }
}

/// Trains `n_trees` trees on bootstrap samples; the result depends only on
/// the data and the parameters, not on the thread count.
pub fn train_forest(data: &Step5Dataset, params: &ForestParams) -> Result<Forest> {
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    let p = data.n_features();
    let q = params
        .max_features
        .unwrap_or_else(|| (p as f64).sqrt().floor() as usize)
        .clamp(1, p);
    let varies = (0..p).any(|j| {
        let first = data.get(0, j);
        (1..data.n_rows()).any(|i| data.get(i, j) != first)
    });
    if !varies {
        return Err(Error::DegenerateFeatures);
    }
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| master.next_u64()).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| grow_tree(data, q, params.min_node_size, s))
        .collect();
    Ok(Forest {
        trees,
        params: *params,
        names: data.names().to_vec(),
    })
}

/// Trains a forest and ranks variables by mean Gini decrease.
pub fn gini_importance(data: &Step5Dataset, params: &ForestParams) -> Result<(Forest, ImportanceReport)> {
    let forest = train_forest(data, params)?;
    let report = ImportanceReport::from_scores(ImportanceMethod::RfGini, data.names(), &forest.importances());
    Ok((forest, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("x{i}")).collect()
    }

    fn noisy(n: usize, p: usize, signal: &[usize], seed: u64) -> Step5Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::with_capacity(n * p);
        let mut targets = Vec::with_capacity(n);
        for i in 0..n {
            let y = u8::from(i % 4 == 0);
            for j in 0..p {
                let z: f64 = StandardNormal.sample(&mut rng);
                let shift = if y == 1 && signal.contains(&j) { 3.0 } else { 0.0 };
                features.push(z + shift);
            }
            targets.push(y);
        }
        Step5Dataset::from_rows(names(p), features, targets).unwrap()
    }

    #[test]
    fn separable_one_feature() {
        let x: Vec<f64> = (0..40).map(f64::from).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let d = Step5Dataset::from_rows(names(1), x, y).unwrap();
        let f = train_forest(&d, &ForestParams { n_trees: 20, ..Default::default() }).unwrap();
        assert_eq!(f.accuracy(&d), 1.0);
        for t in f.trees() {
            let Node::Split { threshold, .. } = t.nodes()[0] else {
                panic!("root should split");
            };
            // midpoint between the neighbouring in-bag values
            let in_bag: Vec<f64> = (0..40).filter(|&i| t.in_bag()[i] > 0).map(|i| i as f64).collect();
            let below = in_bag.iter().cloned().filter(|&v| v <= threshold).fold(f64::MIN, f64::max);
            let above = in_bag.iter().cloned().filter(|&v| v > threshold).fold(f64::MAX, f64::min);
            assert_eq!(threshold, 0.5 * (below + above));
            assert!(below < 20.0 && above >= 20.0);
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let d = noisy(300, 6, &[2], 1);
        let p = ForestParams { n_trees: 30, seed: 9, ..Default::default() };
        let a = train_forest(&d, &p).unwrap();
        let b = train_forest(&d, &p).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&d, &ForestParams { seed: 10, ..p }).unwrap();
        assert_ne!(a.importances(), c.importances());
    }

    #[test]
    fn recovers_planted_features() {
        let d = noisy(1000, 10, &[3, 7], 2);
        let (forest, report) = gini_importance(&d, &ForestParams { seed: 3, ..Default::default() }).unwrap();
        assert!(forest.oob_accuracy(&d).unwrap() >= 0.95);
        let mut top: Vec<usize> = report.top(2).iter().map(|r| r.index).collect();
        top.sort_unstable();
        assert_eq!(top, [3, 7]);
    }

    #[test]
    fn single_feature_takes_everything() {
        let d = noisy(200, 1, &[0], 4);
        let f = train_forest(&d, &ForestParams { n_trees: 10, ..Default::default() }).unwrap();
        let imp = f.importances();
        let per_tree: f64 = f.trees().iter().map(Tree::total_decrease).sum::<f64>() / 10.0;
        assert!((imp[0] - per_tree).abs() < 1e-12);
    }

    #[test]
    fn tree_importance_matches_impurity_bookkeeping() {
        let d = noisy(400, 5, &[1], 5);
        let f = train_forest(&d, &ForestParams { n_trees: 5, ..Default::default() }).unwrap();
        for t in f.trees() {
            let s: f64 = t.importances().iter().sum();
            assert!((s - t.total_decrease()).abs() < 1e-12);
        }
    }

    #[test]
    fn leaves_respect_stopping_rule() {
        let d = noisy(300, 4, &[0], 6);
        let f = train_forest(&d, &ForestParams { n_trees: 5, min_node_size: 10, ..Default::default() }).unwrap();
        for t in f.trees() {
            for node in t.nodes() {
                if let Node::Split { counts, .. } = node {
                    assert!(counts[0] + counts[1] > 10);
                    assert!(counts[0] > 0 && counts[1] > 0);
                }
            }
        }
    }

    #[test]
    fn constant_features_are_rejected() {
        let d = Step5Dataset::from_rows(names(2), vec![1.0; 20], (0..10).map(|i| (i % 2) as u8).collect()).unwrap();
        assert!(matches!(
            train_forest(&d, &ForestParams::default()),
            Err(Error::DegenerateFeatures)
        ));
    }
}
