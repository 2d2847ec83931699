//! Bagged regression trees.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seeds;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf_size: usize,
    /// Bootstrap sample size as a fraction of the rows, drawn with replacement.
    pub bootstrap_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            min_leaf_size: 5,
            bootstrap_fraction: 1.0,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf_size == 0 {
            return Err(Error::Config("n_trees and min_leaf_size must be at least 1".into()));
        }
        if !(self.bootstrap_fraction > 0.0) || !self.bootstrap_fraction.is_finite() {
            return Err(Error::Config(format!(
                "bootstrap fraction must be positive, got {}",
                self.bootstrap_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsembleRegressor {
    pub trees: Vec<RegressionTree>,
    pub config: ForestConfig,
}

impl TreeEnsembleRegressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Best axis-aligned split of `rows`: `(feature, threshold, sse)`.
///
/// Candidate thresholds are midpoints between consecutive distinct values;
/// both children must hold at least `min_leaf` rows. Ties keep the lowest
/// feature and threshold.
fn best_split(
    inputs: &Matrix<f64>,
    targets: &[f64],
    rows: &[usize],
    min_leaf: usize,
    order: &mut Vec<usize>,
) -> Option<(usize, f64, f64)> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = rows.iter().map(|&r| targets[r]).sum();
    let total_sq: f64 = rows.iter().map(|&r| targets[r] * targets[r]).sum();
    let parent = total_sq - total * total / n as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..inputs.cols() {
        order.clear();
        order.extend_from_slice(rows);
        order.sort_by(|&a, &b| inputs[(a, f)].total_cmp(&inputs[(b, f)]));
        let (mut left_sum, mut left_sq) = (0.0, 0.0);
        for i in 0..n - 1 {
            let y = targets[order[i]];
            left_sum += y;
            left_sq += y * y;
            let nl = i + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let (lo, hi) = (inputs[(order[i], f)], inputs[(order[i + 1], f)]);
            if lo == hi {
                continue;
            }
            let right_sum = total - left_sum;
            let right_sq = total_sq - left_sq;
            let sse = (left_sq - left_sum * left_sum / nl as f64) + (right_sq - right_sum * right_sum / nr as f64);
            if best.is_none_or(|(_, _, b)| sse < b) {
                best = Some((f, lo + 0.5 * (hi - lo), sse));
            }
        }
    }
    // a split must reduce the error
    best.filter(|&(_, _, sse)| sse < parent - 1e-12 * parent.abs().max(1.0))
}

fn grow(
    inputs: &Matrix<f64>,
    targets: &[f64],
    rows: &[usize],
    depth: usize,
    cfg: &ForestConfig,
    nodes: &mut Vec<Node>,
    scratch: &mut Vec<usize>,
) -> usize {
    let id = nodes.len();
    let mean = rows.iter().map(|&r| targets[r]).sum::<f64>() / rows.len() as f64;
    nodes.push(Node::Leaf(mean));
    if depth >= cfg.max_depth {
        return id;
    }
    let Some((feature, threshold, _)) = best_split(inputs, targets, rows, cfg.min_leaf_size, scratch) else {
        return id;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| inputs[(r, feature)] <= threshold);
    let left = grow(inputs, targets, &left_rows, depth + 1, cfg, nodes, scratch);
    let right = grow(inputs, targets, &right_rows, depth + 1, cfg, nodes, scratch);
    nodes[id] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    id
}

pub fn fit_tree(inputs: &Matrix<f64>, targets: &[f64], rows: &[usize], cfg: &ForestConfig) -> RegressionTree {
    let mut nodes = Vec::new();
    let mut scratch = Vec::with_capacity(rows.len());
    grow(inputs, targets, rows, 0, cfg, &mut nodes, &mut scratch);
    RegressionTree { nodes }
}

fn compare_rows(inputs: &Matrix<f64>, targets: &[f64], a: usize, b: usize) -> Ordering {
    inputs
        .row(a)
        .iter()
        .zip(inputs.row(b))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| targets[a].total_cmp(&targets[b]))
}

/// Fits `n_trees` trees on bootstrap resamples. Rows are put in a canonical
/// order first, so the result does not depend on the order of the input rows.
pub fn fit_tree_ensemble(inputs: &Matrix<f64>, targets: &[f64], cfg: &ForestConfig) -> Result<TreeEnsembleRegressor> {
    cfg.validate()?;
    let n = targets.len();
    if inputs.rows() != n {
        return Err(Error::Dimension(format!("{} input rows for {n} targets", inputs.rows())));
    }
    if n == 0 || n < cfg.min_leaf_size {
        return Err(Error::InsufficientData(format!(
            "{n} rows, need at least min_leaf_size = {}",
            cfg.min_leaf_size
        )));
    }
    let mut canonical: Vec<usize> = (0..n).collect();
    canonical.sort_by(|&a, &b| compare_rows(inputs, targets, a, b));
    let draws = ((cfg.bootstrap_fraction * n as f64).round() as usize).max(1);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, &[t as u64]));
            let rows: Vec<usize> = (0..draws).map(|_| canonical[rng.random_range(0..n)]).collect();
            fit_tree(inputs, targets, &rows, cfg)
        })
        .collect();
    Ok(TreeEnsembleRegressor {
        trees,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_tree(depth: usize, min_leaf: usize) -> ForestConfig {
        ForestConfig {
            n_trees: 1,
            max_depth: depth,
            min_leaf_size: min_leaf,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn constant_targets() {
        let x = Matrix::from_vec(10, 1, (0..10).map(f64::from).collect());
        let forest = fit_tree_ensemble(&x, &[3.5; 10], &ForestConfig::default()).unwrap();
        for v in [-5.0, 0.0, 4.5, 100.0] {
            assert_eq!(forest.predict(&[v]), 3.5);
        }
    }

    /// Brute force over every (feature, threshold) pair.
    fn exhaustive_split(x: &Matrix<f64>, y: &[f64], min_leaf: usize) -> (usize, f64, f64) {
        let mut best = (0, 0.0, f64::INFINITY);
        for f in 0..x.cols() {
            let mut vals: Vec<f64> = (0..x.rows()).map(|r| x[(r, f)]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = 0.5 * (w[0] + w[1]);
                let l: Vec<f64> = (0..x.rows()).filter(|&i| x[(i, f)] <= thr).map(|i| y[i]).collect();
                let r: Vec<f64> = (0..x.rows()).filter(|&i| x[(i, f)] > thr).map(|i| y[i]).collect();
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                let sse = |v: &[f64]| {
                    let m = v.iter().sum::<f64>() / v.len() as f64;
                    v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
                };
                let total = sse(&l) + sse(&r);
                if total < best.2 - 1e-12 {
                    best = (f, thr, total);
                }
            }
        }
        best
    }

    #[test]
    fn split_search_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..50 {
            let n = 6 + case % 15;
            let x = Matrix::from_vec(n, 3, (0..3 * n).map(|_| (rng.random_range(0..8) as f64) * 0.5).collect());
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let rows: Vec<usize> = (0..n).collect();
            let expected = exhaustive_split(&x, &y, 2);
            match best_split(&x, &y, &rows, 2, &mut Vec::new()) {
                Some((f, thr, sse)) => {
                    assert!((sse - expected.2).abs() < 1e-9, "case {case}");
                    assert_eq!((f, thr), (expected.0, expected.1), "case {case}");
                }
                None => assert!(expected.2.is_infinite() || expected.2 >= {
                    let m = y.iter().sum::<f64>() / n as f64;
                    y.iter().map(|a| (a - m).powi(2)).sum::<f64>() - 1e-9
                }),
            }
        }
    }

    #[test]
    fn depth_one_recovers_cluster_means() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).chain((0..10).map(|i| 5.0 + i as f64 * 0.1)).collect();
        let ys: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 + 0.01 * i as f64 } else { -3.0 }).collect();
        let x = Matrix::from_vec(20, 1, xs);
        let rows: Vec<usize> = (0..20).collect();
        let tree = fit_tree(&x, &ys, &rows, &single_tree(1, 1));
        let left_mean = ys[..10].iter().sum::<f64>() / 10.0;
        assert!((tree.predict(&[0.3]) - left_mean).abs() < 1e-12);
        assert_eq!(tree.predict(&[5.5]), -3.0);
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn predictions_stay_in_target_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_vec(60, 2, (0..120).map(|_| rng.random_range(-1.0f64..1.0)).collect());
        let y: Vec<f64> = (0..60).map(|i| (x[(i, 0)] * 3.0).sin() + x[(i, 1)]).collect();
        let forest = fit_tree_ensemble(&x, &y, &ForestConfig { n_trees: 20, ..Default::default() }).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for _ in 0..200 {
            let p = forest.predict(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }

    #[test]
    fn row_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 40;
        let x = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] - x[(i, 1)]).collect();
        let perm: Vec<usize> = (0..n).rev().collect();
        let px = Matrix::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>());
        let py: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let cfg = ForestConfig { n_trees: 10, seed: 4, ..Default::default() };
        let a = fit_tree_ensemble(&x, &y, &cfg).unwrap();
        let b = fit_tree_ensemble(&px, &py, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn respects_depth_and_leaf_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200;
        let x = Matrix::from_vec(n, 1, (0..n).map(|_| rng.random_range(0.0..1.0)).collect());
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        let rows: Vec<usize> = (0..n).collect();
        let tree = fit_tree(&x, &y, &rows, &single_tree(3, 5));
        assert!(tree.depth() <= 3);
        assert!(tree.leaf_count() <= 8);
    }

    #[test]
    fn rejects_too_little_data() {
        let x = Matrix::from_vec(3, 1, vec![0.0, 1.0, 2.0]);
        assert!(fit_tree_ensemble(&x, &[1.0, 2.0, 3.0], &ForestConfig::default()).is_err());
    }
}
