//! Policy value estimation and paired comparison.

mod forest;

use std::fmt::Write as _;

pub use forest::{fit_tree, fit_tree_ensemble, ForestConfig, RegressionTree, TreeEnsembleRegressor};

use crate::dataset::{MixedState, TrajectoryDataset};
use crate::envsim::{rollout, Environment};
use crate::error::{Error, Result};
use crate::fqi::{build_features_into, FeatureVariant, Policy};
use crate::linalg::Matrix;
use crate::scalar::{fmt_exact, Real};
use crate::spectral::SpectralBasis;

/// Critical value of the two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation over `√n`; zero for fewer than two values.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Values of one policy configuration, keyed by seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
}

impl EvalReport {
    pub fn new(label: impl Into<String>, seeds: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        if seeds.len() != values.len() || values.is_empty() {
            return Err(Error::Dimension(format!(
                "{} seeds for {} values",
                seeds.len(),
                values.len()
            )));
        }
        Ok(Self {
            label: label.into(),
            seeds,
            values,
        })
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn standard_error(&self) -> f64 {
        standard_error(&self.values)
    }

    pub fn margin(&self) -> f64 {
        Z_95 * self.standard_error()
    }

    /// One `label=.. seed=.. value=..` line per seed.
    pub fn records(&self) -> String {
        let mut out = String::new();
        for (s, v) in self.seeds.iter().zip(&self.values) {
            let _ = writeln!(out, "label={} seed={s} value={}", self.label, fmt_exact(*v));
        }
        out
    }
}

/// Paired difference `a − b` over matching seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub label_a: String,
    pub label_b: String,
    pub seeds: Vec<u64>,
    pub differences: Vec<f64>,
    pub mean_difference: f64,
    pub margin: f64,
}

impl ComparisonReport {
    pub fn fraction_positive(&self) -> f64 {
        self.differences.iter().filter(|&&d| d > 0.0).count() as f64 / self.differences.len() as f64
    }

    /// Whether the interval `mean ± margin` excludes zero.
    pub fn significant(&self) -> bool {
        self.mean_difference.abs() > self.margin
    }
}

pub fn compare_policies(a: &EvalReport, b: &EvalReport) -> Result<ComparisonReport> {
    if a.seeds != b.seeds {
        return Err(Error::Pairing(format!(
            "{} and {} were evaluated on different seed lists",
            a.label, b.label
        )));
    }
    let differences: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    Ok(ComparisonReport {
        label_a: a.label.clone(),
        label_b: b.label.clone(),
        seeds: a.seeds.clone(),
        mean_difference: mean(&differences),
        margin: Z_95 * standard_error(&differences),
        differences,
    })
}

/// Monte-Carlo value: one record per rollout, keyed by trajectory index.
pub fn monte_carlo_value<T: Real, E: Environment + ?Sized, P: Policy<T> + ?Sized>(
    env: &E,
    policy: &P,
    n_mc: usize,
    t_mc: usize,
    seed: u64,
) -> Result<EvalReport> {
    let returns = rollout(env, policy, n_mc, t_mc, seed)?;
    EvalReport::new("monte-carlo", (0..n_mc as u64).collect(), returns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FqeConfig {
    pub iterations: usize,
    pub gamma: f64,
    pub forest: ForestConfig,
}

impl Default for FqeConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            gamma: 0.5,
            forest: ForestConfig::default(),
        }
    }
}

fn state_row<T: Real>(
    variant: &FeatureVariant,
    basis: Option<&SpectralBasis<T>>,
    state: &MixedState<T>,
    buf: &mut Vec<T>,
) -> Result<Vec<f64>> {
    build_features_into(variant, state, basis, buf)?;
    Ok(buf.iter().map(|v| v.as_f64()).collect())
}

/// Fitted Q evaluation of `policy` on `ds`.
///
/// `Q₀ = 0` and `Q_{k+1}(·, a)` regresses `y + γ·Q_k(s', π(s'))` on the state
/// features of the transitions that took action `a`, one forest per action.
/// The reward difference between actions is often a pure interaction with the
/// state, which a greedy split on an appended action column never picks up.
/// Every iteration refits with the same seeds. The estimate averages
/// `Q_K(s₀, π(s₀))` over `initial_states`, or over the first state of each
/// trajectory when `None`.
pub fn fitted_q_evaluation<T: Real, P: Policy<T> + ?Sized>(
    policy: &P,
    ds: &TrajectoryDataset<T>,
    basis: Option<&SpectralBasis<T>>,
    variant: &FeatureVariant,
    cfg: &FqeConfig,
    initial_states: Option<&[MixedState<T>]>,
) -> Result<f64> {
    if cfg.iterations == 0 {
        return Err(Error::Config("FQE needs at least one iteration".into()));
    }
    if !(0.0..1.0).contains(&cfg.gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", cfg.gamma)));
    }
    let n_actions = ds.action_count();
    let checked = |a: usize| {
        if a >= n_actions {
            Err(Error::ActionRange { action: a, action_count: n_actions })
        } else {
            Ok(a)
        }
    };
    let mut buf = Vec::new();
    // per action: state rows, rewards, and (next action, next row) pairs
    let mut rows = vec![Vec::new(); n_actions];
    let mut rewards = vec![Vec::new(); n_actions];
    let mut next = vec![Vec::new(); n_actions];
    for traj in ds.trajectories() {
        for pair in traj.steps.windows(2) {
            let (cur, nxt) = (&pair[0], &pair[1]);
            let a = cur.action;
            rows[a].push(state_row(variant, basis, &cur.state, &mut buf)?);
            rewards[a].push(cur.reward.as_f64());
            let a_next = checked(policy.act(&nxt.state)?)?;
            next[a].push((a_next, state_row(variant, basis, &nxt.state, &mut buf)?));
        }
    }
    let starts: Vec<MixedState<T>> = match initial_states {
        Some(s) => s.to_vec(),
        None => ds.initial_states().cloned().collect(),
    };
    let start_rows = starts
        .iter()
        .map(|s| Ok((checked(policy.act(s)?)?, state_row(variant, basis, s, &mut buf)?)))
        .collect::<Result<Vec<_>>>()?;
    let needed = next.iter().flatten().chain(&start_rows).map(|(a, _)| *a);
    for a in needed {
        if rows[a].is_empty() {
            return Err(Error::Coverage(a));
        }
    }
    let inputs: Vec<Option<Matrix<f64>>> = rows
        .iter()
        .map(|r| (!r.is_empty()).then(|| Matrix::from_rows(r)))
        .collect();
    let forest_cfg = |a: usize| ForestConfig {
        seed: crate::seeds::derive(cfg.forest.seed, &[a as u64]),
        ..cfg.forest.clone()
    };
    let mut forests: Vec<Option<TreeEnsembleRegressor>> = vec![None; n_actions];
    for _ in 0..cfg.iterations {
        let mut fitted = Vec::with_capacity(n_actions);
        for a in 0..n_actions {
            let Some(x) = &inputs[a] else {
                fitted.push(None);
                continue;
            };
            let targets: Vec<f64> = rewards[a]
                .iter()
                .zip(&next[a])
                .map(|(r, (a_next, row))| {
                    let q = forests[*a_next].as_ref().map_or(0.0, |f| f.predict(row));
                    r + cfg.gamma * q
                })
                .collect();
            fitted.push(Some(fit_tree_ensemble(x, &targets, &forest_cfg(a))?));
        }
        forests = fitted;
    }
    let values: Vec<f64> = start_rows
        .iter()
        .map(|(a, row)| forests[*a].as_ref().expect("covered action").predict(row))
        .collect();
    Ok(mean(&values))
}

/// Summary table over several reports: `label,n,mean,se,margin`.
pub fn summary_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("label,n,mean,se,margin\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.label,
            r.values.len(),
            fmt_exact(r.mean()),
            fmt_exact(r.standard_error()),
            fmt_exact(r.margin())
        );
    }
    out
}

/// Difference table: `a,b,n,mean_difference,margin,fraction_positive`.
pub fn comparison_table(reports: &[ComparisonReport]) -> String {
    let mut out = String::from("a,b,n,mean_difference,margin,fraction_positive\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.label_a,
            r.label_b,
            r.differences.len(),
            fmt_exact(r.mean_difference),
            fmt_exact(r.margin),
            fmt_exact(r.fraction_positive())
        );
    }
    out
}
