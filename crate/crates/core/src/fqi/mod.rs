//! Fitted Q-iteration with principal-component state features.
//!
//! Each iteration freezes the current ensemble, forms Bellman targets
//! `Y + γ·max_a Q(S', a)` (clamped to `±v_max`), and refits one network per
//! action on the transitions that took that action. Networks are warm-started
//! from the previous iteration.

mod features;
mod io;

use std::sync::Arc;

use log::debug;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use features::{build_features, FeatureVariant};
pub(crate) use features::build_features_into;

use crate::dataset::{to_transitions, MixedState, Transition, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::neuralnet::{init_network, train_regression, NetworkArchitecture, NetworkParameters, TrainConfig, Workspace};
use crate::scalar::Real;
use crate::seeds;
use crate::spectral::SpectralBasis;

const SEED_INIT: u64 = 1;
const SEED_TRAIN: u64 = 2;
const SEED_SAMPLE: u64 = 3;

/// Seed for the initial network of `action`.
pub fn init_seed(seed: u64, action: usize) -> u64 {
    seeds::derive(seed, &[SEED_INIT, action as u64])
}

/// Seed for the inner regression of `action` at iteration `k` (1-based).
pub fn train_seed(seed: u64, k: usize, action: usize) -> u64 {
    seeds::derive(seed, &[SEED_TRAIN, k as u64, action as u64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FqiConfig {
    pub iterations: usize,
    /// Transitions sampled per iteration; `None` uses all `N(T−1)`.
    pub sample_size: Option<usize>,
    pub gamma: f64,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for FqiConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            sample_size: None,
            gamma: 0.5,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl FqiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("FQI needs at least one iteration".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.sample_size == Some(0) {
            return Err(Error::Config("sample size must be positive".into()));
        }
        self.train.validate()
    }
}

/// One network per action: the Q-function iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct QEnsemble<T> {
    pub networks: Vec<NetworkParameters<T>>,
    pub arch: NetworkArchitecture<T>,
    pub gamma: T,
    pub variant: FeatureVariant,
    pub basis: Option<Arc<SpectralBasis<T>>>,
}

impl<T: Real> QEnsemble<T> {
    pub fn action_count(&self) -> usize {
        self.networks.len()
    }

    pub fn v_max(&self) -> T {
        self.arch.v_max
    }

    pub fn features(&self, state: &MixedState<T>) -> Result<Vec<T>> {
        build_features(&self.variant, state, self.basis.as_deref())
    }

    /// Eval-mode Q-values of every action for a feature vector.
    pub fn q_values_of_features(&self, features: &[T]) -> Vec<T> {
        let mut ws = Workspace::new(&self.arch);
        self.networks
            .iter()
            .map(|n| n.predict_ws(&self.arch, features, &mut ws))
            .collect()
    }

    pub fn q_values(&self, state: &MixedState<T>) -> Result<Vec<T>> {
        let f = self.features(state)?;
        if f.len() != self.arch.input_dim {
            return Err(Error::Dimension(format!(
                "state features have length {}, ensemble expects {}",
                f.len(),
                self.arch.input_dim
            )));
        }
        Ok(self.q_values_of_features(&f))
    }

    pub fn greedy_action(&self, state: &MixedState<T>) -> Result<usize> {
        Ok(argmax(&self.q_values(state)?))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A deterministic decision rule over mixed states.
pub trait Policy<T>: Sync {
    fn act(&self, state: &MixedState<T>) -> Result<usize>;
}

impl<T, F> Policy<T> for F
where
    F: Fn(&MixedState<T>) -> usize + Sync,
{
    fn act(&self, state: &MixedState<T>) -> Result<usize> {
        Ok(self(state))
    }
}

/// `argmax_a Q(s, a)` under a frozen ensemble.
#[derive(Debug, Clone)]
pub struct GreedyPolicy<T> {
    pub ensemble: Arc<QEnsemble<T>>,
}

impl<T: Real> GreedyPolicy<T> {
    pub fn new(ensemble: Arc<QEnsemble<T>>) -> Self {
        Self { ensemble }
    }
}

impl<T: Real> Policy<T> for GreedyPolicy<T> {
    fn act(&self, state: &MixedState<T>) -> Result<usize> {
        self.ensemble.greedy_action(state)
    }
}

/// Free-function form of [`QEnsemble::greedy_action`].
pub fn greedy_action<T: Real>(q: &QEnsemble<T>, state: &MixedState<T>) -> Result<usize> {
    q.greedy_action(state)
}

/// Bellman optimality targets `Y + γ·max_a Q(S', a)`, clamped to `±v_max`.
pub fn bellman_targets<T: Real>(q: &QEnsemble<T>, transitions: &[Transition<'_, T>]) -> Result<Vec<T>> {
    let mut ws = Workspace::new(&q.arch);
    let mut feat = Vec::new();
    transitions
        .iter()
        .map(|tr| {
            build_features_into(&q.variant, tr.next_state, q.basis.as_deref(), &mut feat)?;
            Ok(backup(q, &feat, tr.reward, &mut ws))
        })
        .collect()
}

fn backup<T: Real>(q: &QEnsemble<T>, next_features: &[T], reward: T, ws: &mut Workspace<T>) -> T {
    let best = q
        .networks
        .iter()
        .map(|n| n.predict_ws(&q.arch, next_features, ws))
        .fold(T::neg_infinity(), T::max);
    let v = q.v_max();
    (reward + q.gamma * best).max(-v).min(v)
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats<T> {
    pub iteration: usize,
    pub mean_target: T,
    /// Best training MSE per action (`None` when the action had no samples).
    pub train_loss: Vec<Option<T>>,
}

#[derive(Debug, Clone)]
pub struct FqiOutcome<T> {
    pub ensemble: Arc<QEnsemble<T>>,
    pub policy: GreedyPolicy<T>,
    pub history: Vec<IterationStats<T>>,
}

/// Fitted Q-iteration over `ds`.
///
/// `arch` must already match `variant` (see [`FeatureVariant::architecture`]);
/// its `v_max` bounds every prediction and target.
pub fn spectral_fqi<T: Real>(
    ds: &TrajectoryDataset<T>,
    variant: FeatureVariant,
    basis: Option<Arc<SpectralBasis<T>>>,
    arch: &NetworkArchitecture<T>,
    cfg: &FqiConfig,
) -> Result<FqiOutcome<T>> {
    cfg.validate()?;
    variant.validate()?;
    arch.validate()?;
    if variant.needs_basis() && basis.is_none() {
        return Err(Error::Config(format!("variant {variant} needs a spectral basis")));
    }
    let expected = variant.feature_dim(ds.m0(), ds.block_lengths());
    if arch.input_dim != expected {
        return Err(Error::Dimension(format!(
            "architecture input {} does not match {variant} features ({expected})",
            arch.input_dim
        )));
    }
    let n_actions = ds.action_count();
    let transitions = to_transitions(ds);
    let mut counts = vec![0usize; n_actions];
    for tr in &transitions {
        counts[tr.action] += 1;
    }
    if let Some(a) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Coverage(a));
    }

    // features of every state, row i·T + t
    let horizon = ds.horizon();
    let mut features = Matrix::zeros(ds.n_traj() * horizon, expected);
    let mut buf = Vec::with_capacity(expected);
    for (row, state) in ds.states().enumerate() {
        build_features_into(&variant, state, basis.as_deref(), &mut buf)?;
        features.row_mut(row).copy_from_slice(&buf);
    }
    let state_row = |k: usize| (k / (horizon - 1)) * horizon + k % (horizon - 1);

    let gamma = T::lit(cfg.gamma);
    let mut ensemble = QEnsemble {
        networks: (0..n_actions)
            .map(|a| init_network(arch, init_seed(cfg.seed, a)))
            .collect(),
        arch: arch.clone(),
        gamma,
        variant,
        basis,
    };
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, &[SEED_SAMPLE]));
    let mut history = Vec::with_capacity(cfg.iterations);
    let all: Vec<usize> = (0..transitions.len()).collect();

    for k in 1..=cfg.iterations {
        let chosen: Vec<usize> = match cfg.sample_size {
            Some(n) if n < transitions.len() => {
                let mut idx = index::sample(&mut sample_rng, transitions.len(), n).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => all.clone(),
        };
        // targets from the frozen iterate
        let mut ws = Workspace::new(arch);
        let targets: Vec<T> = chosen
            .iter()
            .map(|&j| {
                let next = features.row(state_row(j) + 1);
                backup(&ensemble, next, transitions[j].reward, &mut ws)
            })
            .collect();
        let mean_target = targets.iter().copied().sum::<T>() / T::from_usize_lossy(targets.len());

        let fits: Vec<Result<Option<(NetworkParameters<T>, T)>>> = (0..n_actions)
            .into_par_iter()
            .map(|a| {
                let rows: Vec<usize> = (0..chosen.len())
                    .filter(|&i| transitions[chosen[i]].action == a)
                    .collect();
                if rows.is_empty() {
                    return Ok(None);
                }
                let mut inputs = Matrix::zeros(rows.len(), expected);
                let mut ys = Vec::with_capacity(rows.len());
                for (r, &i) in rows.iter().enumerate() {
                    inputs
                        .row_mut(r)
                        .copy_from_slice(features.row(state_row(chosen[i])));
                    ys.push(targets[i]);
                }
                let tc = TrainConfig {
                    seed: train_seed(cfg.seed, k, a),
                    ..cfg.train.clone()
                };
                let res = train_regression(ensemble.networks[a].clone(), arch, &inputs, &ys, &tc)?;
                Ok(Some((res.params, res.best_loss)))
            })
            .collect();
        let mut train_loss = Vec::with_capacity(n_actions);
        for (a, fit) in fits.into_iter().enumerate() {
            match fit? {
                Some((params, loss)) => {
                    ensemble.networks[a] = params;
                    train_loss.push(Some(loss));
                }
                None => train_loss.push(None),
            }
        }
        debug!("fqi iteration {k}: mean target {mean_target}, losses {train_loss:?}");
        history.push(IterationStats {
            iteration: k,
            mean_target,
            train_loss,
        });
    }
    let ensemble = Arc::new(ensemble);
    Ok(FqiOutcome {
        policy: GreedyPolicy::new(ensemble.clone()),
        ensemble,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Step, Trajectory};

    fn one_hot(i: usize, n: usize) -> MixedState<f64> {
        let mut z = vec![0.0; n];
        z[i] = 1.0;
        MixedState::new(vec![], z, Arc::from(vec![n])).unwrap()
    }

    fn constant_ensemble(values: &[f64], v_max: f64) -> QEnsemble<f64> {
        let arch = NetworkArchitecture::new(2, vec![1], 0.0, v_max).unwrap();
        let networks = values
            .iter()
            .map(|&c| {
                let mut p = NetworkParameters::zeros_like(&arch);
                p.layers[1].bias[0] = c;
                p
            })
            .collect();
        QEnsemble {
            networks,
            arch,
            gamma: 0.5,
            variant: FeatureVariant::All,
            basis: None,
        }
    }

    #[test]
    fn argmax_prefers_lowest_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
        assert_eq!(argmax(&[-1.0, 5.0, 5.0]), 1);
    }

    #[test]
    fn greedy_on_constant_networks() {
        let s = one_hot(0, 2);
        assert_eq!(constant_ensemble(&[1.0, 3.0], 10.0).greedy_action(&s).unwrap(), 1);
        assert_eq!(constant_ensemble(&[2.0, 2.0], 10.0).greedy_action(&s).unwrap(), 0);
    }

    #[test]
    fn single_backup() {
        let q = constant_ensemble(&[2.0, -1.0], 10.0);
        let (s0, s1) = (one_hot(0, 2), one_hot(1, 2));
        let tr = Transition {
            state: &s0,
            action: 0,
            reward: 1.0,
            next_state: &s1,
        };
        assert_eq!(bellman_targets(&q, &[tr]).unwrap(), vec![2.0]);
        let mut myopic = q.clone();
        myopic.gamma = 0.0;
        assert_eq!(bellman_targets(&myopic, &[tr]).unwrap(), vec![1.0]);
        // clamp
        let tight = constant_ensemble(&[2.0, -1.0], 1.5);
        assert_eq!(bellman_targets(&tight, &[tr]).unwrap(), vec![1.5]);
    }

    #[test]
    fn missing_action_is_a_coverage_error() {
        let blocks: Arc<[usize]> = Arc::from(vec![2usize]);
        let traj = Trajectory {
            id: "0".into(),
            steps: (0..3)
                .map(|t| Step {
                    state: MixedState::new(vec![], vec![t as f64, 1.0], blocks.clone()).unwrap(),
                    action: 0,
                    reward: 0.0,
                })
                .collect(),
        };
        let ds = TrajectoryDataset::new(vec![traj], 2, 1.0).unwrap();
        let arch = FeatureVariant::All.architecture(0, &[2], &[4], 0.0, 2.0).unwrap();
        let err = spectral_fqi(&ds, FeatureVariant::All, None, &arch, &FqiConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Coverage(1)));
    }

    #[test]
    fn config_validation() {
        let bad = FqiConfig {
            gamma: 1.0,
            ..FqiConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FqiConfig {
            iterations: 0,
            ..FqiConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
