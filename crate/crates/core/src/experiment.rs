//! Seeded experiment orchestration shared by the command-line tool and the
//! acceptance suite.

use std::sync::Arc;

use log::info;
use rayon::prelude::*;

use crate::dataset::TrajectoryDataset;
use crate::envsim::SimConfig;
use crate::error::{Error, Result};
use crate::evaluation::{compare_policies, fitted_q_evaluation, monte_carlo_value, ComparisonReport, EvalReport, FqeConfig};
use crate::fqi::{spectral_fqi, FeatureVariant, FqiConfig, FqiOutcome};
use crate::seeds;
use crate::spectral::SpectralBasis;

const SEED_DATA: u64 = 31;
const SEED_TRAIN: u64 = 32;
const SEED_MC: u64 = 33;
const SEED_FQE: u64 = 34;

/// Network and FQI settings shared by every variant.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub fqi: FqiConfig,
    /// Variance share used to pick κ for variants given without one.
    pub kappa_threshold: f64,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        Self {
            hidden: vec![15, 5, 5],
            dropout: 0.1,
            fqi: FqiConfig::default(),
            kappa_threshold: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalMode {
    MonteCarlo { n_mc: usize, t_mc: usize },
    /// Hold out `test_size` trajectories per seed and estimate by FQE on them.
    Fqe { test_size: usize, fqe: FqeConfig },
}

impl Default for EvalMode {
    fn default() -> Self {
        EvalMode::MonteCarlo { n_mc: 100, t_mc: 20 }
    }
}

/// Where each seed's data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Fresh dataset per seed.
    Simulated(Arc<SimConfig>),
    /// One dataset shared by every seed.
    Fixed(Arc<TrajectoryDataset<f64>>),
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub data: DataSource,
    pub variants: Vec<FeatureVariant>,
    pub learner: LearnerSpec,
    pub eval: EvalMode,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("variant and seed lists must be non-empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seed list has duplicates".into()));
        }
        if !(self.learner.kappa_threshold > 0.0 && self.learner.kappa_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "variance threshold must lie in (0, 1], got {}",
                self.learner.kappa_threshold
            )));
        }
        self.learner.fqi.validate()?;
        match (&self.eval, &self.data) {
            (EvalMode::MonteCarlo { .. }, DataSource::Fixed(_)) => Err(Error::Config(
                "Monte-Carlo evaluation needs a simulator".into(),
            )),
            (EvalMode::Fqe { test_size, .. }, _) if *test_size == 0 => {
                Err(Error::Config("FQE evaluation needs at least one held-out trajectory".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Seed for the dataset of experiment seed `seed`.
pub fn data_seed(seed: u64) -> u64 {
    seeds::derive(seed, &[SEED_DATA])
}

/// Replaces κ = 0 by the smallest κ reaching `threshold` of the variance.
pub fn resolve_variant(variant: FeatureVariant, basis: &SpectralBasis<f64>, threshold: f64) -> Result<FeatureVariant> {
    match variant.kappa() {
        Some(0) => Ok(variant.with_kappa(basis.select_kappa(threshold)?)),
        _ => Ok(variant),
    }
}

/// Fits the basis (when needed) on `ds` and runs FQI.
pub fn train_variant(
    ds: &TrajectoryDataset<f64>,
    variant: FeatureVariant,
    learner: &LearnerSpec,
    seed: u64,
) -> Result<FqiOutcome<f64>> {
    let basis = if variant.needs_basis() || variant.kappa() == Some(0) {
        Some(Arc::new(SpectralBasis::fit(ds)?))
    } else {
        None
    };
    let variant = match &basis {
        Some(b) => resolve_variant(variant, b, learner.kappa_threshold)?,
        None => variant,
    };
    let basis = basis.filter(|_| variant.needs_basis());
    let v_max = ds.r_max() / (1.0 - learner.fqi.gamma);
    let arch = variant.architecture(ds.m0(), ds.block_lengths(), &learner.hidden, learner.dropout, v_max)?;
    let cfg = FqiConfig {
        seed,
        ..learner.fqi.clone()
    };
    spectral_fqi(ds, variant, basis, &arch, &cfg)
}

/// Lexicographically `index`-th `k`-subset of `0..n` (wrapping modulo C(n, k)).
pub fn nth_combination(n: usize, k: usize, index: u64) -> Vec<usize> {
    let binom = |n: usize, k: usize| -> u64 {
        if k > n {
            return 0;
        }
        (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
    };
    let total = binom(n, k).max(1);
    let mut rank = index % total;
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        loop {
            let rest = binom(n - next - 1, k - slot - 1);
            if rank < rest {
                out.push(next);
                next += 1;
                break;
            }
            rank -= rest;
            next += 1;
        }
    }
    out
}

/// Values of every variant for one seed, in variant order.
pub fn evaluate_seed(spec: &ExperimentSpec, seed: u64) -> Result<Vec<f64>> {
    let train_seed = seeds::derive(seed, &[SEED_TRAIN]);
    match (&spec.eval, &spec.data) {
        (EvalMode::MonteCarlo { n_mc, t_mc }, DataSource::Simulated(sim)) => {
            let ds = sim.generate_dataset::<f64>(data_seed(seed))?;
            let mc_seed = seeds::derive(seed, &[SEED_MC]);
            spec.variants
                .iter()
                .map(|&v| {
                    let out = train_variant(&ds, v, &spec.learner, train_seed)?;
                    Ok(monte_carlo_value(sim.as_ref(), &out.policy, *n_mc, *t_mc, mc_seed)?.mean())
                })
                .collect()
        }
        (EvalMode::Fqe { test_size, fqe }, source) => {
            let ds = match source {
                DataSource::Simulated(sim) => Arc::new(sim.generate_dataset::<f64>(data_seed(seed))?),
                DataSource::Fixed(ds) => ds.clone(),
            };
            if *test_size >= ds.n_traj() {
                return Err(Error::Config(format!(
                    "cannot hold out {test_size} of {} trajectories",
                    ds.n_traj()
                )));
            }
            let held_out = nth_combination(ds.n_traj(), *test_size, seed);
            let (test, train) = ds.split(&held_out)?;
            let fqe = FqeConfig {
                forest: crate::evaluation::ForestConfig {
                    seed: seeds::derive(seed, &[SEED_FQE]),
                    ..fqe.forest.clone()
                },
                ..fqe.clone()
            };
            spec.variants
                .iter()
                .map(|&v| {
                    let out = train_variant(&train, v, &spec.learner, train_seed)?;
                    let ens = &out.ensemble;
                    fitted_q_evaluation(&out.policy, &test, ens.basis.as_deref(), &ens.variant, &fqe, None)
                })
                .collect()
        }
        (EvalMode::MonteCarlo { .. }, DataSource::Fixed(_)) => {
            Err(Error::Config("Monte-Carlo evaluation needs a simulator".into()))
        }
    }
}

/// One report per variant over all seeds; seeds run in parallel and are
/// merged in seed-list order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<EvalReport>> {
    spec.validate()?;
    let per_seed: Vec<Vec<f64>> = spec
        .seeds
        .par_iter()
        .map(|&s| {
            let values = evaluate_seed(spec, s)?;
            info!("seed {s}: {values:?}");
            Ok(values)
        })
        .collect::<Result<_>>()?;
    spec.variants
        .iter()
        .enumerate()
        .map(|(j, v)| {
            EvalReport::new(
                v.to_string(),
                spec.seeds.clone(),
                per_seed.iter().map(|vals| vals[j]).collect(),
            )
        })
        .collect()
}

/// Paired differences of the first report against each of the others.
pub fn compare_against_first(reports: &[EvalReport]) -> Result<Vec<ComparisonReport>> {
    let Some((first, rest)) = reports.split_first() else {
        return Ok(Vec::new());
    };
    rest.iter().map(|r| compare_policies(first, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_enumerate_in_order() {
        assert_eq!(nth_combination(4, 2, 0), vec![0, 1]);
        assert_eq!(nth_combination(4, 2, 1), vec![0, 2]);
        assert_eq!(nth_combination(4, 2, 5), vec![2, 3]);
        assert_eq!(nth_combination(4, 2, 6), vec![0, 1]);
        let all: std::collections::BTreeSet<Vec<usize>> = (0..220).map(|i| nth_combination(12, 3, i)).collect();
        assert_eq!(all.len(), 220);
    }

    #[test]
    fn experiment_spec_validation() {
        let sim = Arc::new(SimConfig::from_settings(Default::default()).unwrap());
        let spec = ExperimentSpec {
            data: DataSource::Simulated(sim),
            variants: vec![],
            learner: LearnerSpec::default(),
            eval: EvalMode::default(),
            seeds: vec![0],
        };
        assert!(spec.validate().is_err());
        let dup = ExperimentSpec {
            variants: vec![FeatureVariant::All],
            seeds: vec![1, 1],
            ..spec
        };
        assert!(dup.validate().is_err());
    }
}
