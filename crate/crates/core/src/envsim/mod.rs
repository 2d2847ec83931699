//! Environments that generate mixed-frequency trajectories and roll out
//! policies.

mod finite;
mod sim;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use finite::FiniteMdp;
pub use sim::{make_covariance, reward, CovarianceSetting, SimConfig, SimSettings};

use crate::dataset::{MixedState, Step, Trajectory, TrajectoryDataset};
use crate::error::Result;
use crate::fqi::Policy;
use crate::scalar::Real;
use crate::seeds;

const SEED_DATA: u64 = 11;
const SEED_ROLLOUT: u64 = 12;

/// A Markov decision process over mixed states.
///
/// Implementations draw the same number of random variates per call
/// regardless of the action, so rollouts of different policies under the
/// same seed share their noise.
pub trait Environment: Sync {
    fn action_count(&self) -> usize;
    fn gamma(&self) -> f64;
    fn initial_state(&self, rng: &mut ChaCha8Rng) -> MixedState<f64>;
    /// Next state and the reward for taking `action` in `state`.
    fn step(&self, state: &MixedState<f64>, action: usize, rng: &mut ChaCha8Rng) -> (MixedState<f64>, f64);
}

fn convert<T: Real>(s: &MixedState<f64>) -> MixedState<T> {
    MixedState {
        x: s.x.iter().map(|&v| T::lit(v)).collect(),
        z: s.z.iter().map(|&v| T::lit(v)).collect(),
        block_lengths: s.block_lengths.clone(),
    }
}

/// `n_traj` trajectories of length `horizon` under the uniform behavior
/// policy. `r_max` is the largest observed |reward| plus 10%.
pub fn generate_dataset<T: Real, E: Environment + ?Sized>(
    env: &E,
    n_traj: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrajectoryDataset<T>> {
    let a = env.action_count();
    let trajectories: Vec<Trajectory<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[SEED_DATA, i as u64]));
            let mut state = env.initial_state(&mut rng);
            let mut steps = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let action = rng.random_range(0..a);
                let (next, reward) = env.step(&state, action, &mut rng);
                steps.push(Step {
                    state: std::mem::replace(&mut state, next),
                    action,
                    reward,
                });
            }
            Trajectory {
                id: i.to_string(),
                steps,
            }
        })
        .collect();
    let observed = trajectories
        .iter()
        .flat_map(|t| &t.steps)
        .fold(0.0f64, |m, s| m.max(s.reward.abs()));
    // all-zero rewards still need a positive bound
    let r_max = if observed > 0.0 { 1.1 * observed } else { 1.0 };
    let trajectories = trajectories
        .into_iter()
        .map(|t| Trajectory {
            id: t.id,
            steps: t
                .steps
                .into_iter()
                .map(|s| Step {
                    state: convert(&s.state),
                    action: s.action,
                    reward: T::lit(s.reward),
                })
                .collect(),
        })
        .collect();
    TrajectoryDataset::new(trajectories, a, T::lit(r_max))
}

/// Discounted returns `Σ_{t<t_mc} γ^t r_t` of `n_mc` trajectories that follow
/// `policy`. Trajectory `i` uses its own stream derived from `(seed, i)`.
pub fn rollout<T: Real, E: Environment + ?Sized, P: Policy<T> + ?Sized>(
    env: &E,
    policy: &P,
    n_mc: usize,
    t_mc: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let gamma = env.gamma();
    (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[SEED_ROLLOUT, i as u64]));
            let mut state = env.initial_state(&mut rng);
            let mut total = 0.0;
            let mut discount = 1.0;
            for _ in 0..t_mc {
                let action = policy.act(&convert(&state))?;
                let (next, r) = env.step(&state, action, &mut rng);
                total += discount * r;
                discount *= gamma;
                state = next;
            }
            Ok(total)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_reward_returns_geometric_sum() {
        let env = FiniteMdp::constant_reward(1.0, 0.5);
        let returns = rollout::<f64, _, _>(&env, &|_: &MixedState<f64>| 0usize, 10, 20, 1).unwrap();
        let expected = (1.0 - 0.5f64.powi(20)) / 0.5;
        assert!(returns.iter().all(|r| (r - expected).abs() < 1e-12));
        assert!((expected - 1.9999981).abs() < 1e-7);
    }

    #[test]
    fn zero_reward_returns_zero() {
        let env = FiniteMdp::constant_reward(0.0, 0.5);
        let returns = rollout::<f64, _, _>(&env, &|_: &MixedState<f64>| 0usize, 5, 20, 1).unwrap();
        assert!(returns.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn two_state_mdp_matches_policy_evaluation() {
        let env = FiniteMdp::two_state_example();
        let table = [1usize, 0];
        let policy = |s: &MixedState<f64>| table[FiniteMdp::decode(s)];
        let returns = rollout::<f64, _, _>(&env, &policy, 4000, 60, 3).unwrap();
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let sd = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let v = env.policy_value(&table);
        let oracle: f64 = env.initial_distribution().iter().zip(&v).map(|(p, v)| p * v).sum();
        assert!((mean - oracle).abs() < 3.0 * sd / n.sqrt(), "{mean} vs {oracle}");
    }

    #[test]
    fn uniform_behavior_policy() {
        let env = FiniteMdp::two_state_example();
        let ds = generate_dataset::<f64, _>(&env, 50, 40, 9).unwrap();
        let n = ds.transition_count() as f64 + ds.n_traj() as f64;
        let ones = ds.trajectories().iter().flat_map(|t| &t.steps).filter(|s| s.action == 1).count() as f64;
        let se = (0.25 / n).sqrt();
        assert!((ones / n - 0.5).abs() < 3.0 * se);
        let again = generate_dataset::<f64, _>(&env, 50, 40, 9).unwrap();
        assert_eq!(ds, again);
    }
}
