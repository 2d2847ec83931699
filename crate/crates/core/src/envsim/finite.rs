use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Environment;
use crate::dataset::{MixedState, Step, Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tabular MDP whose states are one-hot vectors in the high-frequency block
/// (no low-frequency part).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    /// `transitions[s][a][s']`
    transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a]`
    rewards: Vec<Vec<f64>>,
    initial: Vec<f64>,
    gamma: f64,
    blocks: Arc<[usize]>,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{what} is not a probability vector: {p:?}")));
    }
    Ok(())
}

fn sample_index(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
}

impl FiniteMdp {
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        initial: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let n = transitions.len();
        if n == 0 || rewards.len() != n || initial.len() != n {
            return Err(Error::Dimension("transition, reward and initial tables disagree".into()));
        }
        let a = transitions[0].len();
        if a == 0 {
            return Err(Error::Config("MDP needs at least one action".into()));
        }
        for (s, row) in transitions.iter().enumerate() {
            if row.len() != a || rewards[s].len() != a {
                return Err(Error::Dimension(format!("state {s} has the wrong number of actions")));
            }
            for (act, p) in row.iter().enumerate() {
                if p.len() != n {
                    return Err(Error::Dimension(format!("P[{s}][{act}] has length {}", p.len())));
                }
                check_distribution(p, &format!("P[{s}][{act}]"))?;
            }
        }
        check_distribution(&initial, "initial distribution")?;
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        Ok(Self {
            transitions,
            rewards,
            initial,
            gamma,
            blocks: Arc::from(vec![n]),
        })
    }

    /// One state, two actions, reward `r` always.
    pub fn constant_reward(r: f64, gamma: f64) -> Self {
        Self::new(vec![vec![vec![1.0], vec![1.0]]], vec![vec![r, r]], vec![1.0], gamma).expect("valid")
    }

    /// Two states, two actions, γ = 0.5.
    pub fn two_state_example() -> Self {
        Self::new(
            vec![
                vec![vec![0.8, 0.2], vec![0.3, 0.7]],
                vec![vec![0.5, 0.5], vec![0.1, 0.9]],
            ],
            vec![vec![0.0, 1.0], vec![2.0, -1.0]],
            vec![0.5, 0.5],
            0.5,
        )
        .expect("valid")
    }

    /// Three states, two actions, γ = 0.5, transition probabilities in
    /// quarters.
    pub fn three_state_example() -> Self {
        Self::new(
            vec![
                vec![vec![0.5, 0.25, 0.25], vec![0.0, 0.75, 0.25]],
                vec![vec![0.25, 0.5, 0.25], vec![0.0, 0.0, 1.0]],
                vec![vec![1.0, 0.0, 0.0], vec![0.25, 0.25, 0.5]],
            ],
            vec![vec![1.0, 0.0], vec![-0.5, 0.5], vec![0.0, 1.0]],
            vec![1.0 / 3.0; 3],
            0.5,
        )
        .expect("valid")
    }

    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    pub fn encode<T: Real>(&self, s: usize) -> MixedState<T> {
        let mut z = vec![T::zero(); self.n_states()];
        z[s] = T::one();
        MixedState {
            x: Vec::new(),
            z,
            block_lengths: self.blocks.clone(),
        }
    }

    /// Index of the hot entry.
    pub fn decode<T: Real>(state: &MixedState<T>) -> usize {
        crate::fqi::argmax(&state.z)
    }

    /// Optimal `Q*[s][a]` by value iteration to a sup-norm change below `tol`.
    pub fn value_iteration(&self, tol: f64) -> Vec<Vec<f64>> {
        let mut q = self.rewards.clone();
        loop {
            let v: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
            let next = self.backup(&v);
            let change = next
                .iter()
                .flatten()
                .zip(q.iter().flatten())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            q = next;
            if change < tol {
                return q;
            }
        }
    }

    /// `V^π` of a deterministic policy table.
    pub fn policy_value(&self, policy: &[usize]) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states()];
        loop {
            let q = self.backup(&v);
            let next: Vec<f64> = q.iter().zip(policy).map(|(row, &a)| row[a]).collect();
            let change = next.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            v = next;
            if change < 1e-13 {
                return v;
            }
        }
    }

    fn backup(&self, v: &[f64]) -> Vec<Vec<f64>> {
        self.transitions
            .iter()
            .zip(&self.rewards)
            .map(|(rows, rs)| {
                rows.iter()
                    .zip(rs)
                    .map(|(p, r)| r + self.gamma * p.iter().zip(v).map(|(p, v)| p * v).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    /// Every `(s, a, s')` with positive probability as a two-step
    /// trajectory, repeated `P(s'|s,a)·resolution` times so that empirical
    /// frequencies equal the true probabilities. All probabilities must be
    /// multiples of `1/resolution`.
    pub fn exhaustive_dataset<T: Real>(&self, resolution: usize) -> Result<TrajectoryDataset<T>> {
        let mut trajectories = Vec::new();
        for (s, rows) in self.transitions.iter().enumerate() {
            for (a, p) in rows.iter().enumerate() {
                for (s2, &prob) in p.iter().enumerate() {
                    let copies = prob * resolution as f64;
                    if (copies - copies.round()).abs() > 1e-9 {
                        return Err(Error::Config(format!(
                            "P[{s}][{a}][{s2}] = {prob} is not a multiple of 1/{resolution}"
                        )));
                    }
                    for c in 0..copies.round() as usize {
                        trajectories.push(Trajectory {
                            id: format!("{s}-{a}-{s2}-{c}"),
                            steps: vec![
                                Step {
                                    state: self.encode(s),
                                    action: a,
                                    reward: T::lit(self.rewards[s][a]),
                                },
                                Step {
                                    state: self.encode(s2),
                                    action: 0,
                                    reward: T::zero(),
                                },
                            ],
                        });
                    }
                }
            }
        }
        let r_max = self.rewards.iter().flatten().fold(0.0f64, |m, r| m.max(r.abs()));
        TrajectoryDataset::new(trajectories, self.action_count(), T::lit(r_max.max(1e-12) * 1.1))
    }
}

impl Environment for FiniteMdp {
    fn action_count(&self) -> usize {
        self.transitions[0].len()
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> MixedState<f64> {
        self.encode(sample_index(&self.initial, rng.random()))
    }

    fn step(&self, state: &MixedState<f64>, action: usize, rng: &mut ChaCha8Rng) -> (MixedState<f64>, f64) {
        let s = Self::decode(state);
        let next = sample_index(&self.transitions[s][action], rng.random());
        (self.encode(next), self.rewards[s][action])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_iteration_satisfies_bellman() {
        let mdp = FiniteMdp::three_state_example();
        let q = mdp.value_iteration(1e-14);
        let v: Vec<f64> = q.iter().map(|r| r[0].max(r[1])).collect();
        let again = mdp.backup(&v);
        for (a, b) in q.iter().flatten().zip(again.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn policy_value_of_a_single_state() {
        let mdp = FiniteMdp::constant_reward(1.0, 0.5);
        assert!((mdp.policy_value(&[0])[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_dataset_counts() {
        let mdp = FiniteMdp::three_state_example();
        let ds = mdp.exhaustive_dataset::<f64>(4).unwrap();
        // each (s, a) contributes exactly `resolution` trajectories
        assert_eq!(ds.n_traj(), 3 * 2 * 4);
        assert!(mdp.exhaustive_dataset::<f64>(3).is_err());
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(FiniteMdp::new(vec![vec![vec![0.5]]], vec![vec![0.0]], vec![1.0], 0.5).is_err());
        assert!(FiniteMdp::new(vec![vec![vec![1.0]]], vec![vec![0.0]], vec![1.0], 1.0).is_err());
    }
}
