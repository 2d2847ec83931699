//! Trajectory data model and the transition view used by Q-iteration.
//!
//! A state pairs a low-frequency vector `x` (length `m0`) with the
//! concatenation `z` of `J` high-frequency blocks. All states in a dataset
//! share the same layout, and every trajectory has the same length.

mod io;

use std::sync::Arc;

pub use io::{load_trajectories, save_trajectories, ColumnSchema};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct MixedState<T> {
    pub x: Vec<T>,
    pub z: Vec<T>,
    pub block_lengths: Arc<[usize]>,
}

impl<T: Real> MixedState<T> {
    pub fn new(x: Vec<T>, z: Vec<T>, block_lengths: Arc<[usize]>) -> Result<Self> {
        let state = Self {
            x,
            z,
            block_lengths,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_lengths.is_empty() || self.block_lengths.contains(&0) {
            return Err(Error::Dimension(format!(
                "block lengths must be non-empty and positive, got {:?}",
                self.block_lengths
            )));
        }
        let m: usize = self.block_lengths.iter().sum();
        if self.z.len() != m {
            return Err(Error::Dimension(format!(
                "z has length {}, blocks sum to {m}",
                self.z.len()
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn m0(&self) -> usize {
        self.x.len()
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.z.len()
    }

    /// Iterates the high-frequency blocks in order.
    pub fn blocks(&self) -> impl Iterator<Item = &[T]> + '_ {
        let mut start = 0;
        self.block_lengths.iter().map(move |&len| {
            let b = &self.z[start..start + len];
            start += len;
            b
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step<T> {
    pub state: MixedState<T>,
    pub action: usize,
    pub reward: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub id: String,
    pub steps: Vec<Step<T>>,
}

/// One `(S_t, A_t, Y_t, S_{t+1})` tuple, borrowing its states from the dataset.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a, T> {
    pub state: &'a MixedState<T>,
    pub action: usize,
    pub reward: T,
    pub next_state: &'a MixedState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset<T> {
    trajectories: Vec<Trajectory<T>>,
    action_count: usize,
    r_max: T,
    m0: usize,
    block_lengths: Arc<[usize]>,
}

impl<T: Real> TrajectoryDataset<T> {
    /// Validates and assembles a dataset. The layout (`m0`, blocks) is taken
    /// from the first state; every other state must match it.
    pub fn new(trajectories: Vec<Trajectory<T>>, action_count: usize, r_max: T) -> Result<Self> {
        let first = trajectories
            .first()
            .and_then(|t| t.steps.first())
            .ok_or_else(|| Error::InsufficientData("dataset has no trajectories".into()))?;
        let m0 = first.state.m0();
        let block_lengths = first.state.block_lengths.clone();
        if action_count == 0 {
            return Err(Error::Config("action_count must be at least 1".into()));
        }
        if !(r_max > T::zero()) || !r_max.is_finite() {
            return Err(Error::Config(format!("r_max must be positive, got {r_max}")));
        }
        let horizon = trajectories[0].steps.len();
        for traj in &trajectories {
            if traj.steps.len() != horizon {
                return Err(Error::RaggedTrajectory {
                    traj_id: traj.id.clone(),
                    len: traj.steps.len(),
                    expected: horizon,
                });
            }
        }
        if horizon < 2 {
            return Err(Error::InsufficientData(format!(
                "trajectories need at least 2 steps, got {horizon}"
            )));
        }
        for traj in &trajectories {
            for (t, step) in traj.steps.iter().enumerate() {
                step.state.validate()?;
                if step.state.m0() != m0 || step.state.block_lengths != block_lengths {
                    return Err(Error::Dimension(format!(
                        "trajectory {} step {t}: layout (m0={}, blocks={:?}) differs from (m0={m0}, blocks={:?})",
                        traj.id,
                        step.state.m0(),
                        step.state.block_lengths,
                        block_lengths
                    )));
                }
                if step.action >= action_count {
                    return Err(Error::ActionRange {
                        action: step.action,
                        action_count,
                    });
                }
                if !(step.reward.abs() <= r_max) {
                    return Err(Error::RewardBound {
                        traj_id: traj.id.clone(),
                        t,
                        reward: step.reward.as_f64(),
                        r_max: r_max.as_f64(),
                    });
                }
            }
        }
        Ok(Self {
            trajectories,
            action_count,
            r_max,
            m0,
            block_lengths,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory<T>] {
        &self.trajectories
    }

    /// Number of trajectories `N`.
    pub fn n_traj(&self) -> usize {
        self.trajectories.len()
    }

    /// Common trajectory length `T`.
    pub fn horizon(&self) -> usize {
        self.trajectories[0].steps.len()
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn m(&self) -> usize {
        self.block_lengths.iter().sum()
    }

    pub fn block_lengths(&self) -> &Arc<[usize]> {
        &self.block_lengths
    }

    pub fn states(&self) -> impl Iterator<Item = &MixedState<T>> + Clone + '_ {
        self.trajectories
            .iter()
            .flat_map(|t| t.steps.iter().map(|s| &s.state))
    }

    pub fn initial_states(&self) -> impl Iterator<Item = &MixedState<T>> + Clone + '_ {
        self.trajectories.iter().map(|t| &t.steps[0].state)
    }

    pub fn transition_count(&self) -> usize {
        self.n_traj() * (self.horizon() - 1)
    }

    /// Splits by trajectory index into `(selected, rest)`.
    pub fn split(&self, selected: &[usize]) -> Result<(Self, Self)> {
        let mut pick = Vec::new();
        let mut rest = Vec::new();
        for (i, traj) in self.trajectories.iter().enumerate() {
            if selected.contains(&i) {
                pick.push(traj.clone());
            } else {
                rest.push(traj.clone());
            }
        }
        Ok((
            Self::new(pick, self.action_count, self.r_max)?,
            Self::new(rest, self.action_count, self.r_max)?,
        ))
    }
}

/// All `N·(T−1)` transitions, trajectory-major. Transition `(i, t)` pairs the
/// state at `t` with the state at `t+1` and the reward observed at `t`.
pub fn to_transitions<T: Real>(ds: &TrajectoryDataset<T>) -> Vec<Transition<'_, T>> {
    let mut out = Vec::with_capacity(ds.transition_count());
    for traj in &ds.trajectories {
        for pair in traj.steps.windows(2) {
            out.push(Transition {
                state: &pair[0].state,
                action: pair[0].action,
                reward: pair[0].reward,
                next_state: &pair[1].state,
            });
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn tiny_dataset(n: usize, t: usize) -> TrajectoryDataset<f64> {
        let blocks: Arc<[usize]> = Arc::from(vec![2usize, 2]);
        let trajectories = (0..n)
            .map(|i| Trajectory {
                id: format!("p{i}"),
                steps: (0..t)
                    .map(|k| {
                        let v = (i * 10 + k) as f64;
                        Step {
                            state: MixedState::new(
                                vec![v, -v],
                                vec![v, v + 0.5, v + 1.0, v + 1.5],
                                blocks.clone(),
                            )
                            .unwrap(),
                            action: (i + k) % 2,
                            reward: 0.1 * k as f64,
                        }
                    })
                    .collect(),
            })
            .collect();
        TrajectoryDataset::new(trajectories, 2, 10.0).unwrap()
    }

    #[test]
    fn transition_count_and_pairing() {
        let ds = tiny_dataset(2, 3);
        let tr = to_transitions(&ds);
        assert_eq!(tr.len(), 4);
        for (k, t) in tr.iter().enumerate() {
            let (i, s) = (k / 2, k % 2);
            let steps = &ds.trajectories()[i].steps;
            assert_eq!(t.state, &steps[s].state);
            assert_eq!(t.next_state, &steps[s + 1].state);
            assert_eq!(t.action, steps[s].action);
            assert_eq!(t.reward, steps[s].reward);
        }
    }

    #[test]
    fn single_transition() {
        let ds = tiny_dataset(1, 2);
        let tr = to_transitions(&ds);
        assert_eq!(tr.len(), 1);
        assert_eq!(tr[0].next_state, &ds.trajectories()[0].steps[1].state);
    }

    #[test]
    fn rejects_ragged() {
        let ds = tiny_dataset(2, 3);
        let mut trajs = ds.trajectories().to_vec();
        trajs[0].steps.pop();
        let err = TrajectoryDataset::new(trajs, 2, 10.0).unwrap_err();
        assert!(matches!(err, Error::RaggedTrajectory { .. }), "{err}");
    }

    #[test]
    fn rejects_reward_out_of_bound() {
        let ds = tiny_dataset(1, 3);
        let mut trajs = ds.trajectories().to_vec();
        trajs[0].steps[1].reward = 11.0;
        let err = TrajectoryDataset::new(trajs, 2, 10.0).unwrap_err();
        assert!(matches!(err, Error::RewardBound { .. }));
    }

    #[test]
    fn rejects_bad_action_and_layout() {
        let ds = tiny_dataset(1, 3);
        let mut trajs = ds.trajectories().to_vec();
        trajs[0].steps[0].action = 2;
        assert!(matches!(
            TrajectoryDataset::new(trajs, 2, 10.0),
            Err(Error::ActionRange { .. })
        ));
        let mut trajs = ds.trajectories().to_vec();
        trajs[0].steps[2].state.x.push(1.0);
        assert!(matches!(
            TrajectoryDataset::new(trajs, 2, 10.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mixed_state_blocks() {
        let s = MixedState::new(vec![], vec![1.0, 2.0, 3.0], Arc::from(vec![1usize, 2])).unwrap();
        let blocks: Vec<&[f64]> = s.blocks().collect();
        assert_eq!(blocks, vec![&[1.0][..], &[2.0, 3.0][..]]);
        assert!(MixedState::new(vec![], vec![1.0f64], Arc::from(vec![2usize])).is_err());
    }
}
