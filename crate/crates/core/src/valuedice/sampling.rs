//! Geometric time sampling and virtual initial states.

use alloc::vec::Vec;

use rand::Rng;

use crate::environments::ExpertDataset;
use crate::rng::{geometric, seeded};
use crate::{Trajectory, Transition};

/// `t ~ Geom(1 - gamma)` conditioned on `t < horizon` (by redrawing).
pub fn geometric_time_index(horizon: usize, gamma: f64, seed: u64) -> usize {
    geometric_time_index_with(horizon, gamma, &mut seeded(seed))
}

pub fn geometric_time_index_with<R: Rng + ?Sized>(horizon: usize, gamma: f64, rng: &mut R) -> usize {
    assert!(horizon >= 1, "horizon must be at least 1");
    if horizon == 1 {
        return 0;
    }
    loop {
        let t = geometric(rng, gamma);
        if t < horizon {
            return t;
        }
    }
}

/// Splits a trajectory into one virtual trajectory per step: transition `t`
/// is tagged with `s_t` as its episode start.
pub fn virtual_initial_states(trajectory: &Trajectory) -> Vec<Transition> {
    (0..trajectory.horizon())
        .map(|t| Transition {
            state: trajectory.states[t],
            action: trajectory.actions[t],
            next_state: trajectory.states[t + 1],
            episode_start_state: trajectory.states[t],
        })
        .collect()
}

/// One expert sample: a transition and the start state of the virtual
/// trajectory it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpertSample {
    pub transition: Transition,
    pub start_state: usize,
}

/// Draws a virtual start uniformly over the dataset, then a geometric
/// offset into the remaining tail of its source trajectory.
pub fn sample_expert<R: Rng + ?Sized>(data: &ExpertDataset, gamma: f64, rng: &mut R) -> ExpertSample {
    let start = rng.gen_range(0..data.len());
    let (traj_idx, step) = data.origin(start);
    let traj = &data.source_trajectories()[traj_idx];
    let offset = geometric_time_index_with(traj.horizon() - step, gamma, rng);
    let t = step + offset;
    ExpertSample {
        transition: Transition {
            state: traj.states[t],
            action: traj.actions[t],
            next_state: traj.states[t + 1],
            episode_start_state: traj.states[step],
        },
        start_state: traj.states[step],
    }
}
