#![allow(dead_code)]

use valuedice_core::environments::{random_mdp, random_policy};
use valuedice_core::rng::seeded;
use valuedice_core::valuedice::NuFunction;
use valuedice_core::{Occupancy, Policy, StateActionTable, TabularMdp};

use rand::Rng;

/// Random instance: MDP, policy, nu and an occupancy-like target.
pub struct Instance {
    pub mdp: TabularMdp,
    pub policy: Policy,
    pub nu: NuFunction,
    pub d_e: Occupancy,
    pub d_rb: Occupancy,
}

pub fn random_occupancy(n_states: usize, n_actions: usize, seed: u64) -> Occupancy {
    let mut rng = seeded(seed);
    let w = StateActionTable::from_fn(n_states, n_actions, |_, _| rng.gen_range(0.05..1.0));
    Occupancy::from_weights(w).unwrap()
}

pub fn random_nu(n_states: usize, n_actions: usize, scale: f64, seed: u64) -> NuFunction {
    let mut rng = seeded(seed);
    NuFunction::new(StateActionTable::from_fn(n_states, n_actions, |_, _| rng.gen_range(-scale..scale))).unwrap()
}

pub fn random_instance(seed: u64, max_states: usize) -> Instance {
    let mut rng = seeded(seed ^ 0x5eed);
    let ns = rng.gen_range(2..=max_states);
    let na = rng.gen_range(1..=3);
    let branching = rng.gen_range(1..=ns);
    let mdp = random_mdp(ns, na, branching, seed).unwrap();
    Instance {
        policy: random_policy(ns, na, 2.0, seed + 1),
        nu: random_nu(ns, na, 1.0, seed + 2),
        d_e: random_occupancy(ns, na, seed + 3),
        d_rb: random_occupancy(ns, na, seed + 4),
        mdp,
    }
}

/// Central finite differences of `f` over every entry of `at`.
pub fn central_difference(at: &StateActionTable, step: f64, mut f: impl FnMut(&StateActionTable) -> f64) -> StateActionTable {
    let mut out = StateActionTable::zeros(at.n_states(), at.n_actions());
    for i in 0..at.len() {
        let mut plus = at.clone();
        plus.as_mut_slice()[i] += step;
        let mut minus = at.clone();
        minus.as_mut_slice()[i] -= step;
        out.as_mut_slice()[i] = (f(&plus) - f(&minus)) / (2.0 * step);
    }
    out
}

/// Max entrywise error relative to the larger of the two gradients' scale.
pub fn relative_error(analytic: &StateActionTable, numeric: &StateActionTable) -> f64 {
    let scale = analytic.max_abs().max(numeric.max_abs()).max(1e-8);
    analytic.max_abs_diff(numeric) / scale
}

pub fn random_policy_for(n_states: usize, n_actions: usize, seed: u64) -> Policy {
    random_policy(n_states, n_actions, 1.5, seed)
}
