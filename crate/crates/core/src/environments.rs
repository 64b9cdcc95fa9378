//! Ring MDP and its experts, demonstration generation, a random MDP
//! generator for property tests, and the replay buffer.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::mdp::sample_trajectory_with;
use crate::rng::{flat_dirichlet, seeded};
use crate::valuedice::virtual_initial_states;
use crate::{Error, Occupancy, Policy, Result, StateActionTable, TabularMdp, Trajectory, Transition};

/// Default ring size.
pub const RING_STATES: usize = 8;
/// Default discount of the ring MDP.
pub const RING_GAMMA: f64 = 0.95;
/// Default replay capacity.
pub const DEFAULT_REPLAY_CAPACITY: usize = 100_000;

/// Ring action that moves to `(s + 1) mod n`.
pub const CLOCKWISE: usize = 0;
/// Ring action that moves to `(s - 1) mod n`.
pub const COUNTER_CLOCKWISE: usize = 1;

/// States on a ring with two deterministic actions; starts in state 0 with
/// discount [`RING_GAMMA`].
pub fn build_ring_mdp(n_states: usize) -> Result<TabularMdp> {
    if n_states < 3 {
        return Err(Error::Precondition(format!(
            "a ring needs at least 3 states (got {n_states})"
        )));
    }
    let mut transition = vec![0.0; n_states * 2 * n_states];
    for s in 0..n_states {
        transition[(s * 2 + CLOCKWISE) * n_states + ring_next(n_states, s, CLOCKWISE)] = 1.0;
        transition[(s * 2 + COUNTER_CLOCKWISE) * n_states + ring_next(n_states, s, COUNTER_CLOCKWISE)] = 1.0;
    }
    let mut initial = vec![0.0; n_states];
    initial[0] = 1.0;
    TabularMdp::new(n_states, 2, transition, initial, RING_GAMMA)
}

/// Successor of `state` under a ring action.
pub fn ring_next(n_states: usize, state: usize, action: usize) -> usize {
    if action == CLOCKWISE {
        (state + 1) % n_states
    } else {
        (state + n_states - 1) % n_states
    }
}

/// Stochastic ring expert: with probability `p_forward` it steps toward the
/// 1-2 region (clockwise at states 0 and 1, counter-clockwise elsewhere),
/// otherwise the other way.
pub fn stochastic_expert_policy(n_states: usize, p_forward: f64) -> Result<Policy> {
    if !(p_forward > 0.0 && p_forward < 1.0) {
        return Err(Error::Precondition(format!(
            "p_forward must lie in (0, 1) (got {p_forward})"
        )));
    }
    let logit = libm::log(p_forward / (1.0 - p_forward));
    let logits = StateActionTable::from_fn(n_states, 2, |s, a| {
        let favored = if s < 2 { CLOCKWISE } else { COUNTER_CLOCKWISE };
        if a == favored {
            logit
        } else {
            0.0
        }
    });
    Policy::from_logits(logits)
}

/// Deterministic sparse expert 0 -> 1 -> 2 -> 1 -> 2 ...; states it never
/// visits are left uniform (their behavior is undefined).
pub fn sparse_expert_policy(n_states: usize) -> Policy {
    let choice: Vec<Option<usize>> = (0..n_states)
        .map(|s| match s {
            0 | 1 => Some(CLOCKWISE),
            2 => Some(COUNTER_CLOCKWISE),
            _ => None,
        })
        .collect();
    Policy::deterministic(2, &choice)
}

/// Expert demonstrations: transitions plus the trajectories they came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExpertDataset {
    transitions: Vec<Transition>,
    source_trajectories: Vec<Trajectory>,
    /// `(trajectory, step)` of each transition.
    origin: Vec<(usize, usize)>,
}

impl ExpertDataset {
    /// Expands each trajectory into virtual-initial-state transitions.
    pub fn from_trajectories(trajectories: Vec<Trajectory>) -> Self {
        let mut transitions = Vec::new();
        let mut origin = Vec::new();
        for (i, traj) in trajectories.iter().enumerate() {
            for (t, tr) in virtual_initial_states(traj).into_iter().enumerate() {
                transitions.push(tr);
                origin.push((i, t));
            }
        }
        Self {
            transitions,
            source_trajectories: trajectories,
            origin,
        }
    }

    /// Rebuilds trajectories from a flat transition list: a transition
    /// continues the previous trajectory when its state equals the previous
    /// successor, otherwise a new trajectory starts.
    pub fn from_transitions(transitions: Vec<Transition>) -> Self {
        let mut trajectories: Vec<Trajectory> = Vec::new();
        let mut origin = Vec::with_capacity(transitions.len());
        let mut prev_next: Option<usize> = None;
        for tr in &transitions {
            if prev_next != Some(tr.state) {
                trajectories.push(Trajectory {
                    states: vec![tr.state],
                    actions: Vec::new(),
                });
            }
            let index = trajectories.len() - 1;
            let traj = &mut trajectories[index];
            origin.push((index, traj.actions.len()));
            traj.actions.push(tr.action);
            traj.states.push(tr.next_state);
            prev_next = Some(tr.next_state);
        }
        Self {
            transitions,
            source_trajectories: trajectories,
            origin,
        }
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn source_trajectories(&self) -> &[Trajectory] {
        &self.source_trajectories
    }

    /// `(trajectory index, step)` that produced transition `i`.
    pub fn origin(&self, i: usize) -> (usize, usize) {
        self.origin[i]
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Distinct episode-start states, sorted.
    pub fn initial_state_pool(&self) -> Vec<usize> {
        let mut pool: Vec<usize> = self.transitions.iter().map(|t| t.episode_start_state).collect();
        pool.sort_unstable();
        pool.dedup();
        pool
    }

    /// Distinct states appearing as `state` or `next_state`, sorted.
    pub fn visited_states(&self) -> Vec<usize> {
        let mut states: Vec<usize> = self
            .transitions
            .iter()
            .flat_map(|t| [t.state, t.next_state])
            .collect();
        states.sort_unstable();
        states.dedup();
        states
    }

    /// Frequency table of `(state, action)` over all transitions.
    pub fn empirical_occupancy(&self, n_states: usize, n_actions: usize) -> Result<Occupancy> {
        empirical_occupancy(&self.transitions, n_states, n_actions)
    }
}

/// Frequency table of `(state, action)` pairs.
pub fn empirical_occupancy(transitions: &[Transition], n_states: usize, n_actions: usize) -> Result<Occupancy> {
    if transitions.is_empty() {
        return Err(Error::Precondition(String::from(
            "empirical occupancy of an empty transition set",
        )));
    }
    let mut counts = StateActionTable::zeros(n_states, n_actions);
    for t in transitions {
        if t.state >= n_states || t.action >= n_actions {
            return Err(Error::Precondition(format!(
                "transition ({}, {}) out of range for {n_states} states, {n_actions} actions",
                t.state, t.action
            )));
        }
        counts[(t.state, t.action)] += 1.0;
    }
    Occupancy::from_weights(counts)
}

/// Samples `n_trajectories` expert trajectories of length `horizon` and
/// expands each with virtual initial states.
pub fn generate_demonstrations(
    mdp: &TabularMdp,
    expert: &Policy,
    n_trajectories: usize,
    horizon: usize,
    seed: u64,
) -> Result<ExpertDataset> {
    if n_trajectories == 0 {
        return Err(Error::Precondition(String::from(
            "n_trajectories must be at least 1",
        )));
    }
    let mut rng = seeded(seed);
    let trajectories = (0..n_trajectories)
        .map(|_| sample_trajectory_with(mdp, expert, horizon, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpertDataset::from_trajectories(trajectories))
}

/// Demonstrations of the sparse ring expert; every state lies in {0, 1, 2}.
pub fn sparse_expert_dataset(mdp: &TabularMdp, horizon: usize, n_trajectories: usize, seed: u64) -> Result<ExpertDataset> {
    if mdp.n_actions() != 2 || mdp.n_states() < 3 {
        return Err(Error::Precondition(String::from(
            "sparse expert requires a ring MDP",
        )));
    }
    if mdp.initial_dist().iter().skip(3).any(|&p| p > 0.0) {
        return Err(Error::Precondition(String::from(
            "sparse expert requires initial states within {0, 1, 2}",
        )));
    }
    generate_demonstrations(mdp, &sparse_expert_policy(mdp.n_states()), n_trajectories, horizon, seed)
}

/// Random MDP: each `(s, a)` moves to `branching` distinct uniformly chosen
/// successors with Dirichlet(1) weights; `p0` is Dirichlet(1); `gamma = 0.95`.
pub fn random_mdp(n_states: usize, n_actions: usize, branching: usize, seed: u64) -> Result<TabularMdp> {
    if branching == 0 || branching > n_states {
        return Err(Error::Precondition(format!(
            "branching must lie in 1..={n_states} (got {branching})"
        )));
    }
    let mut rng = seeded(seed);
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut candidates: Vec<usize> = (0..n_states).collect();
    for s in 0..n_states {
        for a in 0..n_actions {
            // Partial Fisher-Yates picks `branching` distinct successors.
            for i in 0..branching {
                let j = rng.gen_range(i..n_states);
                candidates.swap(i, j);
            }
            let weights = flat_dirichlet(&mut rng, branching);
            let row = &mut transition[(s * n_actions + a) * n_states..(s * n_actions + a + 1) * n_states];
            for (&succ, w) in candidates[..branching].iter().zip(weights) {
                row[succ] = w;
            }
            renormalize(row);
        }
    }
    let mut initial = flat_dirichlet(&mut rng, n_states);
    renormalize(&mut initial);
    TabularMdp::new(n_states, n_actions, transition, initial, 0.95)
}

/// Folds the rounding residue of a probability vector into its largest entry.
fn renormalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    let (imax, _) = row
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    row[imax] += 1.0 - sum;
}

/// Random logits policy with standard-normal-ish entries in `[-scale, scale]`.
pub fn random_policy(n_states: usize, n_actions: usize, scale: f64, seed: u64) -> Policy {
    let mut rng = seeded(seed);
    let logits = StateActionTable::from_fn(n_states, n_actions, |_, _| rng.gen_range(-scale..=scale));
    Policy::from_logits(logits).expect("bounded logits")
}

/// FIFO store of self-generated transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    transitions: VecDeque<Transition>,
    capacity: usize,
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_REPLAY_CAPACITY).expect("positive capacity")
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Precondition(String::from(
                "replay capacity must be positive",
            )));
        }
        Ok(Self {
            transitions: VecDeque::new(),
            capacity,
        })
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, transition: Transition) {
        if self.transitions.len() == self.capacity {
            self.transitions.pop_front();
        }
        self.transitions.push_back(transition);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.transitions.get(i)
    }

    /// Uniform draws with replacement.
    pub fn sample(&self, batch_size: usize, seed: u64) -> Result<Vec<Transition>> {
        self.sample_with(batch_size, &mut seeded(seed))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if self.transitions.is_empty() {
            return Err(Error::Precondition(String::from(
                "cannot sample from an empty replay buffer",
            )));
        }
        Ok((0..batch_size)
            .map(|_| self.transitions[rng.gen_range(0..self.transitions.len())])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute_occupancy;

    fn tr(s: usize) -> Transition {
        Transition {
            state: s,
            action: 0,
            next_state: s + 1,
            episode_start_state: s,
        }
    }

    #[test]
    fn ring_structure() {
        let mdp = build_ring_mdp(8).unwrap();
        assert_eq!(mdp.shape(), (8, 2));
        assert_eq!(mdp.transition_prob(0, CLOCKWISE, 1), 1.0);
        assert_eq!(mdp.transition_prob(0, COUNTER_CLOCKWISE, 7), 1.0);
        for s in 0..8 {
            for a in 0..2 {
                assert_eq!(mdp.next_state_dist(s, a).iter().filter(|&&p| p == 1.0).count(), 1);
            }
        }
        assert!(build_ring_mdp(2).is_err());
    }

    #[test]
    fn stochastic_expert_arrows() {
        let pi = stochastic_expert_policy(8, 0.75).unwrap();
        assert!((pi.prob(0, CLOCKWISE) - 0.75).abs() < 1e-15);
        assert!((pi.prob(0, COUNTER_CLOCKWISE) - 0.25).abs() < 1e-15);
        assert!((pi.prob(4, COUNTER_CLOCKWISE) - 0.75).abs() < 1e-15);
        assert!((pi.prob(4, CLOCKWISE) - 0.25).abs() < 1e-15);
        let half = stochastic_expert_policy(8, 0.5).unwrap();
        assert_eq!(half, Policy::uniform(8, 2));
        assert!(stochastic_expert_policy(8, 1.0).is_err());
    }

    #[test]
    fn stochastic_expert_mass_near_start() {
        let mdp = build_ring_mdp(8).unwrap();
        let d = compute_occupancy(&mdp, &stochastic_expert_policy(8, 0.75).unwrap()).unwrap();
        let marginal = d.state_marginal();
        assert!(marginal[..4].iter().sum::<f64>() > 0.5);
    }

    #[test]
    fn sparse_dataset_stays_in_region() {
        let mdp = build_ring_mdp(8).unwrap();
        for seed in 0..5 {
            let data = sparse_expert_dataset(&mdp, 40, 3, seed).unwrap();
            assert!(data.visited_states().iter().all(|&s| s <= 2));
            assert_eq!(data.initial_state_pool(), vec![0, 1, 2]);
            assert_eq!(&data.source_trajectories()[0].states[..3], &[0, 1, 2]);
        }
    }

    #[test]
    fn sparse_long_horizon_favors_one_and_two() {
        let mdp = build_ring_mdp(8).unwrap();
        let data = sparse_expert_dataset(&mdp, 200, 1, 0).unwrap();
        let d = data.empirical_occupancy(8, 2).unwrap();
        let m = d.state_marginal();
        assert!(m[1] > 0.45 && m[2] > 0.45 && m[0] < 0.01);
    }

    #[test]
    fn demonstration_count_and_determinism() {
        let mdp = build_ring_mdp(8).unwrap();
        let pi = stochastic_expert_policy(8, 0.75).unwrap();
        let a = generate_demonstrations(&mdp, &pi, 1, 5, 9).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, generate_demonstrations(&mdp, &pi, 1, 5, 9).unwrap());
    }

    #[test]
    fn from_transitions_rebuilds_chains() {
        let mdp = build_ring_mdp(8).unwrap();
        let pi = stochastic_expert_policy(8, 0.75).unwrap();
        let data = generate_demonstrations(&mdp, &pi, 3, 6, 1).unwrap();
        let rebuilt = ExpertDataset::from_transitions(data.transitions().to_vec());
        assert_eq!(rebuilt.transitions(), data.transitions());
        for i in 0..rebuilt.len() {
            let (traj, step) = rebuilt.origin(i);
            let t = &rebuilt.source_trajectories()[traj];
            assert_eq!(t.states[step], rebuilt.transitions()[i].state);
            assert_eq!(t.actions[step], rebuilt.transitions()[i].action);
        }
    }

    #[test]
    fn random_mdp_branching_one_is_deterministic() {
        let mdp = random_mdp(6, 3, 1, 4).unwrap();
        assert!(mdp.transitions().iter().all(|&p| p == 0.0 || p == 1.0));
        assert!(random_mdp(3, 2, 4, 0).is_err());
    }

    #[test]
    fn replay_fifo_eviction() {
        let mut rb = ReplayBuffer::new(2).unwrap();
        rb.push(tr(0));
        rb.push(tr(1));
        rb.push(tr(2));
        assert_eq!(rb.len(), 2);
        assert_eq!(rb.iter().map(|t| t.state).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn replay_single_item_and_empty() {
        let mut rb = ReplayBuffer::new(4).unwrap();
        assert!(matches!(rb.sample(3, 0), Err(Error::Precondition(_))));
        rb.push(tr(5));
        assert_eq!(rb.sample(7, 1).unwrap(), vec![tr(5); 7]);
        assert_eq!(rb.sample(7, 1).unwrap(), rb.sample(7, 1).unwrap());
    }
}
