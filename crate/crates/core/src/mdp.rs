//! Finite MDPs, softmax policies, exact discounted occupancies and sampling.
//!
//! The discounted occupancy of a policy is the unique solution of the
//! balance system
//!
//! ```text
//! d(s, a) = (1 - gamma) p0(s) pi(a|s) + gamma pi(a|s) sum_{s', a'} d(s', a') p(s | s', a')
//! ```
//!
//! which [`compute_occupancy`] solves directly with a dense LU factorization
//! of the `|S||A| x |S||A|` system.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Lu;
use crate::math::softmax_into;
use crate::rng::{geometric, sample_categorical, seeded};
use crate::{Error, Result, StateActionTable};

const STOCHASTIC_TOL: f64 = 1e-12;
const OCCUPANCY_SUM_TOL: f64 = 1e-9;
const BALANCE_RESIDUAL_TOL: f64 = 1e-9;

/// A finite discounted MDP `(S, A, p0, p, r, gamma)`.
///
/// Rewards are carried for completeness and default to zero; nothing in the
/// imitation code reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    initial_dist: Vec<f64>,
    gamma: f64,
    reward: StateActionTable,
}

impl TabularMdp {
    /// Builds and validates an MDP. `transition` is flattened
    /// `[state][action][next_state]`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        initial_dist: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self::new_unchecked(n_states, n_actions, transition, initial_dist, gamma);
        let report = validate_mdp(&mdp);
        if report.is_valid() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(report))
        }
    }

    /// Builds an MDP without checking invariants; see [`validate_mdp`].
    pub fn new_unchecked(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        initial_dist: Vec<f64>,
        gamma: f64,
    ) -> Self {
        Self {
            n_states,
            n_actions,
            transition,
            initial_dist,
            gamma,
            reward: StateActionTable::zeros(n_states, n_actions),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_states, self.n_actions)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward(&self) -> &StateActionTable {
        &self.reward
    }

    /// Next-state distribution `p(. | state, action)`.
    #[inline]
    pub fn next_state_dist(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.n_actions + action) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    #[inline]
    pub fn transition_prob(&self, state: usize, action: usize, next_state: usize) -> f64 {
        self.transition[(state * self.n_actions + action) * self.n_states + next_state]
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.revalidate()
    }

    pub fn with_initial_dist(mut self, initial_dist: Vec<f64>) -> Result<Self> {
        self.initial_dist = initial_dist;
        self.revalidate()
    }

    pub fn with_reward(mut self, reward: StateActionTable) -> Result<Self> {
        reward.check_shape(self.shape())?;
        self.reward = reward;
        Ok(self)
    }

    fn revalidate(self) -> Result<Self> {
        let report = validate_mdp(&self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidMdp(report))
        }
    }
}

/// One broken invariant of a [`TabularMdp`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySpace { n_states: usize, n_actions: usize },
    TransitionShape { expected: usize, found: usize },
    InitialShape { expected: usize, found: usize },
    NonFinite { location: String },
    NegativeProbability { location: String, value: f64 },
    TransitionRowSum { state: usize, action: usize, sum: f64 },
    InitialDistSum { sum: f64 },
    Gamma { gamma: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySpace {
                n_states,
                n_actions,
            } => write!(
                f,
                "state and action counts must be positive (got {n_states} states, {n_actions} actions)"
            ),
            Violation::TransitionShape { expected, found } => {
                write!(f, "transition tensor has {found} entries, expected {expected}")
            }
            Violation::InitialShape { expected, found } => {
                write!(f, "initial_dist has {found} entries, expected {expected}")
            }
            Violation::NonFinite { location } => write!(f, "non-finite value in {location}"),
            Violation::NegativeProbability { location, value } => {
                write!(f, "negative probability {value} in {location}")
            }
            Violation::TransitionRowSum { state, action, sum } => write!(
                f,
                "transition row (state {state}, action {action}) sums to {sum}, expected 1"
            ),
            Violation::InitialDistSum { sum } => {
                write!(f, "initial_dist sums to {sum}, expected 1")
            }
            Violation::Gamma { gamma } => {
                if gamma.is_nan() || *gamma >= 1.0 {
                    write!(f, "gamma must be < 1 (got {gamma})")
                } else {
                    write!(f, "gamma must be >= 0 (got {gamma})")
                }
            }
        }
    }
}

/// Every invariant an MDP violates; empty when valid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_mdp(mdp: &TabularMdp) -> ValidationReport {
    let mut violations = Vec::new();
    let (ns, na) = mdp.shape();
    if ns == 0 || na == 0 {
        violations.push(Violation::EmptySpace {
            n_states: ns,
            n_actions: na,
        });
    }
    if !(mdp.gamma >= 0.0 && mdp.gamma < 1.0) {
        violations.push(Violation::Gamma { gamma: mdp.gamma });
    }
    if mdp.initial_dist.len() != ns {
        violations.push(Violation::InitialShape {
            expected: ns,
            found: mdp.initial_dist.len(),
        });
    } else {
        check_distribution(&mdp.initial_dist, "initial_dist", &mut violations);
        let sum: f64 = mdp.initial_dist.iter().sum();
        if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
            violations.push(Violation::InitialDistSum { sum });
        }
    }
    if mdp.transition.len() != ns * na * ns {
        violations.push(Violation::TransitionShape {
            expected: ns * na * ns,
            found: mdp.transition.len(),
        });
        return ValidationReport { violations };
    }
    for s in 0..ns {
        for a in 0..na {
            let row = mdp.next_state_dist(s, a);
            check_distribution(row, &format!("transition[{s}][{a}]"), &mut violations);
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                violations.push(Violation::TransitionRowSum {
                    state: s,
                    action: a,
                    sum,
                });
            }
        }
    }
    ValidationReport { violations }
}

fn check_distribution(values: &[f64], name: &str, out: &mut Vec<Violation>) {
    for (i, &p) in values.iter().enumerate() {
        if !p.is_finite() {
            out.push(Violation::NonFinite {
                location: format!("{name}[{i}]"),
            });
        } else if p < 0.0 {
            out.push(Violation::NegativeProbability {
                location: format!("{name}[{i}]"),
                value: p,
            });
        }
    }
}

/// Tabular softmax policy: one logits row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    logits: StateActionTable,
    probs: StateActionTable,
}

/// Builds the softmax policy of a logits table, rejecting non-finite entries.
pub fn softmax_policy(logits: StateActionTable) -> Result<Policy> {
    Policy::from_logits(logits)
}

impl Policy {
    pub fn from_logits(logits: StateActionTable) -> Result<Self> {
        for s in 0..logits.n_states() {
            for a in 0..logits.n_actions() {
                if !logits.get(s, a).is_finite() {
                    return Err(Error::NonFiniteLogit {
                        state: s,
                        action: a,
                    });
                }
            }
        }
        let mut probs = StateActionTable::zeros(logits.n_states(), logits.n_actions());
        for s in 0..logits.n_states() {
            softmax_into(logits.row(s), probs.row_mut(s));
        }
        Ok(Self { logits, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self::from_logits(StateActionTable::zeros(n_states, n_actions))
            .expect("zero logits are finite")
    }

    /// Near-deterministic policy: `DETERMINISTIC_LOGIT` on the chosen action.
    /// States mapped to `None` are uniform.
    pub fn deterministic(n_actions: usize, choice: &[Option<usize>]) -> Self {
        let logits = StateActionTable::from_fn(choice.len(), n_actions, |s, a| {
            if choice[s] == Some(a) {
                crate::DETERMINISTIC_LOGIT
            } else {
                0.0
            }
        });
        Self::from_logits(logits).expect("finite logits")
    }

    pub fn logits(&self) -> &StateActionTable {
        &self.logits
    }

    pub fn probs(&self) -> &StateActionTable {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs.get(state, action)
    }

    pub fn action_dist(&self, state: usize) -> &[f64] {
        self.probs.row(state)
    }

    pub fn n_states(&self) -> usize {
        self.logits.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.logits.n_actions()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.logits.shape()
    }

    /// Highest-probability action, or `None` when the top actions are tied
    /// within `tol`.
    pub fn greedy_action(&self, state: usize, tol: f64) -> Option<usize> {
        let row = self.probs.row(state);
        let (best, &p_best) = row
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        let tied = row
            .iter()
            .enumerate()
            .any(|(a, &p)| a != best && (p_best - p).abs() <= tol);
        (!tied).then_some(best)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        sample_categorical(rng, self.action_dist(state))
    }
}

/// Discounted state-action distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    values: StateActionTable,
}

impl Occupancy {
    /// Validates nonnegativity and unit mass (within 1e-9).
    pub fn new(values: StateActionTable) -> Result<Self> {
        if let Some(v) = values.as_slice().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidOccupancy(format!(
                "entries must be finite and nonnegative (found {v})"
            )));
        }
        let sum = values.sum();
        if (sum - 1.0).abs() > OCCUPANCY_SUM_TOL {
            return Err(Error::InvalidOccupancy(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self { values })
    }

    /// Normalizes nonnegative weights into an occupancy.
    pub fn from_weights(weights: StateActionTable) -> Result<Self> {
        let sum = weights.sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidOccupancy(String::from(
                "weights must have positive total mass",
            )));
        }
        Self::new(weights.map(|w| w / sum))
    }

    pub fn values(&self) -> &StateActionTable {
        &self.values
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values.get(state, action)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    /// State marginal `sum_a d(s, a)`.
    pub fn state_marginal(&self) -> Vec<f64> {
        (0..self.values.n_states())
            .map(|s| self.values.row(s).iter().sum())
            .collect()
    }

    /// `(1 - w) self + w other`.
    pub fn mix(&self, other: &Occupancy, w: f64) -> Occupancy {
        assert_eq!(self.shape(), other.shape(), "occupancy shapes differ");
        let mut values = self.values.map(|v| (1.0 - w) * v);
        values.add_scaled(w, &other.values);
        Occupancy { values }
    }
}

/// One sampled episode prefix `(s_0, a_0, s_1, ..., s_T)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// Transitions tagged with the trajectory's first state as episode start.
    pub fn transitions(&self) -> Vec<Transition> {
        (0..self.horizon())
            .map(|t| Transition {
                state: self.states[t],
                action: self.actions[t],
                next_state: self.states[t + 1],
                episode_start_state: self.states[0],
            })
            .collect()
    }

    /// Whether every step has nonzero probability under `mdp`.
    pub fn is_feasible(&self, mdp: &TabularMdp) -> bool {
        self.states.len() == self.actions.len() + 1
            && (0..self.horizon()).all(|t| {
                let (s, a, s2) = (self.states[t], self.actions[t], self.states[t + 1]);
                s < mdp.n_states()
                    && a < mdp.n_actions()
                    && s2 < mdp.n_states()
                    && mdp.transition_prob(s, a, s2) > 0.0
            })
    }
}

/// A logged `(s, a, s')` step with the state its (possibly virtual) episode began in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub episode_start_state: usize,
}

/// Factored balance system `(I - gamma K_pi) d = (1 - gamma) p0 pi` with its
/// solution; reused for adjoint (policy-gradient) solves.
pub(crate) struct OccupancySystem {
    lu: Lu,
    pub(crate) occupancy: Occupancy,
}

impl OccupancySystem {
    pub(crate) fn solve(mdp: &TabularMdp, policy: &Policy) -> Result<Self> {
        policy.logits().check_shape(mdp.shape())?;
        let (ns, na) = mdp.shape();
        let n = ns * na;
        let gamma = mdp.gamma();
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n];
        for s in 0..ns {
            for act in 0..na {
                let row = s * na + act;
                let pi = policy.prob(s, act);
                a[row * n + row] += 1.0;
                b[row] = (1.0 - gamma) * mdp.initial_dist()[s] * pi;
                for sb in 0..ns {
                    for ab in 0..na {
                        let p = mdp.transition_prob(sb, ab, s);
                        if p != 0.0 {
                            a[row * n + sb * na + ab] -= gamma * pi * p;
                        }
                    }
                }
            }
        }
        let lu = Lu::factor(a.clone(), n)?;
        let mut d = lu.solve(&b);
        let residual = crate::linalg::mat_vec(&a, n, &d)
            .iter()
            .zip(&b)
            .fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        if !(residual < BALANCE_RESIDUAL_TOL) {
            return Err(Error::NumericalFailure(format!(
                "occupancy balance residual {residual:e} exceeds tolerance"
            )));
        }
        // Round-off can leave entries like -1e-18 on unreachable pairs.
        for v in &mut d {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let occupancy = Occupancy::new(StateActionTable::from_vec(ns, na, d)?).map_err(|e| {
            Error::NumericalFailure(format!("occupancy solve produced an invalid table: {e}"))
        })?;
        Ok(Self { lu, occupancy })
    }

    /// Gradient with respect to policy logits of `F(d_pi)`, given `dF/dd`.
    ///
    /// Solves the adjoint system for `q = g + gamma P_pi^T q` (a Q-function
    /// with reward `g`) and applies the policy-gradient identity
    /// `dF/dlogit(s, b) = d(s) pi(b|s) (q(s, b) - sum_a pi(a|s) q(s, a))`.
    pub(crate) fn logit_gradient(&self, policy: &Policy, grad_occupancy: &StateActionTable) -> StateActionTable {
        let q = self.lu.solve_transpose(grad_occupancy.as_slice());
        let (ns, na) = grad_occupancy.shape();
        let q = StateActionTable::from_vec(ns, na, q).expect("shape preserved");
        let marginal = self.occupancy.state_marginal();
        let mut out = StateActionTable::zeros(ns, na);
        for s in 0..ns {
            let v: f64 = (0..na).map(|a| policy.prob(s, a) * q.get(s, a)).sum();
            for b in 0..na {
                out.set(s, b, marginal[s] * policy.prob(s, b) * (q.get(s, b) - v));
            }
        }
        out
    }
}

/// Exact discounted occupancy of `policy` in `mdp`.
pub fn compute_occupancy(mdp: &TabularMdp, policy: &Policy) -> Result<Occupancy> {
    Ok(OccupancySystem::solve(mdp, policy)?.occupancy)
}

/// `Q(s, a) = r(s, a) + gamma sum_{s'} p(s'|s, a) sum_{a'} pi(a'|s') Q(s', a')`.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &Policy, reward: &StateActionTable) -> Result<StateActionTable> {
    reward.check_shape(mdp.shape())?;
    policy.logits().check_shape(mdp.shape())?;
    let (ns, na) = mdp.shape();
    let n = ns * na;
    let mut a = vec![0.0; n * n];
    for s in 0..ns {
        for act in 0..na {
            let row = s * na + act;
            a[row * n + row] += 1.0;
            for s2 in 0..ns {
                let p = mdp.transition_prob(s, act, s2);
                if p != 0.0 {
                    for a2 in 0..na {
                        a[row * n + s2 * na + a2] -= mdp.gamma() * p * policy.prob(s2, a2);
                    }
                }
            }
        }
    }
    let q = Lu::factor(a, n)?.solve(reward.as_slice());
    StateActionTable::from_vec(ns, na, q)
}

/// Monte-Carlo occupancy estimate: each sample rolls out a fresh trajectory
/// for `t ~ Geom(1 - gamma)` steps and records `(s_t, a_t)`.
pub fn occupancy_monte_carlo(mdp: &TabularMdp, policy: &Policy, n_samples: usize, seed: u64) -> Result<Occupancy> {
    if n_samples == 0 {
        return Err(Error::Precondition(String::from("n_samples must be at least 1")));
    }
    policy.logits().check_shape(mdp.shape())?;
    let mut rng = seeded(seed);
    let mut counts = StateActionTable::zeros(mdp.n_states(), mdp.n_actions());
    for _ in 0..n_samples {
        let mut s = sample_categorical(&mut rng, mdp.initial_dist());
        let t = geometric(&mut rng, mdp.gamma());
        for _ in 0..t {
            let a = policy.sample_action(s, &mut rng);
            s = sample_categorical(&mut rng, mdp.next_state_dist(s, a));
        }
        let a = policy.sample_action(s, &mut rng);
        counts[(s, a)] += 1.0;
    }
    Occupancy::from_weights(counts)
}

/// Samples `horizon` steps starting from `s_0 ~ p0`.
pub fn sample_trajectory(mdp: &TabularMdp, policy: &Policy, horizon: usize, seed: u64) -> Result<Trajectory> {
    sample_trajectory_with(mdp, policy, horizon, &mut seeded(seed))
}

/// [`sample_trajectory`] drawing from a caller-owned generator.
pub fn sample_trajectory_with<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::Precondition(String::from("horizon must be at least 1")));
    }
    policy.logits().check_shape(mdp.shape())?;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut s = sample_categorical(rng, mdp.initial_dist());
    states.push(s);
    for _ in 0..horizon {
        let a = policy.sample_action(s, rng);
        s = sample_categorical(rng, mdp.next_state_dist(s, a));
        actions.push(a);
        states.push(s);
    }
    Ok(Trajectory { states, actions })
}
