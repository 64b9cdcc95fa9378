//! Exact (occupancy-weighted) mixed ValueDICE objective and its gradients.

use alloc::vec::Vec;

use crate::divergence::{nu_residual, NuFunction};
use crate::math::{clip, weighted_log_sum_exp, weighted_softmax};
use crate::mdp::OccupancySystem;
use crate::valuedice::MixConfig;
use crate::{Occupancy, Policy, Result, StateActionTable, TabularMdp, CLIP_BOUND};

/// Pieces of the objective shared by its value and gradients.
struct Terms {
    /// Unclipped `nu - B nu`.
    residual: StateActionTable,
    /// `(1 - alpha) d_e + alpha d_rb`.
    mix_weights: Vec<f64>,
    /// `sum_a pi(a|s) nu(s, a)`.
    state_values: Vec<f64>,
}

impl Terms {
    fn new(mdp: &TabularMdp, policy: &Policy, nu: &NuFunction, d_e: &Occupancy, d_rb: &Occupancy, mix: MixConfig) -> Self {
        let alpha = mix.alpha;
        let mix_weights = d_e
            .as_slice()
            .iter()
            .zip(d_rb.as_slice())
            .map(|(e, r)| (1.0 - alpha) * e + alpha * r)
            .collect();
        Self {
            residual: nu_residual(mdp, policy, nu),
            mix_weights,
            state_values: nu.state_values(policy),
        }
    }

    fn clipped(&self) -> Vec<f64> {
        self.residual.as_slice().iter().map(|&x| clip(x, CLIP_BOUND)).collect()
    }
}

/// Mixed objective
///
/// ```text
/// log E_{d_mix}[e^{nu - B nu}] - (1 - alpha)(1 - gamma) E_{p0, pi}[nu] - alpha E_{d_rb}[nu - B nu]
/// ```
///
/// with `d_mix = (1 - alpha) d_e + alpha d_rb`. At `alpha = 0` this is
/// [`crate::divergence::j_dice_exact`].
pub fn j_dice_mix_exact(
    mdp: &TabularMdp,
    policy: &Policy,
    nu: &NuFunction,
    d_e: &Occupancy,
    d_rb: &Occupancy,
    mix: MixConfig,
) -> f64 {
    let terms = Terms::new(mdp, policy, nu, d_e, d_rb, mix);
    let alpha = mix.alpha;
    let log_term = weighted_log_sum_exp(&terms.mix_weights, &terms.clipped());
    let initial: f64 = mdp
        .initial_dist()
        .iter()
        .zip(&terms.state_values)
        .map(|(p, v)| p * v)
        .sum();
    let replay: f64 = if alpha > 0.0 {
        d_rb.as_slice()
            .iter()
            .zip(terms.residual.as_slice())
            .map(|(r, x)| r * x)
            .sum()
    } else {
        0.0
    };
    log_term - (1.0 - alpha) * (1.0 - mdp.gamma()) * initial - alpha * replay
}

/// Gradient of the objective with respect to the residual `x = nu - B nu`
/// and, folded back through `B`, with respect to the state values
/// `v(s) = sum_a pi(a|s) nu(s, a)`.
struct ResidualGradients {
    wrt_residual: StateActionTable,
    wrt_state_value: Vec<f64>,
    /// Softmax weights `d_mix e^x / E_{d_mix}[e^x]`, per unit of `d_mix`.
    exp_ratio: Vec<f64>,
    clipped: Vec<f64>,
}

fn residual_gradients(mdp: &TabularMdp, terms: &Terms, d_rb: &Occupancy, mix: MixConfig) -> ResidualGradients {
    let (ns, na) = mdp.shape();
    let alpha = mix.alpha;
    let gamma = mdp.gamma();
    let clipped = terms.clipped();
    let weights = weighted_softmax(&terms.mix_weights, &clipped);
    let mass: f64 = terms.mix_weights.iter().filter(|w| **w > 0.0).sum();
    let mut wrt_residual = StateActionTable::zeros(ns, na);
    let mut exp_ratio = alloc::vec![0.0; ns * na];
    for (i, g) in wrt_residual.as_mut_slice().iter_mut().enumerate() {
        let inside = terms.residual.as_slice()[i].abs() < CLIP_BOUND;
        let w = if inside { weights[i] } else { 0.0 };
        *g = w - alpha * d_rb.as_slice()[i];
        if terms.mix_weights[i] > 0.0 {
            exp_ratio[i] = weights[i] / terms.mix_weights[i] * mass;
        }
    }
    let mut wrt_state_value: Vec<f64> = mdp
        .initial_dist()
        .iter()
        .map(|p| -(1.0 - alpha) * (1.0 - gamma) * p)
        .collect();
    for s in 0..ns {
        for a in 0..na {
            let g = wrt_residual.get(s, a);
            if g != 0.0 {
                for (s2, p) in mdp.next_state_dist(s, a).iter().enumerate() {
                    wrt_state_value[s2] -= gamma * g * p;
                }
            }
        }
    }
    ResidualGradients {
        wrt_residual,
        wrt_state_value,
        exp_ratio,
        clipped,
    }
}

/// Gradient of [`j_dice_mix_exact`] with respect to every `nu` entry.
pub fn grad_nu_exact(
    mdp: &TabularMdp,
    policy: &Policy,
    nu: &NuFunction,
    d_e: &Occupancy,
    d_rb: &Occupancy,
    mix: MixConfig,
) -> StateActionTable {
    let terms = Terms::new(mdp, policy, nu, d_e, d_rb, mix);
    let grads = residual_gradients(mdp, &terms, d_rb, mix);
    let mut out = grads.wrt_residual;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            out[(s, a)] += policy.prob(s, a) * grads.wrt_state_value[s];
        }
    }
    out
}

/// Gradient of [`j_dice_mix_exact`] with respect to the policy logits,
/// holding `d_e` and `d_rb` fixed.
///
/// The policy enters through `B nu` and through the initial-state
/// expectation; both reduce to `dJ/dv(s) * pi(b|s) (nu(s, b) - v(s))`.
pub fn grad_policy_exact(
    mdp: &TabularMdp,
    policy: &Policy,
    nu: &NuFunction,
    d_e: &Occupancy,
    d_rb: &Occupancy,
    mix: MixConfig,
) -> StateActionTable {
    let terms = Terms::new(mdp, policy, nu, d_e, d_rb, mix);
    let grads = residual_gradients(mdp, &terms, d_rb, mix);
    explicit_policy_gradient(policy, nu, &terms.state_values, &grads.wrt_state_value)
}

fn explicit_policy_gradient(policy: &Policy, nu: &NuFunction, state_values: &[f64], wrt_state_value: &[f64]) -> StateActionTable {
    let (ns, na) = policy.shape();
    StateActionTable::from_fn(ns, na, |s, b| {
        wrt_state_value[s] * policy.prob(s, b) * (nu.get(s, b) - state_values[s])
    })
}

/// Value and logit gradient of the objective when the replay occupancy is
/// the policy's own exact occupancy, differentiating through the occupancy
/// solve as well as through `B nu` and the initial-state term.
pub struct CoupledPolicyGradient {
    pub value: f64,
    pub gradient: StateActionTable,
    pub occupancy: Occupancy,
}

/// [`grad_policy_exact`] with `d_rb = d_pi` treated as a function of the
/// logits (implicit differentiation of the balance system).
pub fn grad_policy_exact_coupled(
    mdp: &TabularMdp,
    policy: &Policy,
    nu: &NuFunction,
    d_e: &Occupancy,
    mix: MixConfig,
) -> Result<CoupledPolicyGradient> {
    let system = OccupancySystem::solve(mdp, policy)?;
    let d_rb = system.occupancy.clone();
    let terms = Terms::new(mdp, policy, nu, d_e, &d_rb, mix);
    let grads = residual_gradients(mdp, &terms, &d_rb, mix);
    let mut gradient = explicit_policy_gradient(policy, nu, &terms.state_values, &grads.wrt_state_value);
    let value = j_dice_mix_exact(mdp, policy, nu, d_e, &d_rb, mix);
    let alpha = mix.alpha;
    if alpha > 0.0 {
        // dJ/dd_rb through both the mixture weights and the linear replay term.
        let mass: f64 = terms.mix_weights.iter().filter(|w| **w > 0.0).sum();
        let (ns, na) = mdp.shape();
        let wrt_occupancy = StateActionTable::from_fn(ns, na, |s, a| {
            let i = s * na + a;
            let from_log = if terms.mix_weights[i] > 0.0 {
                grads.exp_ratio[i] / mass - 1.0 / mass
            } else {
                // Entry outside the mixture support: derivative of the
                // normalized log-sum-exp as its weight leaves zero.
                let z: f64 = terms
                    .mix_weights
                    .iter()
                    .zip(&grads.clipped)
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(w, x)| w * libm::exp(*x))
                    .sum();
                libm::exp(grads.clipped[i]) / z - 1.0 / mass
            };
            alpha * (from_log - terms.residual.get(s, a))
        });
        gradient.add_scaled(1.0, &system.logit_gradient(policy, &wrt_occupancy));
    }
    Ok(CoupledPolicyGradient {
        value,
        gradient,
        occupancy: d_rb,
    })
}
