//! Minibatch objective of the sampled algorithm: `J_log - J_linear` over an
//! expert batch, a replay batch and a batch of initial states.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::divergence::NuFunction;
use crate::math::{clip, weighted_log_sum_exp, weighted_softmax};
use crate::rng::seeded;
use crate::valuedice::MixConfig;
use crate::{Error, Policy, Result, StateActionTable, Transition, CLIP_BOUND};

/// Value of the minibatch objective and its two pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalObjective {
    pub value: f64,
    pub j_log: f64,
    pub j_linear: f64,
}

/// How the `nu` value of a successor (or initial) state enters.
#[derive(Debug, Clone, Copy)]
enum Successor {
    /// `nu(s', a')` for a drawn `a' ~ pi(.|s')`.
    Sampled { state: usize, action: usize },
    /// `sum_a' pi(a'|s') nu(s', a')`.
    Expected { state: usize },
}

impl Successor {
    fn value(self, policy: &Policy, nu: &NuFunction) -> f64 {
        match self {
            Successor::Sampled { state, action } => nu.get(state, action),
            Successor::Expected { state } => expected_value(policy, nu, state),
        }
    }

    fn state(self) -> usize {
        match self {
            Successor::Sampled { state, .. } | Successor::Expected { state } => state,
        }
    }
}

fn expected_value(policy: &Policy, nu: &NuFunction, state: usize) -> f64 {
    nu.values
        .row(state)
        .iter()
        .zip(policy.action_dist(state))
        .map(|(n, p)| n * p)
        .sum()
}

#[derive(Debug, Clone, Copy)]
struct Step {
    weight: f64,
    state: usize,
    action: usize,
    next: Successor,
}

/// A batch with every successor action already resolved.
struct Resolved {
    expert: Vec<Step>,
    replay: Vec<Step>,
    initial: Vec<(f64, Successor)>,
}

fn residual(step: &Step, policy: &Policy, nu: &NuFunction, gamma: f64) -> f64 {
    nu.get(step.state, step.action) - gamma * step.next.value(policy, nu)
}

/// Evaluates the objective and, when asked, its gradients with respect to
/// `nu` and the policy logits.
///
/// Logit gradients use the all-actions form of the score-function
/// identities: the derivative of `nu(s', a')` with `a' ~ pi(.|s')` is taken
/// as `pi(b|s') (nu(s', b) - v(s'))`, its exact conditional expectation.
fn evaluate(
    batch: &Resolved,
    policy: &Policy,
    nu: &NuFunction,
    mix: MixConfig,
    gamma: f64,
    with_gradients: bool,
) -> (EmpiricalObjective, Option<(StateActionTable, StateActionTable)>) {
    let alpha = mix.alpha;
    let n_exp = batch.expert.len();
    let steps: Vec<(&Step, f64)> = batch
        .expert
        .iter()
        .map(|s| (s, (1.0 - alpha) * s.weight))
        .chain(batch.replay.iter().map(|s| (s, alpha * s.weight)))
        .collect();
    let raw: Vec<f64> = steps.iter().map(|(s, _)| residual(s, policy, nu, gamma)).collect();
    let clipped: Vec<f64> = raw.iter().map(|&x| clip(x, CLIP_BOUND)).collect();
    let coeffs: Vec<f64> = steps.iter().map(|(_, c)| *c).collect();
    let mass: f64 = coeffs.iter().filter(|c| **c > 0.0).sum();
    // weighted_log_sum_exp normalizes by the mass; the objective does not.
    let j_log = weighted_log_sum_exp(&coeffs, &clipped) + libm::log(mass);

    let initial: f64 = batch
        .initial
        .iter()
        .map(|(w, succ)| w * succ.value(policy, nu))
        .sum();
    let replay_linear: f64 = batch
        .replay
        .iter()
        .zip(&raw[n_exp..])
        .map(|(s, x)| s.weight * x)
        .sum();
    let j_linear = (1.0 - alpha) * (1.0 - gamma) * initial + alpha * replay_linear;
    let objective = EmpiricalObjective {
        value: j_log - j_linear,
        j_log,
        j_linear,
    };
    if !with_gradients {
        return (objective, None);
    }

    let (ns, na) = policy.shape();
    let mut grad_nu = StateActionTable::zeros(ns, na);
    let mut grad_logits = StateActionTable::zeros(ns, na);
    let softmax = weighted_softmax(&coeffs, &clipped);
    let mut add_successor = |succ: Successor, g: f64, grad_nu: &mut StateActionTable| {
        // g is dJ/d(successor value).
        match succ {
            Successor::Sampled { state, action } => grad_nu[(state, action)] += g,
            Successor::Expected { state } => {
                for a in 0..na {
                    grad_nu[(state, a)] += g * policy.prob(state, a);
                }
            }
        }
        let s = succ.state();
        let v = expected_value(policy, nu, s);
        for b in 0..na {
            grad_logits[(s, b)] += g * policy.prob(s, b) * (nu.get(s, b) - v);
        }
    };
    for (k, (step, _)) in steps.iter().enumerate() {
        let mut g = if raw[k].abs() < CLIP_BOUND { softmax[k] } else { 0.0 };
        if k >= n_exp {
            g -= alpha * step.weight;
        }
        grad_nu[(step.state, step.action)] += g;
        add_successor(step.next, -gamma * g, &mut grad_nu);
    }
    for (w, succ) in &batch.initial {
        add_successor(*succ, -(1.0 - alpha) * (1.0 - gamma) * w, &mut grad_nu);
    }
    (objective, Some((grad_nu, grad_logits)))
}

fn check_nonempty(expert: usize, replay: usize, initial: usize) -> Result<()> {
    if expert == 0 || replay == 0 || initial == 0 {
        return Err(Error::Precondition(format!(
            "empirical objective needs nonempty batches (expert {expert}, replay {replay}, initial {initial})"
        )));
    }
    Ok(())
}

fn sampled_batch<R: Rng + ?Sized>(
    policy: &Policy,
    expert_batch: &[Transition],
    rb_batch: &[Transition],
    initial_batch: &[usize],
    rng: &mut R,
) -> Resolved {
    let resolve = |batch: &[Transition], rng: &mut R| -> Vec<Step> {
        let w = 1.0 / batch.len() as f64;
        batch
            .iter()
            .map(|t| Step {
                weight: w,
                state: t.state,
                action: t.action,
                next: Successor::Sampled {
                    state: t.next_state,
                    action: policy.sample_action(t.next_state, rng),
                },
            })
            .collect()
    };
    let expert = resolve(expert_batch, rng);
    let replay = resolve(rb_batch, rng);
    let w0 = 1.0 / initial_batch.len() as f64;
    let initial = initial_batch
        .iter()
        .map(|&s| {
            (
                w0,
                Successor::Sampled {
                    state: s,
                    action: policy.sample_action(s, rng),
                },
            )
        })
        .collect();
    Resolved {
        expert,
        replay,
        initial,
    }
}

/// Minibatch objective with successor actions `a' ~ pi(.|s')` and initial
/// actions `a_0 ~ pi(.|s_0)` drawn from `seed`:
///
/// ```text
/// J_log    = log( 1/B sum_i (1 - alpha) e^{nu(s_E, a_E) - gamma nu(s_E', a_E')} + alpha e^{nu(s, a) - gamma nu(s', a')} )
/// J_linear = 1/B sum_i (1 - alpha)(1 - gamma) nu(s_0, a_0) + alpha (nu(s, a) - gamma nu(s', a'))
/// ```
#[allow(clippy::too_many_arguments)]
pub fn j_dice_empirical(
    policy: &Policy,
    nu: &NuFunction,
    expert_batch: &[Transition],
    rb_batch: &[Transition],
    initial_batch: &[usize],
    mix: MixConfig,
    gamma: f64,
    seed: u64,
) -> Result<EmpiricalObjective> {
    check_nonempty(expert_batch.len(), rb_batch.len(), initial_batch.len())?;
    let batch = sampled_batch(policy, expert_batch, rb_batch, initial_batch, &mut seeded(seed));
    Ok(evaluate(&batch, policy, nu, mix, gamma, false).0)
}

/// Objective value with gradients with respect to `nu` and the policy logits.
#[derive(Debug, Clone)]
pub struct EmpiricalStep {
    pub objective: EmpiricalObjective,
    pub grad_nu: StateActionTable,
    pub grad_logits: StateActionTable,
}

/// [`j_dice_empirical`] plus gradients, drawing actions from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn j_dice_empirical_with_gradients<R: Rng + ?Sized>(
    policy: &Policy,
    nu: &NuFunction,
    expert_batch: &[Transition],
    rb_batch: &[Transition],
    initial_batch: &[usize],
    mix: MixConfig,
    gamma: f64,
    rng: &mut R,
) -> Result<EmpiricalStep> {
    check_nonempty(expert_batch.len(), rb_batch.len(), initial_batch.len())?;
    let batch = sampled_batch(policy, expert_batch, rb_batch, initial_batch, rng);
    let (objective, grads) = evaluate(&batch, policy, nu, mix, gamma, true);
    let (grad_nu, grad_logits) = grads.expect("gradients requested");
    Ok(EmpiricalStep {
        objective,
        grad_nu,
        grad_logits,
    })
}

/// Weighted batch element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weighted<T> {
    pub item: T,
    pub weight: f64,
}

fn expected_batch(
    expert_batch: &[Weighted<Transition>],
    rb_batch: &[Weighted<Transition>],
    initial_batch: &[Weighted<usize>],
) -> Result<Resolved> {
    let normalize = |total: f64, what: &str| -> Result<f64> {
        if total > 0.0 {
            Ok(1.0 / total)
        } else {
            Err(Error::Precondition(format!("{what} weights must have positive mass")))
        }
    };
    let steps = |batch: &[Weighted<Transition>], what: &str| -> Result<Vec<Step>> {
        let scale = normalize(batch.iter().map(|w| w.weight).sum(), what)?;
        Ok(batch
            .iter()
            .map(|w| Step {
                weight: w.weight * scale,
                state: w.item.state,
                action: w.item.action,
                next: Successor::Expected {
                    state: w.item.next_state,
                },
            })
            .collect())
    };
    let scale0 = normalize(initial_batch.iter().map(|w| w.weight).sum(), "initial")?;
    Ok(Resolved {
        expert: steps(expert_batch, "expert")?,
        replay: steps(rb_batch, "replay")?,
        initial: initial_batch
            .iter()
            .map(|w| (w.weight * scale0, Successor::Expected { state: w.item }))
            .collect(),
    })
}

/// The minibatch objective over weighted batches, with the successor and
/// initial action draws replaced by their exact expectations under `pi`.
///
/// For a deterministic MDP and batches weighted by `d_e`, `d_rb` and `p0`
/// this coincides with [`crate::valuedice::j_dice_mix_exact`].
pub fn j_dice_empirical_expected(
    policy: &Policy,
    nu: &NuFunction,
    expert_batch: &[Weighted<Transition>],
    rb_batch: &[Weighted<Transition>],
    initial_batch: &[Weighted<usize>],
    mix: MixConfig,
    gamma: f64,
) -> Result<EmpiricalObjective> {
    check_nonempty(expert_batch.len(), rb_batch.len(), initial_batch.len())?;
    let batch = expected_batch(expert_batch, rb_batch, initial_batch)?;
    Ok(evaluate(&batch, policy, nu, mix, gamma, false).0)
}

/// Gradients of [`j_dice_empirical_expected`].
pub fn j_dice_empirical_expected_with_gradients(
    policy: &Policy,
    nu: &NuFunction,
    expert_batch: &[Weighted<Transition>],
    rb_batch: &[Weighted<Transition>],
    initial_batch: &[Weighted<usize>],
    mix: MixConfig,
    gamma: f64,
) -> Result<EmpiricalStep> {
    check_nonempty(expert_batch.len(), rb_batch.len(), initial_batch.len())?;
    let batch = expected_batch(expert_batch, rb_batch, initial_batch)?;
    let (objective, grads) = evaluate(&batch, policy, nu, mix, gamma, true);
    let (grad_nu, grad_logits) = grads.expect("gradients requested");
    Ok(EmpiricalStep {
        objective,
        grad_nu,
        grad_logits,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tr(s: usize, a: usize, s2: usize) -> Transition {
        Transition {
            state: s,
            action: a,
            next_state: s2,
            episode_start_state: s,
        }
    }

    #[test]
    fn zero_and_constant_nu() {
        let pi = Policy::uniform(3, 2);
        let expert = [tr(0, 0, 1), tr(1, 1, 0)];
        let replay = [tr(2, 0, 2), tr(1, 0, 2)];
        let initial = [0, 2];
        let mix = MixConfig { alpha: 0.1 };
        let zero = j_dice_empirical(&pi, &NuFunction::zeros(3, 2), &expert, &replay, &initial, mix, 0.9, 4).unwrap();
        assert_eq!(zero.value, 0.0);
        let nu = NuFunction::new(StateActionTable::filled(3, 2, 2.5)).unwrap();
        let c = j_dice_empirical(&pi, &nu, &expert, &replay, &initial, mix, 0.9, 4).unwrap();
        assert!(c.value.abs() < 1e-14, "{}", c.value);
    }

    #[test]
    fn empty_batch_rejected() {
        let pi = Policy::uniform(2, 2);
        let r = j_dice_empirical(&pi, &NuFunction::zeros(2, 2), &[], &[tr(0, 0, 1)], &[0], MixConfig { alpha: 0.0 }, 0.9, 0);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn sampled_gradients_are_seeded() {
        let pi = Policy::uniform(3, 2);
        let nu = NuFunction::new(StateActionTable::from_fn(3, 2, |s, a| (s as f64) - 0.5 * a as f64)).unwrap();
        let expert = vec![tr(0, 0, 1), tr(1, 1, 0)];
        let run = |seed| {
            j_dice_empirical_with_gradients(&pi, &nu, &expert, &expert, &[0, 1], MixConfig { alpha: 0.3 }, 0.9, &mut seeded(seed))
                .unwrap()
                .grad_nu
        };
        assert_eq!(run(3), run(3));
    }
}
