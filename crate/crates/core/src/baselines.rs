//! Behavioral cloning and tabular GAIL.
//!
//! GAIL here fits its discriminator against the policy's exact occupancy,
//! so it is the best case of an on-policy adversarial method rather than a
//! rollout-based reproduction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::log;

use crate::divergence::kl_occupancy;
use crate::environments::ExpertDataset;
use crate::linalg::Lu;
use crate::math::{log_sigmoid, sigmoid, softmax_into};
use crate::mdp::OccupancySystem;
use crate::valuedice::{CurvePoint, NuFunction, SaddleState, TrainResult, TrainingConfig};
use crate::{Error, Occupancy, Policy, Result, StateActionTable, TabularMdp, DEFAULT_EPS, DETERMINISTIC_LOGIT};

/// Default L2 weight on behavioral-cloning logits.
pub const DEFAULT_BC_PENALTY: f64 = 1e-3;

/// Maximum-likelihood policy with an L2 logits penalty:
///
/// ```text
/// min  -1/N sum_k log pi(a_k | s_k) + penalty * sum_{s,a} logit(s, a)^2
/// ```
///
/// States without data have only the penalty acting on them, whose optimum is
/// the zero (uniform) row. With `penalty = 0` the empirical conditionals are
/// returned, with unobserved actions at `-DETERMINISTIC_LOGIT` relative to
/// the best one.
pub fn bc_fit(demonstrations: &ExpertDataset, n_states: usize, n_actions: usize, penalty: f64) -> Result<Policy> {
    if demonstrations.is_empty() {
        return Err(Error::Precondition(format!("behavioral cloning needs demonstrations")));
    }
    if !(penalty >= 0.0 && penalty.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bc penalty must be nonnegative (got {penalty})"
        )));
    }
    let mut counts = StateActionTable::zeros(n_states, n_actions);
    for t in demonstrations.transitions() {
        if t.state >= n_states || t.action >= n_actions {
            return Err(Error::Precondition(format!(
                "demonstration ({}, {}) out of range",
                t.state, t.action
            )));
        }
        counts[(t.state, t.action)] += 1.0;
    }
    let total = demonstrations.len() as f64;
    let mut logits = StateActionTable::zeros(n_states, n_actions);
    for s in 0..n_states {
        let row = counts.row(s);
        let n: f64 = row.iter().sum();
        if n == 0.0 {
            continue;
        }
        let fitted = if penalty == 0.0 {
            let best = row.iter().fold(0.0f64, |m, &c| m.max(c));
            row.iter()
                .map(|&c| {
                    if c > 0.0 {
                        log(c / best)
                    } else {
                        -DETERMINISTIC_LOGIT
                    }
                })
                .collect()
        } else {
            penalized_row(row, total, penalty)?
        };
        logits.row_mut(s).copy_from_slice(&fitted);
    }
    Policy::from_logits(logits)
}

/// Newton's method on one state's strictly convex penalized likelihood.
fn penalized_row(counts: &[f64], total: f64, penalty: f64) -> Result<Vec<f64>> {
    let na = counts.len();
    let n: f64 = counts.iter().sum();
    let objective = |l: &[f64]| -> f64 {
        let mut p = vec![0.0; na];
        softmax_into(l, &mut p);
        let nll: f64 = counts
            .iter()
            .zip(&p)
            .filter(|(c, _)| **c > 0.0)
            .map(|(c, p)| -c * log(*p))
            .sum();
        nll / total + penalty * l.iter().map(|v| v * v).sum::<f64>()
    };
    let mut l = vec![0.0; na];
    let mut p = vec![0.0; na];
    for _ in 0..200 {
        softmax_into(&l, &mut p);
        let g: Vec<f64> = (0..na)
            .map(|a| -(counts[a] - n * p[a]) / total + 2.0 * penalty * l[a])
            .collect();
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-14 {
            return Ok(l);
        }
        let mut h = vec![0.0; na * na];
        for i in 0..na {
            for j in 0..na {
                let delta = if i == j { p[i] } else { 0.0 };
                h[i * na + j] = n / total * (delta - p[i] * p[j]);
            }
            h[i * na + i] += 2.0 * penalty;
        }
        let step = Lu::factor(h, na)?.solve(&g);
        let f0 = objective(&l);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = l.iter().zip(&step).map(|(v, d)| v - t * d).collect();
            if objective(&cand) <= f0 || t < 1e-12 {
                l = cand;
                break;
            }
            t *= 0.5;
        }
    }
    Ok(l)
}

/// Negative log-likelihood of the demonstrations under `policy`.
pub fn bc_loss(demonstrations: &ExpertDataset, policy: &Policy) -> f64 {
    let n = demonstrations.len() as f64;
    demonstrations
        .transitions()
        .iter()
        .map(|t| -log(policy.prob(t.state, t.action)))
        .sum::<f64>()
        / n
}

/// Discriminator `h = sigmoid(logit)`, strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub logits: StateActionTable,
}

impl Discriminator {
    /// The maximally uncertain discriminator, `h = 1/2`.
    pub fn neutral(n_states: usize, n_actions: usize) -> Self {
        Self {
            logits: StateActionTable::zeros(n_states, n_actions),
        }
    }

    pub fn h(&self, state: usize, action: usize) -> f64 {
        sigmoid(self.logits.get(state, action))
    }

    pub fn log_h(&self, state: usize, action: usize) -> f64 {
        log_sigmoid(self.logits.get(state, action))
    }

    pub fn log_one_minus_h(&self, state: usize, action: usize) -> f64 {
        log_sigmoid(-self.logits.get(state, action))
    }
}

/// `E_{d_e}[log h] + E_{d_p}[log(1 - h)]`.
pub fn gail_objective(h: &Discriminator, d_e: &Occupancy, d_p: &Occupancy) -> f64 {
    let (ns, na) = d_e.shape();
    let mut total = 0.0;
    for s in 0..ns {
        for a in 0..na {
            let (e, p) = (d_e.get(s, a), d_p.get(s, a));
            if e > 0.0 {
                total += e * h.log_h(s, a);
            }
            if p > 0.0 {
                total += p * h.log_one_minus_h(s, a);
            }
        }
    }
    total
}

/// `h* = (d_e + eps) / (d_e + d_p + 2 eps)`, stored as its logit
/// `log((d_e + eps) / (d_p + eps))`.
pub fn gail_optimal_discriminator(d_e: &Occupancy, d_p: &Occupancy, eps: f64) -> Discriminator {
    let (ns, na) = d_e.shape();
    Discriminator {
        logits: StateActionTable::from_fn(ns, na, |s, a| log((d_e.get(s, a) + eps) / (d_p.get(s, a) + eps))),
    }
}

/// Gradient of [`gail_objective`] with respect to the discriminator logits.
pub fn gail_discriminator_gradient(h: &Discriminator, d_e: &Occupancy, d_p: &Occupancy) -> StateActionTable {
    let (ns, na) = d_e.shape();
    StateActionTable::from_fn(ns, na, |s, a| {
        let hv = h.h(s, a);
        d_e.get(s, a) * (1.0 - hv) - d_p.get(s, a) * hv
    })
}

/// Tabular GAIL: alternates `nu_steps_per_policy_step` discriminator ascent
/// steps (rate `nu_learning_rate`) on the exact occupancies with one exact
/// policy-gradient step (rate `policy_learning_rate`) on the discounted
/// return of `log h - log(1 - h)`.
pub fn gail_train(mdp: &TabularMdp, d_e: &Occupancy, cfg: &TrainingConfig) -> Result<TrainResult> {
    cfg.validate()?;
    d_e.values().check_shape(mdp.shape())?;
    let (ns, na) = mdp.shape();
    let mut policy = Policy::uniform(ns, na);
    let mut disc = Discriminator::neutral(ns, na);
    let mut pi_opt = crate::valuedice::optim_for(cfg.optimizer, cfg.policy_learning_rate, ns * na);
    let mut disc_opt = crate::valuedice::optim_for(cfg.optimizer, cfg.nu_learning_rate, ns * na);
    let mut kl_curve = Vec::new();
    let mut objective_curve = Vec::new();
    let mut system = OccupancySystem::solve(mdp, &policy)?;
    let mut record = |update: usize, d_pi: &Occupancy, disc: &Discriminator| -> Result<()> {
        let kl = kl_occupancy(d_pi, d_e, DEFAULT_EPS);
        let obj = gail_objective(disc, d_e, d_pi);
        if !kl.is_finite() || !obj.is_finite() {
            return Err(Error::NonFinite {
                quantity: "GAIL objective",
                update,
            });
        }
        kl_curve.push(CurvePoint { update, value: kl });
        objective_curve.push(CurvePoint { update, value: obj });
        Ok(())
    };
    record(0, &system.occupancy, &disc)?;
    for update in 1..=cfg.n_updates {
        for _ in 0..cfg.nu_steps_per_policy_step {
            let g = gail_discriminator_gradient(&disc, d_e, &system.occupancy);
            disc_opt.step(disc.logits.as_mut_slice(), g.as_slice());
        }
        if !disc.logits.all_finite() {
            return Err(Error::NonFinite {
                quantity: "discriminator",
                update,
            });
        }
        // Reward log h - log(1 - h) is the discriminator logit.
        let mut direction = system.logit_gradient(&policy, &disc.logits);
        direction.add_scaled(-2.0 * cfg.logit_l2, policy.logits());
        let mut logits = policy.logits().clone();
        pi_opt.step(logits.as_mut_slice(), direction.as_slice());
        policy = Policy::from_logits(logits).map_err(|_| Error::NonFinite {
            quantity: "policy logits",
            update,
        })?;
        system = OccupancySystem::solve(mdp, &policy)?;
        if update % cfg.eval_every == 0 || update == cfg.n_updates {
            record(update, &system.occupancy, &disc)?;
        }
    }
    Ok(TrainResult {
        final_state: SaddleState {
            policy,
            nu: NuFunction::zeros(ns, na),
            update_index: cfg.n_updates,
        },
        kl_curve,
        objective_curve,
        alpha: 0.0,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Transition;
    use alloc::vec;

    fn data(pairs: &[(usize, usize)]) -> ExpertDataset {
        ExpertDataset::from_transitions(
            pairs
                .iter()
                .map(|&(s, a)| Transition {
                    state: s,
                    action: a,
                    next_state: s,
                    episode_start_state: s,
                })
                .collect(),
        )
    }

    #[test]
    fn bc_point_mass() {
        let pi = bc_fit(&data(&[(0, 1); 10]), 2, 2, 1e-3).unwrap();
        assert!(pi.prob(0, 1) > 0.99);
        assert_eq!(pi.action_dist(1), &[0.5, 0.5]);
    }

    #[test]
    fn bc_empirical_mle() {
        let pi = bc_fit(&data(&[(0, 0), (0, 0), (0, 0), (0, 1)]), 1, 2, 0.0).unwrap();
        assert!((pi.prob(0, 0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn bc_penalized_matches_stationarity() {
        let d = data(&[(0, 0), (0, 0), (0, 1), (1, 0)]);
        let lambda = 0.05;
        let pi = bc_fit(&d, 2, 2, lambda).unwrap();
        // Zero gradient: -(c_a - n p_a)/N + 2 lambda l_a = 0.
        for (s, counts) in [(0, [2.0, 1.0]), (1, [1.0, 0.0])] {
            let n: f64 = counts.iter().sum();
            for a in 0..2 {
                let g = -(counts[a] - n * pi.prob(s, a)) / 4.0 + 2.0 * lambda * pi.logits().get(s, a);
                assert!(g.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gail_neutral_value() {
        let d = Occupancy::new(StateActionTable::from_rows(&[vec![0.25, 0.75]]).unwrap()).unwrap();
        let v = gail_objective(&Discriminator::neutral(1, 2), &d, &d);
        assert!((v + 2.0 * core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn optimal_discriminator_closed_forms() {
        let d = Occupancy::new(StateActionTable::from_rows(&[vec![0.25, 0.75]]).unwrap()).unwrap();
        let h = gail_optimal_discriminator(&d, &d, DEFAULT_EPS);
        assert!((h.h(0, 0) - 0.5).abs() < 1e-15);
        let e = Occupancy::new(StateActionTable::from_rows(&[vec![0.5, 0.0, 0.5]]).unwrap()).unwrap();
        let p = Occupancy::new(StateActionTable::from_rows(&[vec![0.25, 0.5, 0.25]]).unwrap()).unwrap();
        let h = gail_optimal_discriminator(&e, &p, DEFAULT_EPS);
        assert!((h.h(0, 0) - 2.0 / 3.0).abs() < 1e-10);
        assert!((h.logits.get(0, 2) - core::f64::consts::LN_2).abs() < 1e-10);
    }
}
