//! KL divergence between occupancies, its Donsker-Varadhan dual, and the
//! change of variables `x = nu - B nu` that turns the dual into the
//! off-policy ValueDICE objective.

use alloc::format;
use alloc::string::String;

use libm::log;

use crate::math::{clip, weighted_log_sum_exp};
use crate::mdp::{compute_occupancy, policy_evaluation};
use crate::{Error, Occupancy, Policy, Result, StateActionTable, TabularMdp, CLIP_BOUND, DEFAULT_EPS};

/// Tolerance on `d_p` matching the policy's occupancy in
/// [`kl_as_discounted_return`].
const OCCUPANCY_MATCH_TOL: f64 = 1e-9;

/// Test function of the dual representation, clipped to `[-CLIP_BOUND, CLIP_BOUND]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFunction {
    values: StateActionTable,
}

impl DualFunction {
    /// Clips every entry into the bounded family. Non-finite entries are rejected.
    pub fn new(values: StateActionTable) -> Result<Self> {
        if !values.all_finite() {
            return Err(Error::Precondition(String::from(
                "dual function entries must be finite",
            )));
        }
        Ok(Self {
            values: values.map(|v| clip(v, CLIP_BOUND)),
        })
    }

    pub fn values(&self) -> &StateActionTable {
        &self.values
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values.get(state, action)
    }
}

/// The `nu` table of the ValueDICE objective.
#[derive(Debug, Clone, PartialEq)]
pub struct NuFunction {
    pub values: StateActionTable,
}

impl NuFunction {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            values: StateActionTable::zeros(n_states, n_actions),
        }
    }

    pub fn new(values: StateActionTable) -> Result<Self> {
        if !values.all_finite() {
            return Err(Error::Precondition(String::from("nu entries must be finite")));
        }
        Ok(Self { values })
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values.get(state, action)
    }

    /// `sum_a pi(a|s) nu(s, a)` for every state.
    pub fn state_values(&self, policy: &Policy) -> alloc::vec::Vec<f64> {
        (0..self.values.n_states())
            .map(|s| {
                self.values
                    .row(s)
                    .iter()
                    .zip(policy.action_dist(s))
                    .map(|(n, p)| n * p)
                    .sum()
            })
            .collect()
    }
}

/// `KL(d_p || d_e) = sum d_p log((d_p + eps) / (d_e + eps))`.
pub fn kl_occupancy(d_p: &Occupancy, d_e: &Occupancy, eps: f64) -> f64 {
    assert_eq!(d_p.shape(), d_e.shape(), "occupancy shapes differ");
    d_p.as_slice()
        .iter()
        .zip(d_e.as_slice())
        .filter(|(p, _)| **p > 0.0)
        .map(|(&p, &e)| p * log((p + eps) / (e + eps)))
        .sum()
}

/// The negative KL written as a discounted return: the policy's value under
/// reward `log(d_e / d_p)`, scaled by `1 - gamma`.
///
/// Computed by policy evaluation on the reward table, independently of the
/// occupancy weighting used by [`kl_occupancy`].
pub fn kl_as_discounted_return(
    mdp: &TabularMdp,
    policy: &Policy,
    d_p: &Occupancy,
    d_e: &Occupancy,
) -> Result<f64> {
    let own = compute_occupancy(mdp, policy)?;
    let gap = own.values().max_abs_diff(d_p.values());
    if gap > OCCUPANCY_MATCH_TOL {
        return Err(Error::Precondition(format!(
            "d_p differs from the policy's occupancy by {gap:e}"
        )));
    }
    let eps = DEFAULT_EPS;
    let reward = StateActionTable::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        log((d_e.get(s, a) + eps) / (d_p.get(s, a) + eps))
    });
    let q = policy_evaluation(mdp, policy, &reward)?;
    let start: f64 = (0..mdp.n_states())
        .map(|s| {
            mdp.initial_dist()[s]
                * (0..mdp.n_actions())
                    .map(|a| policy.prob(s, a) * q.get(s, a))
                    .sum::<f64>()
        })
        .sum();
    Ok((1.0 - mdp.gamma()) * start)
}

/// Donsker-Varadhan objective `log E_{d_e}[e^x] - E_{d_p}[x]`; its infimum
/// over `x` is `-KL(d_p || d_e)`.
pub fn dv_objective(x: &DualFunction, d_p: &Occupancy, d_e: &Occupancy) -> f64 {
    let linear: f64 = d_p
        .as_slice()
        .iter()
        .zip(x.values().as_slice())
        .map(|(p, v)| p * v)
        .sum();
    weighted_log_sum_exp(d_e.as_slice(), x.values().as_slice()) - linear
}

/// The minimizing test function `log((d_p + eps) / (d_e + eps))`, with the
/// additive constant fixed at zero.
pub fn dv_optimal_x(d_p: &Occupancy, d_e: &Occupancy, eps: f64) -> DualFunction {
    let (ns, na) = d_p.shape();
    let values = StateActionTable::from_fn(ns, na, |s, a| log((d_p.get(s, a) + eps) / (d_e.get(s, a) + eps)));
    DualFunction::new(values).expect("log-ratios of smoothed occupancies are finite")
}

/// Expected Bellman operator with zero reward:
/// `(B nu)(s, a) = gamma sum_{s'} p(s'|s, a) sum_{a'} pi(a'|s') nu(s', a')`.
pub fn bellman_operator(mdp: &TabularMdp, policy: &Policy, nu: &NuFunction) -> StateActionTable {
    let v = nu.state_values(policy);
    StateActionTable::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        mdp.gamma()
            * mdp
                .next_state_dist(s, a)
                .iter()
                .zip(&v)
                .map(|(p, v)| p * v)
                .sum::<f64>()
    })
}

/// Unclipped `nu - B nu`.
pub fn nu_residual(mdp: &TabularMdp, policy: &Policy, nu: &NuFunction) -> StateActionTable {
    let mut x = nu.values.clone();
    x.add_scaled(-1.0, &bellman_operator(mdp, policy, nu));
    x
}

/// Change of variables `x = nu - B nu`, clipped into the bounded family.
pub fn x_from_nu(mdp: &TabularMdp, policy: &Policy, nu: &NuFunction) -> DualFunction {
    DualFunction::new(nu_residual(mdp, policy, nu)).expect("finite nu gives finite residual")
}

/// `(1 - gamma) E_{s0 ~ p0, a0 ~ pi}[nu(s0, a0)]`.
pub fn initial_value_term(mdp: &TabularMdp, policy: &Policy, nu: &NuFunction) -> f64 {
    let v = nu.state_values(policy);
    (1.0 - mdp.gamma()) * mdp.initial_dist().iter().zip(&v).map(|(p, v)| p * v).sum::<f64>()
}

/// `log E_{d_e}[e^{nu - B nu}] - (1 - gamma) E_{p0, pi}[nu]`; its infimum over
/// `nu` is `-KL(d_pi || d_e)`.
pub fn j_dice_exact(mdp: &TabularMdp, policy: &Policy, nu: &NuFunction, d_e: &Occupancy) -> f64 {
    let x = x_from_nu(mdp, policy, nu);
    weighted_log_sum_exp(d_e.as_slice(), x.values().as_slice()) - initial_value_term(mdp, policy, nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn occ(rows: &[alloc::vec::Vec<f64>]) -> Occupancy {
        Occupancy::new(StateActionTable::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn kl_closed_forms() {
        let d = occ(&[vec![0.3, 0.7]]);
        assert!(kl_occupancy(&d, &d, DEFAULT_EPS).abs() < 1e-12);
        let p = occ(&[vec![1.0, 0.0]]);
        let e = occ(&[vec![0.5, 0.5]]);
        assert!((kl_occupancy(&p, &e, 0.0) - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn dv_constant_is_zero() {
        let p = occ(&[vec![0.2, 0.8]]);
        let e = occ(&[vec![0.6, 0.4]]);
        for c in [0.0, 3.5, -12.0] {
            let x = DualFunction::new(StateActionTable::filled(1, 2, c)).unwrap();
            assert!(dv_objective(&x, &p, &e).abs() < 1e-14);
        }
    }

    #[test]
    fn dv_optimal_closed_forms() {
        let d = occ(&[vec![0.5, 0.5]]);
        assert!(dv_optimal_x(&d, &d, DEFAULT_EPS).values().max_abs() < 1e-15);
        let p = occ(&[vec![0.5, 0.5]]);
        let e = occ(&[vec![0.25, 0.75]]);
        let x = dv_optimal_x(&p, &e, DEFAULT_EPS);
        assert!((x.get(0, 0) - core::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn clipping_applies() {
        let x = DualFunction::new(StateActionTable::filled(1, 1, 1e3)).unwrap();
        assert_eq!(x.get(0, 0), CLIP_BOUND);
    }

    #[test]
    fn bellman_closed_forms() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.9).unwrap();
        let pi = Policy::uniform(1, 1);
        let nu = NuFunction::new(StateActionTable::filled(1, 1, 2.0)).unwrap();
        assert!((bellman_operator(&mdp, &pi, &nu).get(0, 0) - 1.8).abs() < 1e-15);

        let mdp0 = mdp.clone().with_gamma(0.0).unwrap();
        assert_eq!(bellman_operator(&mdp0, &pi, &nu).get(0, 0), 0.0);
    }

    #[test]
    fn constant_nu_maps_to_scaled_constant() {
        let mdp = TabularMdp::new(2, 2, vec![0.5; 8], vec![0.3, 0.7], 0.8).unwrap();
        let pi = Policy::uniform(2, 2);
        let nu = NuFunction::new(StateActionTable::filled(2, 2, 5.0)).unwrap();
        let x = x_from_nu(&mdp, &pi, &nu);
        for &v in x.values().as_slice() {
            assert!((v - 0.2 * 5.0).abs() < 1e-14);
        }
        let zero = x_from_nu(&mdp, &pi, &NuFunction::zeros(2, 2));
        assert_eq!(zero.values().max_abs(), 0.0);
    }

    #[test]
    fn j_dice_vanishes_on_constants() {
        let mdp = TabularMdp::new(2, 2, vec![0.5; 8], vec![0.3, 0.7], 0.8).unwrap();
        let pi = Policy::uniform(2, 2);
        let d_e = occ(&[vec![0.1, 0.2], vec![0.3, 0.4]]);
        assert_eq!(j_dice_exact(&mdp, &pi, &NuFunction::zeros(2, 2), &d_e), 0.0);
        let nu = NuFunction::new(StateActionTable::filled(2, 2, -3.0)).unwrap();
        assert!(j_dice_exact(&mdp, &pi, &nu, &d_e).abs() < 1e-14);
    }

    #[test]
    fn kl_return_rejects_foreign_occupancy() {
        let mdp = TabularMdp::new(2, 2, vec![0.5; 8], vec![1.0, 0.0], 0.8).unwrap();
        let pi = Policy::uniform(2, 2);
        let wrong = occ(&[vec![0.1, 0.2], vec![0.3, 0.4]]);
        assert!(matches!(
            kl_as_discounted_return(&mdp, &pi, &wrong, &wrong),
            Err(Error::Precondition(_))
        ));
    }
}
