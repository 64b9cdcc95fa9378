//! The inner minimization over `nu` at a fixed policy: closed form and a
//! Newton solver.

use alloc::format;
use alloc::vec;

use crate::divergence::{nu_residual, NuFunction};
use crate::linalg::Lu;
use crate::valuedice::{grad_nu_exact, j_dice_mix_exact, MixConfig};
use crate::{Error, Occupancy, Policy, Result, StateActionTable, TabularMdp};

/// Row-major matrix of `nu -> nu - B nu`.
fn residual_matrix(mdp: &TabularMdp, policy: &Policy) -> alloc::vec::Vec<f64> {
    let (ns, na) = mdp.shape();
    let n = ns * na;
    let mut m = vec![0.0; n * n];
    for s in 0..ns {
        for a in 0..na {
            let row = s * na + a;
            m[row * n + row] += 1.0;
            for (s2, p) in mdp.next_state_dist(s, a).iter().enumerate() {
                if *p != 0.0 {
                    for a2 in 0..na {
                        m[row * n + s2 * na + a2] -= mdp.gamma() * p * policy.prob(s2, a2);
                    }
                }
            }
        }
    }
    m
}

/// The minimizer with additive constant zero: solves `nu - B nu = x*` for
/// `x* = log(((1 - alpha) d_pi + alpha d_rb + eps) / ((1 - alpha) d_e + alpha d_rb + eps))`.
pub fn optimal_nu(
    mdp: &TabularMdp,
    policy: &Policy,
    d_pi: &Occupancy,
    d_e: &Occupancy,
    d_rb: &Occupancy,
    mix: MixConfig,
    eps: f64,
) -> Result<NuFunction> {
    let (ns, na) = mdp.shape();
    let alpha = mix.alpha;
    let x: alloc::vec::Vec<f64> = (0..ns * na)
        .map(|i| {
            let p = (1.0 - alpha) * d_pi.as_slice()[i] + alpha * d_rb.as_slice()[i];
            let e = (1.0 - alpha) * d_e.as_slice()[i] + alpha * d_rb.as_slice()[i];
            libm::log((p + eps) / (e + eps))
        })
        .collect();
    let nu = Lu::factor(residual_matrix(mdp, policy), ns * na)?.solve(&x);
    NuFunction::new(StateActionTable::from_vec(ns, na, nu)?)
}

/// Outcome of [`minimize_nu`].
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub nu: NuFunction,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Damped Newton iterations on the mixed objective over `nu`, stopping when
/// the gradient's L-infinity norm falls below `tol`.
///
/// The Hessian `M^T (diag(w) - w w^T) M` is singular along constant `nu`
/// (the objective is shift invariant there), so a small ridge is added.
pub fn minimize_nu(
    mdp: &TabularMdp,
    policy: &Policy,
    start: &NuFunction,
    d_e: &Occupancy,
    d_rb: &Occupancy,
    mix: MixConfig,
    tol: f64,
    max_iterations: usize,
) -> Result<InnerSolution> {
    let (ns, na) = mdp.shape();
    let n = ns * na;
    let m = residual_matrix(mdp, policy);
    let mut nu = start.clone();
    let mut value = j_dice_mix_exact(mdp, policy, &nu, d_e, d_rb, mix);
    for it in 0..max_iterations {
        let grad = grad_nu_exact(mdp, policy, &nu, d_e, d_rb, mix);
        let grad_norm = grad.max_abs();
        if grad_norm < tol {
            return Ok(InnerSolution {
                nu,
                value,
                grad_norm,
                iterations: it,
            });
        }
        // Softmax weights of the log term.
        let x = nu_residual(mdp, policy, &nu);
        let alpha = mix.alpha;
        let weights: alloc::vec::Vec<f64> = d_e
            .as_slice()
            .iter()
            .zip(d_rb.as_slice())
            .map(|(e, r)| (1.0 - alpha) * e + alpha * r)
            .collect();
        let w = crate::math::weighted_softmax(&weights, x.as_slice());
        // H = M^T (diag(w) - w w^T) M
        let mut wm = vec![0.0; n]; // w^T M
        for i in 0..n {
            for j in 0..n {
                wm[j] += w[i] * m[i * n + j];
            }
        }
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let mij = m[i * n + j];
                if mij == 0.0 {
                    continue;
                }
                for k in 0..n {
                    h[j * n + k] += w[i] * mij * m[i * n + k];
                }
            }
        }
        let trace: f64 = (0..n).map(|i| h[i * n + i]).sum();
        for j in 0..n {
            for k in 0..n {
                h[j * n + k] -= wm[j] * wm[k];
            }
            h[j * n + j] += 1e-12 * trace.max(1e-300);
        }
        let step = Lu::factor(h, n)?.solve(grad.as_slice());
        let mut t = 1.0;
        loop {
            let mut candidate = nu.values.clone();
            for (v, d) in candidate.as_mut_slice().iter_mut().zip(&step) {
                *v -= t * d;
            }
            let candidate = NuFunction::new(candidate)?;
            let cand_value = j_dice_mix_exact(mdp, policy, &candidate, d_e, d_rb, mix);
            if cand_value <= value + 1e-14 * (1.0 + value.abs()) || t < 1e-12 {
                nu = candidate;
                value = cand_value;
                break;
            }
            t *= 0.5;
        }
    }
    let grad_norm = grad_nu_exact(mdp, policy, &nu, d_e, d_rb, mix).max_abs();
    if grad_norm < tol {
        Ok(InnerSolution {
            nu,
            value,
            grad_norm,
            iterations: max_iterations,
        })
    } else {
        Err(Error::NumericalFailure(format!(
            "inner minimization stalled at gradient norm {grad_norm:e} after {max_iterations} iterations"
        )))
    }
}
