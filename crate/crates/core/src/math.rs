//! Small numerically careful helpers shared by the objectives.

use libm::{exp, log};

/// `log(sum_i w_i exp(x_i) / sum_i w_i)` over entries with positive weight,
/// max-shifted. Normalizing by the total weight makes `x = 0` give exactly 0.
///
/// Returns `-inf` when no weight is positive.
pub(crate) fn weighted_log_sum_exp(weights: &[f64], xs: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), xs.len());
    let shift = weights
        .iter()
        .zip(xs)
        .filter(|(w, _)| **w > 0.0)
        .fold(f64::NEG_INFINITY, |m, (_, &x)| m.max(x));
    if shift == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let (total, mass) = weights
        .iter()
        .zip(xs)
        .filter(|(w, _)| **w > 0.0)
        .fold((0.0, 0.0), |(t, m), (w, &x)| (t + w * exp(x - shift), m + w));
    shift + log(total / mass)
}

/// Normalized weights `w_i exp(x_i) / sum_j w_j exp(x_j)`, the gradient of
/// [`weighted_log_sum_exp`] with respect to `xs`.
pub(crate) fn weighted_softmax(weights: &[f64], xs: &[f64]) -> alloc::vec::Vec<f64> {
    let shift = weights
        .iter()
        .zip(xs)
        .filter(|(w, _)| **w > 0.0)
        .fold(f64::NEG_INFINITY, |m, (_, &x)| m.max(x));
    let mut out: alloc::vec::Vec<f64> = weights
        .iter()
        .zip(xs)
        .map(|(&w, &x)| if w > 0.0 { w * exp(x - shift) } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Softmax of one logits row written into `out`.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l));
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = exp(l - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn clip(x: f64, bound: f64) -> f64 {
    x.clamp(-bound, bound)
}

/// `log(sigmoid(z))` without overflow.
pub(crate) fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -libm::log1p(exp(-z))
    } else {
        z - libm::log1p(exp(z))
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_survives_large_exponents() {
        let v = weighted_log_sum_exp(&[0.5, 0.5], &[1000.0, 1000.0]);
        assert!((v - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_are_skipped() {
        let v = weighted_log_sum_exp(&[0.0, 1.0], &[f64::INFINITY, 2.0]);
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn log_sigmoid_tails() {
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
    }
}
