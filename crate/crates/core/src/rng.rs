//! Seeded random number generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate; a stream is fully
/// determined by its seed.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Index drawn from a discrete distribution by inverse CDF.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` slightly below one; fall back to the last
    // index that carries mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Uniform draw in the half-open interval (0, 1].
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Standard exponential variate.
pub(crate) fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -libm::log(open_unit(rng))
}

/// Symmetric Dirichlet(1) vector, i.e. uniform on the simplex.
pub(crate) fn flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, len: usize) -> alloc::vec::Vec<f64> {
    let mut v: alloc::vec::Vec<f64> = (0..len).map(|_| exponential(rng)).collect();
    let total: f64 = v.iter().sum();
    for x in &mut v {
        *x /= total;
    }
    v
}

/// Untruncated `Geom(1 - gamma)` draw on {0, 1, 2, ...}: `P(t) = (1 - gamma) gamma^t`.
pub(crate) fn geometric<R: Rng + ?Sized>(rng: &mut R, gamma: f64) -> usize {
    if gamma <= 0.0 {
        return 0;
    }
    let t = libm::floor(libm::log(open_unit(rng)) / libm::log(gamma));
    if t >= usize::MAX as f64 {
        usize::MAX
    } else {
        t as usize
    }
}
