use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// First-order update rule applied to a parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone)]
pub(crate) struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub(crate) fn new(kind: OptimizerKind, learning_rate: f64, len: usize) -> Self {
        Self {
            kind,
            learning_rate,
            first: vec![0.0; len],
            second: vec![0.0; len],
            steps: 0,
        }
    }

    /// Moves `params` along `direction` (callers pass the negated gradient
    /// for descent).
    pub(crate) fn step(&mut self, params: &mut [f64], direction: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, d) in params.iter_mut().zip(direction) {
                    *p += self.learning_rate * d;
                }
            }
            OptimizerKind::Adam => {
                self.steps = self.steps.saturating_add(1);
                let c1 = 1.0 - libm::pow(BETA1, self.steps as f64);
                let c2 = 1.0 - libm::pow(BETA2, self.steps as f64);
                for i in 0..params.len() {
                    let d = direction[i];
                    self.first[i] = BETA1 * self.first[i] + (1.0 - BETA1) * d;
                    self.second[i] = BETA2 * self.second[i] + (1.0 - BETA2) * d * d;
                    let m = self.first[i] / c1;
                    let v = self.second[i] / c2;
                    params[i] += self.learning_rate * m / (libm::sqrt(v) + ADAM_EPS);
                }
            }
        }
    }
}
