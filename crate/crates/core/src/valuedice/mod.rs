//! The ValueDICE saddle point
//!
//! ```text
//! max_pi min_nu  log E_{d_mix}[e^{nu - B nu}] - (1 - alpha)(1 - gamma) E_{p0, pi}[nu] - alpha E_{d_rb}[nu - B nu]
//! ```
//!
//! in two flavors: [`train_exact`] evaluates every expectation exactly from
//! occupancies, and [`train_empirical`] follows the sampled algorithm with a
//! replay buffer, geometric expert sampling and virtual initial states.

mod empirical;
mod inner;
mod objective;
mod optim;
mod sampling;
mod trainer;

use alloc::format;

use serde::{Deserialize, Serialize};

pub use crate::divergence::NuFunction;
use crate::{Error, Policy, Result};

pub use empirical::{
    j_dice_empirical, j_dice_empirical_expected, j_dice_empirical_expected_with_gradients,
    j_dice_empirical_with_gradients, EmpiricalObjective, EmpiricalStep, Weighted,
};
pub use inner::{minimize_nu, optimal_nu, InnerSolution};
pub use objective::{
    grad_nu_exact, grad_policy_exact, grad_policy_exact_coupled, j_dice_mix_exact,
    CoupledPolicyGradient,
};
pub use optim::OptimizerKind;
pub use sampling::{
    geometric_time_index, geometric_time_index_with, sample_expert, virtual_initial_states,
    ExpertSample,
};
pub use trainer::{train_empirical, train_exact};

pub(crate) fn optim_for(kind: OptimizerKind, learning_rate: f64, len: usize) -> optim::Optimizer {
    optim::Optimizer::new(kind, learning_rate, len)
}

/// Weight of replay data in both terms of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    pub alpha: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self { alpha: 0.1 }
    }
}

impl MixConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let mix = Self { alpha };
        mix.validate()?;
        Ok(mix)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha >= 0.0 && self.alpha < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "mix.alpha must lie in [0, 1) (got {})",
                self.alpha
            )))
        }
    }
}

/// Which policy gradient the exact trainer follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyGradientMode {
    /// Also differentiates the replay occupancy (the policy's own
    /// occupancy) through the balance system.
    Full,
    /// Only the dependence through `B nu` and the initial-state term.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub nu_learning_rate: f64,
    pub policy_learning_rate: f64,
    pub batch_size: usize,
    pub n_updates: usize,
    pub nu_steps_per_policy_step: usize,
    pub seed: u64,
    /// Record the exact KL every this many updates (and at the last one).
    pub eval_every: usize,
    /// L2 penalty on policy logits.
    pub logit_l2: f64,
    pub optimizer: OptimizerKind,
    pub policy_gradient: PolicyGradientMode,
    /// Environment steps before the empirical trainer resets to `p0`.
    pub episode_horizon: usize,
    pub replay_capacity: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            nu_learning_rate: 0.1,
            policy_learning_rate: 0.01,
            batch_size: 64,
            n_updates: 500,
            nu_steps_per_policy_step: 4,
            seed: 0,
            eval_every: 1,
            logit_l2: 1e-4,
            optimizer: OptimizerKind::Adam,
            policy_gradient: PolicyGradientMode::Full,
            episode_horizon: 50,
            replay_capacity: crate::environments::DEFAULT_REPLAY_CAPACITY,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive_real = [
            ("training.nu_learning_rate", self.nu_learning_rate),
            ("training.policy_learning_rate", self.policy_learning_rate),
        ];
        for (name, v) in positive_real {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive (got {v})")));
            }
        }
        let positive_int = [
            ("training.batch_size", self.batch_size),
            ("training.n_updates", self.n_updates),
            ("training.nu_steps_per_policy_step", self.nu_steps_per_policy_step),
            ("training.eval_every", self.eval_every),
            ("training.episode_horizon", self.episode_horizon),
            ("training.replay_capacity", self.replay_capacity),
        ];
        for (name, v) in positive_int {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.logit_l2 >= 0.0 && self.logit_l2.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "training.logit_l2 must be nonnegative (got {})",
                self.logit_l2
            )));
        }
        Ok(())
    }
}

/// Current iterate of the saddle-point problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleState {
    pub policy: Policy,
    pub nu: NuFunction,
    pub update_index: usize,
}

impl SaddleState {
    /// Zero logits (uniform policy) and zero `nu`.
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            policy: Policy::uniform(n_states, n_actions),
            nu: NuFunction::zeros(n_states, n_actions),
            update_index: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub final_state: SaddleState,
    /// Exact `KL(d_pi || d_e)`, starting at update 0.
    pub kl_curve: alloc::vec::Vec<CurvePoint>,
    /// Objective value at the same updates.
    pub objective_curve: alloc::vec::Vec<CurvePoint>,
    pub alpha: f64,
    pub seed: u64,
}

impl TrainResult {
    pub fn final_kl(&self) -> f64 {
        self.kl_curve.last().map_or(f64::NAN, |p| p.value)
    }
}
