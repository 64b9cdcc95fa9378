use alloc::string::String;
use alloc::vec::Vec;

use crate::divergence::{kl_occupancy, NuFunction};
use crate::environments::{ExpertDataset, ReplayBuffer};
use crate::mdp::compute_occupancy;
use crate::rng::{sample_categorical, seeded};
use crate::valuedice::optim::Optimizer;
use crate::valuedice::{
    grad_nu_exact, grad_policy_exact, grad_policy_exact_coupled, j_dice_empirical_with_gradients,
    j_dice_mix_exact, sample_expert, CurvePoint, MixConfig, PolicyGradientMode, SaddleState,
    TrainResult, TrainingConfig,
};
use crate::{Error, Occupancy, Policy, Result, StateActionTable, TabularMdp, Transition, DEFAULT_EPS};

fn check_finite(table: &StateActionTable, quantity: &'static str, update: usize) -> Result<()> {
    if table.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { quantity, update })
    }
}

/// Applies an ascent step (with L2 decay) to the logits and rebuilds the policy.
fn policy_step(policy: &Policy, gradient: &StateActionTable, l2: f64, optimizer: &mut Optimizer, update: usize) -> Result<Policy> {
    let mut direction = gradient.clone();
    direction.add_scaled(-2.0 * l2, policy.logits());
    check_finite(&direction, "policy gradient", update)?;
    let mut logits = policy.logits().clone();
    optimizer.step(logits.as_mut_slice(), direction.as_slice());
    Policy::from_logits(logits).map_err(|_| Error::NonFinite {
        quantity: "policy logits",
        update,
    })
}

fn nu_step(nu: &mut NuFunction, gradient: &StateActionTable, optimizer: &mut Optimizer, update: usize) -> Result<()> {
    check_finite(gradient, "nu gradient", update)?;
    let descent: Vec<f64> = gradient.as_slice().iter().map(|g| -g).collect();
    optimizer.step(nu.values.as_mut_slice(), &descent);
    check_finite(&nu.values, "nu", update)
}

struct Recorder {
    kl: Vec<CurvePoint>,
    objective: Vec<CurvePoint>,
}

impl Recorder {
    fn record(&mut self, update: usize, kl: f64, objective: f64) -> Result<()> {
        if !kl.is_finite() {
            return Err(Error::NonFinite {
                quantity: "KL",
                update,
            });
        }
        if !objective.is_finite() {
            return Err(Error::NonFinite {
                quantity: "objective",
                update,
            });
        }
        self.kl.push(CurvePoint { update, value: kl });
        self.objective.push(CurvePoint {
            update,
            value: objective,
        });
        Ok(())
    }
}

fn validate_inputs(mdp: &TabularMdp, target: &Occupancy, mix: MixConfig, cfg: &TrainingConfig) -> Result<()> {
    mix.validate()?;
    cfg.validate()?;
    target.values().check_shape(mdp.shape())
}

/// Exact saddle-point training against the expert occupancy `d_e`.
///
/// Each update takes `nu_steps_per_policy_step` descent steps on `nu`, then
/// one ascent step on the logits. The replay occupancy is the current
/// policy's exact occupancy.
pub fn train_exact(mdp: &TabularMdp, d_e: &Occupancy, mix: MixConfig, cfg: &TrainingConfig) -> Result<TrainResult> {
    validate_inputs(mdp, d_e, mix, cfg)?;
    let (ns, na) = mdp.shape();
    let mut state = SaddleState::zeros(ns, na);
    let mut nu_opt = Optimizer::new(cfg.optimizer, cfg.nu_learning_rate, ns * na);
    let mut pi_opt = Optimizer::new(cfg.optimizer, cfg.policy_learning_rate, ns * na);
    let mut rec = Recorder {
        kl: Vec::new(),
        objective: Vec::new(),
    };
    let mut d_pi = compute_occupancy(mdp, &state.policy)?;
    rec.record(
        0,
        kl_occupancy(&d_pi, d_e, DEFAULT_EPS),
        j_dice_mix_exact(mdp, &state.policy, &state.nu, d_e, &d_pi, mix),
    )?;
    for update in 1..=cfg.n_updates {
        for _ in 0..cfg.nu_steps_per_policy_step {
            let g = grad_nu_exact(mdp, &state.policy, &state.nu, d_e, &d_pi, mix);
            nu_step(&mut state.nu, &g, &mut nu_opt, update)?;
        }
        let gradient = match cfg.policy_gradient {
            PolicyGradientMode::Full => grad_policy_exact_coupled(mdp, &state.policy, &state.nu, d_e, mix)?.gradient,
            PolicyGradientMode::Explicit => grad_policy_exact(mdp, &state.policy, &state.nu, d_e, &d_pi, mix),
        };
        state.policy = policy_step(&state.policy, &gradient, cfg.logit_l2, &mut pi_opt, update)?;
        state.update_index = update;
        d_pi = compute_occupancy(mdp, &state.policy)?;
        if update % cfg.eval_every == 0 || update == cfg.n_updates {
            rec.record(
                update,
                kl_occupancy(&d_pi, d_e, DEFAULT_EPS),
                j_dice_mix_exact(mdp, &state.policy, &state.nu, d_e, &d_pi, mix),
            )?;
        }
    }
    Ok(TrainResult {
        final_state: state,
        kl_curve: rec.kl,
        objective_curve: rec.objective,
        alpha: mix.alpha,
        seed: cfg.seed,
    })
}

/// Sampled training from demonstrations.
///
/// Per update: one environment step with the current policy goes into the
/// replay buffer; then `nu_steps_per_policy_step` minibatches are drawn
/// (expert samples by virtual start plus geometric offset, replay samples
/// uniformly, initial states from the expert samples' virtual starts), each
/// giving a descent step on `nu`; the last one also gives the ascent step on
/// the logits. The exact KL against `eval_target` is recorded every
/// `eval_every` updates; the objective column holds the last minibatch value.
pub fn train_empirical(
    mdp: &TabularMdp,
    demonstrations: &ExpertDataset,
    eval_target: &Occupancy,
    mix: MixConfig,
    cfg: &TrainingConfig,
) -> Result<TrainResult> {
    validate_inputs(mdp, eval_target, mix, cfg)?;
    if demonstrations.is_empty() {
        return Err(Error::Precondition(String::from("demonstrations are empty")));
    }
    let (ns, na) = mdp.shape();
    let gamma = mdp.gamma();
    let mut rng = seeded(cfg.seed);
    let mut state = SaddleState::zeros(ns, na);
    let mut nu_opt = Optimizer::new(cfg.optimizer, cfg.nu_learning_rate, ns * na);
    let mut pi_opt = Optimizer::new(cfg.optimizer, cfg.policy_learning_rate, ns * na);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity)?;
    let mut rec = Recorder {
        kl: Vec::new(),
        objective: Vec::new(),
    };
    let d0 = compute_occupancy(mdp, &state.policy)?;
    rec.record(0, kl_occupancy(&d0, eval_target, DEFAULT_EPS), 0.0)?;

    let mut env_state = sample_categorical(&mut rng, mdp.initial_dist());
    let mut episode_start = env_state;
    let mut episode_steps = 0;
    let mut expert_batch = Vec::with_capacity(cfg.batch_size);
    let mut initial_batch = Vec::with_capacity(cfg.batch_size);
    for update in 1..=cfg.n_updates {
        let action = state.policy.sample_action(env_state, &mut rng);
        let next = sample_categorical(&mut rng, mdp.next_state_dist(env_state, action));
        buffer.push(Transition {
            state: env_state,
            action,
            next_state: next,
            episode_start_state: episode_start,
        });
        env_state = next;
        episode_steps += 1;
        if episode_steps == cfg.episode_horizon {
            env_state = sample_categorical(&mut rng, mdp.initial_dist());
            episode_start = env_state;
            episode_steps = 0;
        }

        let mut last_value = 0.0;
        for k in 0..cfg.nu_steps_per_policy_step {
            expert_batch.clear();
            initial_batch.clear();
            for _ in 0..cfg.batch_size {
                let sample = sample_expert(demonstrations, gamma, &mut rng);
                expert_batch.push(sample.transition);
                initial_batch.push(sample.start_state);
            }
            let rb_batch = buffer.sample_with(cfg.batch_size, &mut rng)?;
            let step = j_dice_empirical_with_gradients(
                &state.policy,
                &state.nu,
                &expert_batch,
                &rb_batch,
                &initial_batch,
                mix,
                gamma,
                &mut rng,
            )?;
            if !step.objective.value.is_finite() {
                return Err(Error::NonFinite {
                    quantity: "loss",
                    update,
                });
            }
            last_value = step.objective.value;
            nu_step(&mut state.nu, &step.grad_nu, &mut nu_opt, update)?;
            if k + 1 == cfg.nu_steps_per_policy_step {
                state.policy = policy_step(&state.policy, &step.grad_logits, cfg.logit_l2, &mut pi_opt, update)?;
            }
        }
        state.update_index = update;
        if update % cfg.eval_every == 0 || update == cfg.n_updates {
            let d_pi = compute_occupancy(mdp, &state.policy)?;
            rec.record(update, kl_occupancy(&d_pi, eval_target, DEFAULT_EPS), last_value)?;
        }
    }
    Ok(TrainResult {
        final_state: state,
        kl_curve: rec.kl,
        objective_curve: rec.objective,
        alpha: mix.alpha,
        seed: cfg.seed,
    })
}
