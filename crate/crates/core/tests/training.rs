mod common;

use common::{random_instance, random_nu};
use valuedice_core::divergence::{initial_value_term, kl_occupancy, nu_residual};
use valuedice_core::environments::{
    build_ring_mdp, generate_demonstrations, sparse_expert_dataset, stochastic_expert_policy,
};
use valuedice_core::valuedice::{
    geometric_time_index, grad_nu_exact, grad_policy_exact, grad_policy_exact_coupled, j_dice_empirical,
    j_dice_empirical_expected, j_dice_empirical_expected_with_gradients, j_dice_mix_exact, minimize_nu,
    optimal_nu, train_empirical, OptimizerKind, train_exact, virtual_initial_states, MixConfig, NuFunction, TrainingConfig,
    Weighted,
};
use valuedice_core::{
    compute_occupancy, Occupancy, Policy, StateActionTable, TabularMdp, Trajectory, Transition, DEFAULT_EPS,
};

fn ring_setup() -> (TabularMdp, Occupancy) {
    let mdp = build_ring_mdp(8).unwrap();
    let d_e = compute_occupancy(&mdp, &stochastic_expert_policy(8, 0.75).unwrap()).unwrap();
    (mdp, d_e)
}

#[test]
fn gradient_vanishes_at_inner_optimum() {
    for seed in 0..10 {
        let inst = random_instance(seed, 6);
        let mix = MixConfig::new(0.1).unwrap();
        let sol = minimize_nu(&inst.mdp, &inst.policy, &inst.nu, &inst.d_e, &inst.d_rb, mix, 1e-10, 200).unwrap();
        let g = grad_nu_exact(&inst.mdp, &inst.policy, &sol.nu, &inst.d_e, &inst.d_rb, mix);
        assert!(g.max_abs() < 1e-6, "seed {seed}: {:e}", g.max_abs());
    }
}

#[test]
fn mixed_inner_minimum_is_negative_mixture_kl() {
    let (mdp, d_e) = ring_setup();
    let uniform = Policy::uniform(8, 2);
    let d_pi = compute_occupancy(&mdp, &uniform).unwrap();
    let d_rb = compute_occupancy(&mdp, &common::random_policy_for(8, 2, 3)).unwrap();
    for alpha in [0.0, 0.1, 0.5] {
        let mix = MixConfig::new(alpha).unwrap();
        let sol = minimize_nu(&mdp, &uniform, &NuFunction::zeros(8, 2), &d_e, &d_rb, mix, 1e-10, 200).unwrap();
        let target = -kl_occupancy(&d_pi.mix(&d_rb, alpha), &d_e.mix(&d_rb, alpha), DEFAULT_EPS);
        assert!((sol.value - target).abs() < 1e-3, "alpha {alpha}");
        let closed = optimal_nu(&mdp, &uniform, &d_pi, &d_e, &d_rb, mix, 0.0).unwrap();
        let value = j_dice_mix_exact(&mdp, &uniform, &closed, &d_e, &d_rb, mix);
        assert!((value - target).abs() < 1e-10, "alpha {alpha}");
    }
}

#[test]
fn saddle_is_stationary_at_expert() {
    let mdp = build_ring_mdp(8).unwrap();
    let expert = stochastic_expert_policy(8, 0.75).unwrap();
    let d_e = compute_occupancy(&mdp, &expert).unwrap();
    for alpha in [0.0, 0.1, 0.5] {
        let mix = MixConfig::new(alpha).unwrap();
        let sol = minimize_nu(&mdp, &expert, &NuFunction::zeros(8, 2), &d_e, &d_e, mix, 1e-12, 200).unwrap();
        let coupled = grad_policy_exact_coupled(&mdp, &expert, &sol.nu, &d_e, mix).unwrap();
        assert!(coupled.gradient.max_abs() < 1e-6, "alpha {alpha}: {:e}", coupled.gradient.max_abs());
        let explicit = grad_policy_exact(&mdp, &expert, &sol.nu, &d_e, &d_e, mix);
        assert!(explicit.max_abs() < 1e-6);
    }
}

#[test]
fn unreachable_state_gets_no_gradient() {
    // State 2 is neither initial nor reachable; nu is zero there.
    let transition = vec![
        1.0, 0.0, 0.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    ];
    let mdp = TabularMdp::new(3, 2, transition, vec![1.0, 0.0, 0.0], 0.9).unwrap();
    let pi = common::random_policy_for(3, 2, 8);
    let mut nu = random_nu(3, 2, 1.0, 1);
    nu.values[(2, 0)] = 0.0;
    nu.values[(2, 1)] = 0.0;
    let d_e = common::random_occupancy(3, 2, 5);
    let d_rb = common::random_occupancy(3, 2, 6);
    let g = grad_policy_exact(&mdp, &pi, &nu, &d_e, &d_rb, MixConfig::new(0.0).unwrap());
    assert_eq!(g.row(2), &[0.0, 0.0]);
}

#[test]
fn single_pair_objective_is_flat() {
    let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.9).unwrap();
    let pi = Policy::uniform(1, 1);
    let d = compute_occupancy(&mdp, &pi).unwrap();
    for v in [-3.0, 0.0, 7.5] {
        let nu = NuFunction::new(StateActionTable::filled(1, 1, v)).unwrap();
        let g = grad_nu_exact(&mdp, &pi, &nu, &d, &d, MixConfig::new(0.0).unwrap());
        assert!(g.max_abs() < 1e-15);
    }
}

#[test]
fn expert_start_stays_matched() {
    // Plain gradient steps: Adam's per-coordinate normalization rescales the
    // roundoff-level gradients at the matched point into visible steps.
    let mdp = build_ring_mdp(8).unwrap();
    let d_u = compute_occupancy(&mdp, &Policy::uniform(8, 2)).unwrap();
    let cfg = TrainingConfig {
        n_updates: 200,
        logit_l2: 0.0,
        optimizer: OptimizerKind::Sgd,
        ..Default::default()
    };
    let result = train_exact(&mdp, &d_u, MixConfig::default(), &cfg).unwrap();
    assert!(result.kl_curve.iter().all(|p| p.value < 1e-8));
}

#[test]
fn exact_training_converges_on_stochastic_ring() {
    let (mdp, d_e) = ring_setup();
    let result = train_exact(&mdp, &d_e, MixConfig::default(), &TrainingConfig::default()).unwrap();
    assert!(result.final_kl() < 1e-2);
    assert!(result.final_kl() < result.kl_curve[0].value);
    let updates: Vec<usize> = result.kl_curve.iter().map(|p| p.update).collect();
    assert!(updates.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn exact_training_on_sparse_ring_routes_to_one_and_two() {
    let mdp = build_ring_mdp(8).unwrap();
    let data = sparse_expert_dataset(&mdp, 50, 10, 0).unwrap();
    let d_e = data.empirical_occupancy(8, 2).unwrap();
    let cfg = TrainingConfig {
        n_updates: 1500,
        ..Default::default()
    };
    let result = train_exact(&mdp, &d_e, MixConfig::default(), &cfg).unwrap();
    let greedy: Vec<Option<usize>> = (0..8).map(|s| result.final_state.policy.greedy_action(s, 1e-9)).collect();
    let expected = [0, 0, 1, 1, 1, 1, 0, 0].map(Some);
    assert_eq!(greedy, expected);
}

#[test]
fn exact_training_is_deterministic() {
    let (mdp, d_e) = ring_setup();
    let cfg = TrainingConfig {
        n_updates: 50,
        ..Default::default()
    };
    let a = train_exact(&mdp, &d_e, MixConfig::default(), &cfg).unwrap();
    let b = train_exact(&mdp, &d_e, MixConfig::default(), &cfg).unwrap();
    assert_eq!(a.kl_curve, b.kl_curve);
    assert_eq!(a.objective_curve, b.objective_curve);
}

#[test]
fn empirical_training_is_deterministic() {
    let (mdp, d_e) = ring_setup();
    let demos = generate_demonstrations(&mdp, &stochastic_expert_policy(8, 0.75).unwrap(), 5, 50, 1).unwrap();
    let cfg = TrainingConfig {
        n_updates: 300,
        seed: 9,
        ..Default::default()
    };
    let a = train_empirical(&mdp, &demos, &d_e, MixConfig::default(), &cfg).unwrap();
    let b = train_empirical(&mdp, &demos, &d_e, MixConfig::default(), &cfg).unwrap();
    assert_eq!(a.kl_curve, b.kl_curve);
    assert_eq!(a.objective_curve, b.objective_curve);
    let c = train_empirical(&mdp, &demos, &d_e, MixConfig::default(), &TrainingConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.kl_curve, c.kl_curve);
}

#[test]
fn self_imitation_stays_put() {
    let mdp = build_ring_mdp(8).unwrap();
    let uniform = Policy::uniform(8, 2);
    let d_u = compute_occupancy(&mdp, &uniform).unwrap();
    let demos = generate_demonstrations(&mdp, &uniform, 10, 50, 2).unwrap();
    let cfg = TrainingConfig {
        n_updates: 2000,
        eval_every: 10,
        seed: 4,
        ..Default::default()
    };
    let result = train_empirical(&mdp, &demos, &d_u, MixConfig::default(), &cfg).unwrap();
    assert_eq!(result.kl_curve[0].value, 0.0);
    let worst = result.kl_curve.iter().map(|p| p.value).fold(0.0, f64::max);
    assert!(worst < 5e-2, "worst {worst:e}");
}

fn exhaustive(d: &Occupancy, mdp: &TabularMdp) -> Vec<Weighted<Transition>> {
    let (ns, na) = mdp.shape();
    let mut out = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            let next = mdp.next_state_dist(s, a).iter().position(|&p| p == 1.0).unwrap();
            out.push(Weighted {
                item: Transition {
                    state: s,
                    action: a,
                    next_state: next,
                    episode_start_state: s,
                },
                weight: d.get(s, a),
            });
        }
    }
    out
}

#[test]
fn exhaustive_batch_matches_exact_objective() {
    let (mdp, d_e) = ring_setup();
    let d_rb = compute_occupancy(&mdp, &common::random_policy_for(8, 2, 21)).unwrap();
    let initial: Vec<Weighted<usize>> =
        mdp.initial_dist().iter().enumerate().map(|(s, &w)| Weighted { item: s, weight: w }).collect();
    for seed in 0..5 {
        let pi = common::random_policy_for(8, 2, 30 + seed);
        let nu = random_nu(8, 2, 2.0, 40 + seed);
        for alpha in [0.0, 0.1, 0.5] {
            let mix = MixConfig::new(alpha).unwrap();
            let batch_e = exhaustive(&d_e, &mdp);
            let batch_rb = exhaustive(&d_rb, &mdp);
            let emp = j_dice_empirical_expected(&pi, &nu, &batch_e, &batch_rb, &initial, mix, mdp.gamma()).unwrap();
            let exact = j_dice_mix_exact(&mdp, &pi, &nu, &d_e, &d_rb, mix);
            assert!((emp.value - exact).abs() < 1e-10, "alpha {alpha}");

            let step =
                j_dice_empirical_expected_with_gradients(&pi, &nu, &batch_e, &batch_rb, &initial, mix, mdp.gamma())
                    .unwrap();
            let g_nu = grad_nu_exact(&mdp, &pi, &nu, &d_e, &d_rb, mix);
            let g_pi = grad_policy_exact(&mdp, &pi, &nu, &d_e, &d_rb, mix);
            assert!(step.grad_nu.max_abs_diff(&g_nu) < 1e-10);
            assert!(step.grad_logits.max_abs_diff(&g_pi) < 1e-10);
        }
    }
}

#[test]
fn empirical_pieces_cancel_for_constant_nu() {
    let (mdp, _) = ring_setup();
    let pi = common::random_policy_for(8, 2, 1);
    let demos = generate_demonstrations(&mdp, &pi, 3, 20, 3).unwrap();
    let batch: Vec<Transition> = demos.transitions().to_vec();
    let starts: Vec<usize> = batch.iter().map(|t| t.episode_start_state).collect();
    let nu = NuFunction::new(StateActionTable::filled(8, 2, 4.0)).unwrap();
    let out = j_dice_empirical(&pi, &nu, &batch, &batch, &starts, MixConfig::default(), mdp.gamma(), 0).unwrap();
    assert!(out.value.abs() < 1e-12);
}

#[test]
fn telescoped_linear_term_matches_initial_values() {
    // The linear replay term telescopes exactly when d_rb is the policy's occupancy.
    let inst = random_instance(77, 6);
    let d = compute_occupancy(&inst.mdp, &inst.policy).unwrap();
    let x = nu_residual(&inst.mdp, &inst.policy, &inst.nu);
    let linear: f64 = d.as_slice().iter().zip(x.as_slice()).map(|(p, v)| p * v).sum();
    assert!((linear - initial_value_term(&inst.mdp, &inst.policy, &inst.nu)).abs() < 1e-12);
}

#[test]
fn geometric_mean_matches_truncated_formula() {
    let gamma: f64 = 0.9;
    let horizon = 1000;
    let n = 1_000_000;
    let mut rng = valuedice_core::rng::seeded(17);
    let total: usize = (0..n)
        .map(|_| valuedice_core::valuedice::geometric_time_index_with(horizon, gamma, &mut rng))
        .sum();
    let mean = total as f64 / n as f64;
    let gh = gamma.powi(horizon as i32);
    let expected = gamma / (1.0 - gamma) - horizon as f64 * gh / (1.0 - gh);
    assert!((mean - expected).abs() < 0.01 * expected, "{mean} vs {expected}");
    assert_eq!(geometric_time_index(1, 0.9, 3), 0);
    assert_eq!(geometric_time_index(50, 0.0, 3), 0);
}

#[test]
fn virtual_expansion_pools() {
    let traj = Trajectory {
        states: vec![0, 1, 2, 3],
        actions: vec![0, 0, 0],
    };
    let expanded = virtual_initial_states(&traj);
    let mut pool: Vec<usize> = expanded.iter().map(|t| t.episode_start_state).collect();
    pool.dedup();
    assert_eq!(pool, vec![0, 1, 2]);

    let mdp = build_ring_mdp(8).unwrap();
    let data = sparse_expert_dataset(&mdp, 30, 4, 8).unwrap();
    assert_eq!(data.initial_state_pool(), vec![0, 1, 2]);
}
