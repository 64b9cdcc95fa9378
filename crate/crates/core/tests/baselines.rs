mod common;

use common::random_occupancy;
use rand::Rng;
use valuedice_core::baselines::{
    bc_fit, gail_discriminator_gradient, gail_objective, gail_optimal_discriminator, gail_train, Discriminator,
};
use valuedice_core::environments::{
    build_ring_mdp, generate_demonstrations, random_mdp, sparse_expert_dataset, stochastic_expert_policy,
    ExpertDataset,
};
use valuedice_core::valuedice::{train_exact, MixConfig, TrainingConfig};
use valuedice_core::{compute_occupancy, rng::seeded, Policy, StateActionTable, Transition, DEFAULT_EPS};

fn conditional_gap(data: &ExpertDataset, pi: &Policy, ns: usize, na: usize) -> f64 {
    let counts = data.empirical_occupancy(ns, na).unwrap();
    let mut worst = 0.0f64;
    for s in 0..ns {
        let total: f64 = counts.values().row(s).iter().sum();
        if total == 0.0 {
            continue;
        }
        for a in 0..na {
            worst = worst.max((counts.get(s, a) / total - pi.prob(s, a)).abs());
        }
    }
    worst
}

#[test]
fn bc_approaches_empirical_conditionals_as_penalty_shrinks() {
    let mdp = random_mdp(6, 3, 3, 1).unwrap();
    let data = generate_demonstrations(&mdp, &common::random_policy_for(6, 3, 2), 4, 30, 3).unwrap();
    let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&penalty| conditional_gap(&data, &bc_fit(&data, 6, 3, penalty).unwrap(), 6, 3))
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    let exact = bc_fit(&data, 6, 3, 0.0).unwrap();
    assert!(conditional_gap(&data, &exact, 6, 3) < 1e-9);
}

#[test]
fn bc_leaves_unseen_states_uniform() {
    let mut rng = seeded(8);
    for _ in 0..20 {
        let transitions: Vec<Transition> = (0..rng.gen_range(1..40))
            .map(|_| {
                let s = rng.gen_range(0..3);
                Transition {
                    state: s,
                    action: rng.gen_range(0..3),
                    next_state: s,
                    episode_start_state: s,
                }
            })
            .collect();
        let data = ExpertDataset::from_transitions(transitions);
        let pi = bc_fit(&data, 6, 3, 1e-3).unwrap();
        for s in 3..6 {
            assert_eq!(pi.action_dist(s), &[1.0 / 3.0; 3]);
        }
    }
}

#[test]
fn bc_fails_off_the_demonstrated_region() {
    let mdp = build_ring_mdp(8).unwrap();
    let data = sparse_expert_dataset(&mdp, 50, 10, 0).unwrap();
    let pi = bc_fit(&data, 8, 2, 1e-3).unwrap();
    for s in 3..8 {
        assert_eq!(pi.greedy_action(s, 1e-12), None);
    }
}

#[test]
fn discriminator_optimum_identity() {
    for seed in 0..20 {
        let d_e = random_occupancy(5, 2, seed);
        let d_p = random_occupancy(5, 2, seed + 50);
        let h = gail_optimal_discriminator(&d_e, &d_p, DEFAULT_EPS);
        for s in 0..5 {
            for a in 0..2 {
                let lhs = h.log_h(s, a) - h.log_one_minus_h(s, a);
                assert!((lhs - (d_e.get(s, a) / d_p.get(s, a)).ln()).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn discriminator_optimum_beats_perturbations() {
    let d_e = random_occupancy(6, 2, 1);
    let d_p = random_occupancy(6, 2, 2);
    let star = gail_optimal_discriminator(&d_e, &d_p, DEFAULT_EPS);
    let best = gail_objective(&star, &d_e, &d_p);
    let mut rng = seeded(3);
    for _ in 0..100 {
        let logits = star.logits.map(|v| v + rng.gen_range(-0.5..0.5));
        assert!(gail_objective(&Discriminator { logits }, &d_e, &d_p) <= best);
    }
    let neutral = Discriminator::neutral(6, 2);
    assert!((gail_objective(&neutral, &d_e, &d_e) + 2.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn discriminator_ascent_reaches_optimum() {
    let d_e = random_occupancy(4, 2, 10);
    let d_p = random_occupancy(4, 2, 11);
    let star = gail_optimal_discriminator(&d_e, &d_p, DEFAULT_EPS);
    let mut h = Discriminator::neutral(4, 2);
    for _ in 0..200_000 {
        let g = gail_discriminator_gradient(&h, &d_e, &d_p);
        h.logits.add_scaled(20.0, &g);
    }
    let probs = |d: &Discriminator| StateActionTable::from_fn(4, 2, |s, a| d.h(s, a));
    assert!(probs(&h).max_abs_diff(&probs(&star)) < 1e-4);
}

#[test]
fn gail_started_at_expert_stays_there() {
    let mdp = build_ring_mdp(8).unwrap();
    let d_u = compute_occupancy(&mdp, &Policy::uniform(8, 2)).unwrap();
    let cfg = TrainingConfig {
        n_updates: 200,
        ..Default::default()
    };
    let result = gail_train(&mdp, &d_u, &cfg).unwrap();
    assert!(result.kl_curve.iter().all(|p| p.value < 1e-6));
}

#[test]
fn gail_converges_on_stochastic_ring() {
    let mdp = build_ring_mdp(8).unwrap();
    let d_e = compute_occupancy(&mdp, &stochastic_expert_policy(8, 0.75).unwrap()).unwrap();
    let result = gail_train(&mdp, &d_e, &TrainingConfig::default()).unwrap();
    assert!(result.final_kl() < 5e-2, "{}", result.final_kl());
}

#[test]
fn gail_is_not_better_than_valuedice_on_sparse_ring() {
    let mdp = build_ring_mdp(8).unwrap();
    let data = sparse_expert_dataset(&mdp, 50, 10, 0).unwrap();
    let d_e = data.empirical_occupancy(8, 2).unwrap();
    // Both methods share the logit L2 penalty, which sets their final plateaus.
    let cfg = TrainingConfig {
        n_updates: 5000,
        ..Default::default()
    };
    let gail = gail_train(&mdp, &d_e, &cfg).unwrap();
    let vd = train_exact(&mdp, &d_e, MixConfig::new(0.0).unwrap(), &cfg).unwrap();
    assert!(gail.final_kl() >= vd.final_kl() - 1e-3, "gail {} valuedice {}", gail.final_kl(), vd.final_kl());
}
