//! Experiment orchestration: environment setup, per-seed training, metric
//! rows and summaries.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use valuedice_core::baselines::{bc_fit, bc_loss, gail_train};
use valuedice_core::divergence::kl_occupancy;
use valuedice_core::environments::{
    build_ring_mdp, generate_demonstrations, random_mdp, random_policy, sparse_expert_dataset,
    stochastic_expert_policy, ExpertDataset,
};
use valuedice_core::valuedice::{train_empirical, train_exact, CurvePoint, NuFunction, SaddleState, TrainResult};
use valuedice_core::{compute_occupancy, Occupancy, Policy, TabularMdp, DEFAULT_EPS};

use crate::config::{Algorithm, ExperimentConfig, ExperimentName, RANDOM_SWEEP_STATES};
use crate::error::{HarnessError, Result};
use crate::io::{self, KlPoint, MetricsRow};

const DEMO_STREAM: u64 = 0xD3E0_5EED;
const EXPERT_STREAM: u64 = 0xE4BE_47A1;
/// Logit scale of random-sweep experts.
const EXPERT_LOGIT_SCALE: f64 = 2.0;

/// Everything a trainer needs for one seed.
#[derive(Debug, Clone)]
pub struct Setup {
    pub mdp: TabularMdp,
    pub demonstrations: ExpertDataset,
    /// Occupancy the exact trainers match and every KL is measured against.
    pub target: Occupancy,
}

pub fn build_setup(cfg: &ExperimentConfig, seed: u64) -> Result<Setup> {
    let env = &cfg.environment;
    let demo_seed = seed ^ DEMO_STREAM;
    match cfg.experiment {
        ExperimentName::RingStochastic => {
            let n = env.ring_states();
            let mdp = build_ring_mdp(n)?.with_gamma(env.ring_gamma())?;
            let expert = stochastic_expert_policy(n, env.p_forward)?;
            let demonstrations = generate_demonstrations(&mdp, &expert, env.n_trajectories, env.horizon, demo_seed)?;
            let target = compute_occupancy(&mdp, &expert)?;
            Ok(Setup {
                mdp,
                demonstrations,
                target,
            })
        }
        ExperimentName::RingSparse => {
            let n = env.ring_states();
            let mdp = build_ring_mdp(n)?.with_gamma(env.ring_gamma())?;
            let demonstrations = sparse_expert_dataset(&mdp, env.horizon, env.n_trajectories, demo_seed)?;
            let target = demonstrations.empirical_occupancy(n, 2)?;
            Ok(Setup {
                mdp,
                demonstrations,
                target,
            })
        }
        ExperimentName::RandomSweep => {
            let mut mdp = match &env.mdp_file {
                Some(path) => io::load_mdp(path)?,
                None => random_mdp(
                    env.n_states.unwrap_or(RANDOM_SWEEP_STATES),
                    env.n_actions,
                    env.branching,
                    seed,
                )?,
            };
            if let Some(g) = env.gamma {
                mdp = mdp.with_gamma(g)?;
            }
            let (ns, na) = mdp.shape();
            let expert = random_policy(ns, na, EXPERT_LOGIT_SCALE, seed ^ EXPERT_STREAM);
            let demonstrations = generate_demonstrations(&mdp, &expert, env.n_trajectories, env.horizon, demo_seed)?;
            let target = compute_occupancy(&mdp, &expert)?;
            Ok(Setup {
                mdp,
                demonstrations,
                target,
            })
        }
    }
}

fn bc_result(setup: &Setup, penalty: f64, seed: u64) -> valuedice_core::Result<TrainResult> {
    let (ns, na) = setup.mdp.shape();
    let policy = bc_fit(&setup.demonstrations, ns, na, penalty)?;
    let kl = kl_occupancy(&compute_occupancy(&setup.mdp, &policy)?, &setup.target, DEFAULT_EPS);
    let loss = bc_loss(&setup.demonstrations, &policy);
    Ok(TrainResult {
        final_state: SaddleState {
            policy,
            nu: NuFunction::zeros(ns, na),
            update_index: 0,
        },
        kl_curve: vec![CurvePoint { update: 0, value: kl }],
        objective_curve: vec![CurvePoint { update: 0, value: loss }],
        alpha: 0.0,
        seed,
    })
}

/// Runs one algorithm for one seed on a prepared setup.
pub fn train(cfg: &ExperimentConfig, algorithm: Algorithm, setup: &Setup, seed: u64) -> Result<TrainResult> {
    let training = valuedice_core::valuedice::TrainingConfig {
        seed,
        ..cfg.training.clone()
    };
    let out = match algorithm {
        Algorithm::ValueDiceExact => train_exact(&setup.mdp, &setup.target, cfg.mix, &training),
        Algorithm::ValueDiceEmpirical => {
            train_empirical(&setup.mdp, &setup.demonstrations, &setup.target, cfg.mix, &training)
        }
        Algorithm::Bc => bc_result(setup, cfg.bc_penalty, seed),
        Algorithm::Gail => gail_train(&setup.mdp, &setup.target, &training),
    };
    out.map_err(|source| HarnessError::Training { seed, source })
}

/// One trained (algorithm, seed) pair.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub result: TrainResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyRow {
    pub state: usize,
    /// `None` when the top actions tie (e.g. BC at unseen states).
    pub greedy: Option<usize>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_kl: f64,
    pub greedy_policy: Vec<GreedyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub final_kl_mean: f64,
    pub final_kl_stddev: f64,
    pub seeds: Vec<SeedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: ExperimentName,
    pub algorithms: Vec<AlgorithmSummary>,
    /// Algorithms by ascending mean final KL.
    pub ranking: Vec<Algorithm>,
}

/// Tie tolerance for greedy-action tables.
const GREEDY_TOL: f64 = 1e-9;

pub fn greedy_table(policy: &Policy) -> Vec<GreedyRow> {
    (0..policy.n_states())
        .map(|s| GreedyRow {
            state: s,
            greedy: policy.greedy_action(s, GREEDY_TOL),
            probabilities: policy.action_dist(s).to_vec(),
        })
        .collect()
}

fn mean_and_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(experiment: ExperimentName, runs: &[SeedRun], order: &[Algorithm]) -> Summary {
    let algorithms: Vec<AlgorithmSummary> = order
        .iter()
        .map(|&algorithm| {
            let mine: Vec<&SeedRun> = runs.iter().filter(|r| r.algorithm == algorithm).collect();
            let finals: Vec<f64> = mine.iter().map(|r| r.result.final_kl()).collect();
            let (mean, stddev) = mean_and_stddev(&finals);
            AlgorithmSummary {
                algorithm,
                alpha: mine.first().map_or(0.0, |r| r.result.alpha),
                final_kl_mean: mean,
                final_kl_stddev: stddev,
                seeds: mine
                    .iter()
                    .map(|r| SeedSummary {
                        seed: r.seed,
                        final_kl: r.result.final_kl(),
                        greedy_policy: greedy_table(&r.result.final_state.policy),
                    })
                    .collect(),
            }
        })
        .collect();
    let mut ranking: Vec<(f64, Algorithm)> = algorithms.iter().map(|a| (a.final_kl_mean, a.algorithm)).collect();
    ranking.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    Summary {
        experiment,
        algorithms,
        ranking: ranking.into_iter().map(|(_, a)| a).collect(),
    }
}

/// Output of [`run_experiment`] and [`compare_baselines`].
#[derive(Debug, Clone)]
pub struct Report {
    pub runs: Vec<SeedRun>,
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
}

/// Path of the JSON summary written next to a metrics CSV.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("summary.json")
}

impl Report {
    pub fn final_kl(&self, algorithm: Algorithm, seed: u64) -> Option<f64> {
        self.runs
            .iter()
            .find(|r| r.algorithm == algorithm && r.seed == seed)
            .map(|r| r.result.final_kl())
    }

    /// Writes the metrics CSV and the summary JSON beside it.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        io::write_metrics_csv(&self.rows, csv_path)?;
        let path = summary_path(csv_path);
        let mut text = serde_json::to_string_pretty(&self.summary).map_err(|e| HarnessError::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| HarnessError::Io { path, source })
    }
}

fn run_algorithms(cfg: &ExperimentConfig, algorithms: &[Algorithm]) -> Result<Report> {
    cfg.validate()?;
    let per_seed: Vec<Vec<SeedRun>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let setup = build_setup(cfg, seed)?;
            algorithms
                .iter()
                .map(|&algorithm| {
                    Ok(SeedRun {
                        algorithm,
                        seed,
                        result: train(cfg, algorithm, &setup, seed)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs: Vec<SeedRun> = per_seed.into_iter().flatten().collect();
    let rank = |a: Algorithm| algorithms.iter().position(|&b| b == a).unwrap_or(usize::MAX);
    runs.sort_by_key(|r| (rank(r.algorithm), r.seed));
    let mut rows: Vec<MetricsRow> = runs
        .iter()
        .flat_map(|r| MetricsRow::from_result(&r.result, r.algorithm.as_str()))
        .collect();
    rows.sort_by_key(|row| {
        let algorithm = row.algorithm.parse().map(rank).unwrap_or(usize::MAX);
        (algorithm, row.seed, row.update)
    });
    let summary = summarize(cfg.experiment, &runs, algorithms);
    Ok(Report { runs, rows, summary })
}

/// Runs the configured algorithm on every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    run_algorithms(cfg, &[cfg.algorithm])
}

/// Runs ValueDICE (the configured variant, exact by default), BC and GAIL on
/// identical demonstrations and seeds.
pub fn compare_baselines(cfg: &ExperimentConfig) -> Result<Report> {
    let valuedice = if cfg.algorithm.is_valuedice() {
        cfg.algorithm
    } else {
        Algorithm::ValueDiceExact
    };
    run_algorithms(cfg, &[valuedice, Algorithm::Bc, Algorithm::Gail])
}

/// Writes `update,kl` for external plotting; values are the curve's own.
pub fn export_kl_curve(result: &TrainResult, path: &Path) -> Result<()> {
    if result.kl_curve.is_empty() {
        return Err(HarnessError::Format {
            path: path.to_owned(),
            message: String::from("KL curve is empty"),
        });
    }
    let points: Vec<KlPoint> = result
        .kl_curve
        .iter()
        .map(|p| KlPoint {
            update: p.update,
            kl: p.value,
        })
        .collect();
    io::write_kl_curve(&points, path)
}
