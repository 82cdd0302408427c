//! Canonical gridworld experiments.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use serde::Serialize;

use super::gridworld::GridWorld;
use super::learning::{run_q_learning, LearnerParams};
use super::report::{sign_test_less, ExperimentReport, SignTest};
use super::solver::RewardVariant;
use super::TestbedError;
use crate::estimators::{
    fit_one_shot, hop_mse, FeatureMap, FittedEstimator, HopEstimator, NoiseModel, NoisyEstimator,
    OneShotFitConfig, OracleEstimator, StateId,
};
use crate::exec::Execution;
use crate::labeling::SamplingConfig;
use crate::progress::{hop_label, TrackerMode};
use crate::seed::{child_seed, rng_for, streams};

/// `n` seeds split from `root`.
pub fn seed_list(root: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| child_seed(root, streams::AGENT, i)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub baseline: ExperimentReport,
    pub treatment: ExperimentReport,
    /// Treatment needing fewer episodes counts as a win.
    pub sign_test: SignTest,
}

impl Comparison {
    fn new(baseline: ExperimentReport, treatment: ExperimentReport) -> Self {
        let sign_test = sign_test_less(
            &treatment.episodes_to_threshold(),
            &baseline.episodes_to_threshold(),
        );
        Self {
            baseline,
            treatment,
            sign_test,
        }
    }
}

/// Sparse gold reward against shaped reward from the oracle estimator.
pub fn grm_vs_sparse(
    grid: &GridWorld,
    params: &LearnerParams,
    seeds: &[u64],
    exec: Execution,
) -> Result<Comparison, TestbedError> {
    let oracle = OracleEstimator::new(grid.mdp.true_potential.clone());
    let gold = run_q_learning(&grid.mdp, RewardVariant::Gold, &oracle, params, seeds, exec)?;
    let grm = run_q_learning(&grid.mdp, RewardVariant::Grm, &oracle, params, seeds, exec)?;
    Ok(Comparison::new(gold, grm))
}

/// Off-demonstration open cells whose true progress is below `max_progress`.
pub fn low_progress_off_path_region(
    grid: &GridWorld,
    max_progress: f64,
) -> Result<BTreeSet<StateId>, TestbedError> {
    let demo = grid.demonstration("demo")?;
    let on_path: BTreeSet<StateId> = demo.frames_per_view["grid"]
        .iter()
        .filter_map(|f| f.parse().ok())
        .collect();
    Ok(grid
        .live_states()
        .into_iter()
        .filter(|s| !on_path.contains(s) && grid.mdp.true_potential[*s].value() < max_progress)
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct GatingSetup {
    pub noise: NoiseModel,
}

impl GatingSetup {
    /// Divergence 0.4 on low-progress cells off the demonstration, plus
    /// Gaussian noise `sigma` everywhere.
    pub fn canonical(grid: &GridWorld, sigma: f64) -> Result<Self, TestbedError> {
        Ok(Self {
            noise: NoiseModel {
                gaussian_sigma: sigma,
                ood_region: low_progress_off_path_region(grid, 0.2)?,
                ood_divergence: 0.4,
                clamp: true,
            },
        })
    }
}

/// Noisy estimator with the plain three-way average against the same
/// estimator behind the consistency gate. Seeds are paired.
pub fn gated_vs_ungated(
    grid: &GridWorld,
    setup: &GatingSetup,
    params: &LearnerParams,
    seeds: &[u64],
    exec: Execution,
) -> Result<Comparison, TestbedError> {
    let noisy = NoisyEstimator::new(grid.mdp.true_potential.clone(), setup.noise.clone())?;
    let ungated = LearnerParams {
        tracker_mode: TrackerMode::FusionAverage,
        ..params.clone()
    };
    let gated = LearnerParams {
        tracker_mode: TrackerMode::ConsistencyGated,
        ..params.clone()
    };
    let a = run_q_learning(&grid.mdp, RewardVariant::Grm, &noisy, &ungated, seeds, exec)?;
    let b = run_q_learning(&grid.mdp, RewardVariant::Grm, &noisy, &gated, seeds, exec)?;
    Ok(Comparison::new(a, b))
}

#[derive(Debug, Clone, Serialize)]
pub struct OneShotOutcome {
    pub fitted: FittedEstimator,
    pub baseline: FittedEstimator,
    pub fitted_mse: f64,
    pub baseline_mse: f64,
    pub label_variance: f64,
    pub held_out_pairs: usize,
}

/// Ordered pairs of live states off the demonstration, labeled by the true
/// potential. At most `max_pairs`, drawn with `seed`.
pub fn held_out_pairs(
    grid: &GridWorld,
    max_pairs: usize,
    seed: u64,
) -> Result<Vec<(StateId, StateId, f64)>, TestbedError> {
    let demo = grid.demonstration("demo")?;
    let on_path: BTreeSet<StateId> = demo.frames_per_view["grid"]
        .iter()
        .filter_map(|f| f.parse().ok())
        .collect();
    let states: Vec<StateId> = grid
        .live_states()
        .into_iter()
        .filter(|s| !on_path.contains(s))
        .collect();
    let phi = &grid.mdp.true_potential;
    let mut all = Vec::new();
    for &a in &states {
        for &b in &states {
            if a != b {
                all.push((a, b, hop_label(phi[a], phi[b]).value()));
            }
        }
    }
    if all.len() <= max_pairs {
        return Ok(all);
    }
    let mut rng = rng_for(seed, streams::FIT, 1);
    Ok(all.choose_multiple(&mut rng, max_pairs).copied().collect())
}

/// Configuration of the one-shot fit on the grid demonstration.
pub fn one_shot_config(grid: &GridWorld, feature_map: FeatureMap, seed: u64) -> Result<OneShotFitConfig, TestbedError> {
    Ok(OneShotFitConfig {
        demo: grid.demonstration("demo")?,
        state_coords: grid.coords.clone(),
        feature_map,
        regularization: 0.1,
        pair_budget: 400,
        sampling: SamplingConfig {
            chunk_size: 1,
            rng_seed: seed,
            ..SamplingConfig::default()
        },
    })
}

/// Fits RBF features on the single demonstration and a random-feature
/// baseline on the same pairs, then scores both on held-out pairs.
pub fn one_shot_adaptation(grid: &GridWorld, seed: u64) -> Result<OneShotOutcome, TestbedError> {
    let fitted = fit_one_shot(&one_shot_config(grid, FeatureMap::rbf_grid(5, 5, 0.2), seed)?)?;
    let baseline = fit_one_shot(&one_shot_config(
        grid,
        FeatureMap::Random {
            dim: 16,
            seed: child_seed(seed, streams::FIT, 7),
        },
        seed,
    )?)?;
    let pairs = held_out_pairs(grid, 5000, seed)?;
    let init = grid.mdp.start_state;
    let goal = *grid.mdp.gold_states.iter().next().unwrap_or(&init);
    let mut rng = rng_for(seed, streams::ESTIMATOR, 0);
    let fitted_mse = hop_mse(&fitted, &pairs, init, goal, &mut rng)?;
    let baseline_mse = hop_mse(&baseline, &pairs, init, goal, &mut rng)?;
    let n = pairs.len().max(1) as f64;
    let mean = pairs.iter().map(|p| p.2).sum::<f64>() / n;
    let label_variance = pairs.iter().map(|p| (p.2 - mean).powi(2)).sum::<f64>() / n;
    Ok(OneShotOutcome {
        fitted,
        baseline,
        fitted_mse,
        baseline_mse,
        label_variance,
        held_out_pairs: pairs.len(),
    })
}

/// Shaped Q-learning with any estimator; convenience for comparisons.
pub fn grm_with(
    grid: &GridWorld,
    estimator: &dyn HopEstimator,
    params: &LearnerParams,
    seeds: &[u64],
    exec: Execution,
) -> Result<ExperimentReport, TestbedError> {
    run_q_learning(&grid.mdp, RewardVariant::Grm, estimator, params, seeds, exec)
}
