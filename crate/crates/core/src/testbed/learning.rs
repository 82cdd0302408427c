//! Tabular learners driven by online progress rewards.
//!
//! Each step queries the estimator for the incremental, init-anchored and
//! goal-anchored hops of the new state, advances a progress tracker, and
//! pays the chosen reward variant on the tracked progress. Entering a
//! terminal state ends the episode; its shaping step uses the terminal
//! progress with no bootstrap.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::mdp::TabularMdp;
use super::report::{ExperimentReport, SeedRun, REPORT_NOTE};
use super::solver::{transition_reward, RewardVariant};
use super::TestbedError;
use crate::estimators::{EstimatorQuery, HopEstimator};
use crate::exec::Execution;
use crate::progress::{ConsistencyConfig, Progress, StepHops, TrackerMode, TrackerState};
use crate::seed::{rng_for, streams};
use crate::shaping::ShapingConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerParams {
    pub learning_rate: f64,
    /// ε-greedy rate (Q-learning only).
    pub epsilon: f64,
    pub episode_cap: usize,
    /// Steps per episode before truncation.
    pub horizon: usize,
    /// Trailing window for the success rate.
    pub window: usize,
    pub threshold: f64,
    /// Stop a seed once the threshold is reached.
    pub stop_at_threshold: bool,
    pub shaping: ShapingConfig,
    pub consistency: ConsistencyConfig,
    pub tracker_mode: TrackerMode,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epsilon: 0.1,
            episode_cap: 2000,
            horizon: 200,
            window: 20,
            threshold: 0.8,
            stop_at_threshold: true,
            shaping: ShapingConfig::default(),
            consistency: ConsistencyConfig::default(),
            tracker_mode: TrackerMode::ConsistencyGated,
        }
    }
}

impl LearnerParams {
    pub fn validate(&self) -> Result<(), TestbedError> {
        let bad = |s: &str| Err(TestbedError::InvalidConfig(s.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must be in [0, 1]");
        }
        if self.episode_cap == 0 || self.horizon == 0 || self.window == 0 {
            return bad("episode_cap, horizon and window must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must be in [0, 1]");
        }
        if self.shaping.gamma() >= 1.0 {
            return bad("learners need gamma < 1");
        }
        Ok(())
    }
}

/// Per-episode reward computation with the live telescoping check.
struct OnlineReward<'a> {
    mdp: &'a TabularMdp,
    estimator: &'a dyn HopEstimator,
    variant: RewardVariant,
    params: &'a LearnerParams,
    goal: usize,
    tracker: TrackerState,
    phi_start: f64,
    discount: f64,
    shaping_sum: f64,
}

impl<'a> OnlineReward<'a> {
    fn new(
        mdp: &'a TabularMdp,
        estimator: &'a dyn HopEstimator,
        variant: RewardVariant,
        params: &'a LearnerParams,
    ) -> Self {
        let goal = mdp.gold_states.iter().next().copied().unwrap_or(mdp.start_state);
        Self {
            mdp,
            estimator,
            variant,
            params,
            goal,
            tracker: TrackerState::new(Progress::ZERO, params.tracker_mode),
            phi_start: 0.0,
            discount: 1.0,
            shaping_sum: 0.0,
        }
    }

    fn reset(&mut self) {
        self.tracker = TrackerState::new(Progress::ZERO, self.params.tracker_mode);
        self.phi_start = 0.0;
        self.discount = 1.0;
        self.shaping_sum = 0.0;
    }

    fn step(&mut self, s: usize, next: usize, rng: &mut dyn RngCore) -> Result<f64, TestbedError> {
        let gold = self.mdp.gold(s, next);
        if self.variant == RewardVariant::Gold {
            return Ok(gold);
        }
        let init = self.mdp.start_state;
        let ask = |before: usize, rng: &mut dyn RngCore| {
            self.estimator.estimate(
                &EstimatorQuery {
                    init,
                    goal: self.goal,
                    before,
                    after: next,
                    task_text: "",
                },
                rng,
            )
        };
        let hops = StepHops {
            incremental: ask(s, rng)?,
            from_init: ask(init, rng)?,
            from_goal: ask(self.goal, rng)?,
        };
        let phi = self.tracker.current.value();
        self.tracker = self.tracker.step(&hops, &self.params.consistency);
        let phi_next = self.tracker.current.value();
        let gamma = self.params.shaping.gamma();
        self.shaping_sum += self.discount * (gamma * phi_next - phi);
        self.discount *= gamma;
        Ok(transition_reward(self.variant, gold, phi, phi_next, gamma))
    }

    /// `|Σ γ^t (γΦ_{t+1} − Φ_t) − (γ^T Φ_T − Φ_0)|` for the episode so far.
    fn telescoping_error(&self) -> f64 {
        if self.variant == RewardVariant::Gold {
            return 0.0;
        }
        let boundary = self.discount * self.tracker.current.value() - self.phi_start;
        (self.shaping_sum - boundary).abs()
    }
}

struct Progression {
    window: usize,
    threshold: f64,
    successes: Vec<bool>,
    curve: Vec<f64>,
    reached_at: Option<usize>,
}

impl Progression {
    fn new(params: &LearnerParams) -> Self {
        Self {
            window: params.window,
            threshold: params.threshold,
            successes: Vec::new(),
            curve: Vec::new(),
            reached_at: None,
        }
    }

    fn record(&mut self, success: bool) {
        self.successes.push(success);
        let n = self.successes.len();
        let tail = &self.successes[n.saturating_sub(self.window)..];
        let rate = tail.iter().filter(|&&s| s).count() as f64 / self.window as f64;
        self.curve.push(rate);
        if self.reached_at.is_none() && n >= self.window && rate >= self.threshold {
            self.reached_at = Some(n);
        }
    }

    fn finish(self, seed: u64, cap: usize, max_telescoping_error: f64) -> SeedRun {
        SeedRun {
            seed,
            episodes_to_threshold: self.reached_at.unwrap_or(cap),
            reached_threshold: self.reached_at.is_some(),
            episodes_run: self.successes.len(),
            final_success_rate: self.curve.last().copied().unwrap_or(0.0),
            curve: self.curve,
            max_telescoping_error,
        }
    }
}

fn greedy_action(q: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..q.len()).filter(|&a| q[a] == best).collect();
    ties[rng.random_range(0..ties.len())]
}

fn q_learning_seed(
    mdp: &TabularMdp,
    variant: RewardVariant,
    estimator: &dyn HopEstimator,
    params: &LearnerParams,
    seed: u64,
) -> Result<SeedRun, TestbedError> {
    let mut agent = rng_for(seed, streams::AGENT, 0);
    let mut env = rng_for(seed, streams::ENV, 0);
    let mut est_rng = rng_for(seed, streams::ESTIMATOR, 0);
    let k = mdp.n_actions;
    let gamma = params.shaping.gamma();
    let mut q = vec![0.0; mdp.n_states * k];
    let mut reward = OnlineReward::new(mdp, estimator, variant, params);
    let mut progress = Progression::new(params);
    let mut max_err: f64 = 0.0;
    for _ in 0..params.episode_cap {
        reward.reset();
        let mut s = mdp.start_state;
        let mut success = false;
        for _ in 0..params.horizon {
            let a = if agent.random::<f64>() < params.epsilon {
                agent.random_range(0..k)
            } else {
                greedy_action(&q[s * k..(s + 1) * k], &mut agent)
            };
            let next = mdp.sample_next(s, a, &mut env);
            let r = reward.step(s, next, &mut est_rng)?;
            let terminal = mdp.is_terminal(next);
            let bootstrap = if terminal {
                0.0
            } else {
                q[next * k..(next + 1) * k].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            let idx = s * k + a;
            q[idx] += params.learning_rate * (r + gamma * bootstrap - q[idx]);
            s = next;
            if terminal {
                success = mdp.is_gold(next);
                break;
            }
        }
        max_err = max_err.max(reward.telescoping_error());
        progress.record(success);
        if params.stop_at_threshold && progress.reached_at.is_some() {
            break;
        }
    }
    Ok(progress.finish(seed, params.episode_cap, max_err))
}

/// Tabular Q-learning, one independent run per seed.
pub fn run_q_learning(
    mdp: &TabularMdp,
    variant: RewardVariant,
    estimator: &dyn HopEstimator,
    params: &LearnerParams,
    seeds: &[u64],
    exec: Execution,
) -> Result<ExperimentReport, TestbedError> {
    mdp.validate()?;
    params.validate()?;
    let runs = exec
        .map(seeds, |&seed| q_learning_seed(mdp, variant, estimator, params, seed))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble("q_learning", variant, estimator, params, runs))
}

fn assemble(
    algorithm: &str,
    variant: RewardVariant,
    estimator: &dyn HopEstimator,
    params: &LearnerParams,
    mut runs: Vec<SeedRun>,
) -> ExperimentReport {
    runs.sort_by_key(|r| r.seed);
    ExperimentReport {
        algorithm: algorithm.to_string(),
        reward_variant: variant,
        estimator: if variant == RewardVariant::Gold {
            "none".to_string()
        } else {
            estimator.name().to_string()
        },
        tracker_mode: params.tracker_mode,
        note: REPORT_NOTE.to_string(),
        runs,
    }
}

/// Softmax policy over a `states × actions` logit table.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `∂ log π(a|s) / ∂ θ[s, ·] = e_a − π(·|s)`.
pub fn log_softmax_grad(logits: &[f64], a: usize) -> Vec<f64> {
    let mut g: Vec<f64> = softmax_row(logits).into_iter().map(|p| -p).collect();
    g[a] += 1.0;
    g
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut u: f64 = rng.random();
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// One REINFORCE update for a finished episode. `baseline` is a per-state
/// value estimate, updated in place.
pub fn reinforce_update(
    theta: &mut [f64],
    baseline: &mut [f64],
    n_actions: usize,
    episode: &[(usize, usize, f64)],
    gamma: f64,
    lr: f64,
    baseline_lr: f64,
) {
    let mut g = 0.0;
    let mut returns = vec![0.0; episode.len()];
    for (t, &(_, _, r)) in episode.iter().enumerate().rev() {
        g = r + gamma * g;
        returns[t] = g;
    }
    let mut discount = 1.0;
    for (t, &(s, a, _)) in episode.iter().enumerate() {
        let advantage = returns[t] - baseline[s];
        let row = &mut theta[s * n_actions..(s + 1) * n_actions];
        let grad = log_softmax_grad(row, a);
        for (th, gr) in row.iter_mut().zip(grad) {
            *th += lr * discount * advantage * gr;
        }
        baseline[s] += baseline_lr * advantage;
        discount *= gamma;
    }
}

fn reinforce_seed(
    mdp: &TabularMdp,
    variant: RewardVariant,
    estimator: &dyn HopEstimator,
    params: &LearnerParams,
    seed: u64,
) -> Result<SeedRun, TestbedError> {
    let mut agent = rng_for(seed, streams::AGENT, 0);
    let mut env = rng_for(seed, streams::ENV, 0);
    let mut est_rng = rng_for(seed, streams::ESTIMATOR, 0);
    let k = mdp.n_actions;
    let gamma = params.shaping.gamma();
    let mut theta = vec![0.0; mdp.n_states * k];
    let mut baseline = vec![0.0; mdp.n_states];
    let mut reward = OnlineReward::new(mdp, estimator, variant, params);
    let mut progress = Progression::new(params);
    let mut max_err: f64 = 0.0;
    let mut episode = Vec::with_capacity(params.horizon);
    for _ in 0..params.episode_cap {
        reward.reset();
        episode.clear();
        let mut s = mdp.start_state;
        let mut success = false;
        for _ in 0..params.horizon {
            let probs = softmax_row(&theta[s * k..(s + 1) * k]);
            let a = sample_index(&probs, &mut agent);
            let next = mdp.sample_next(s, a, &mut env);
            let r = reward.step(s, next, &mut est_rng)?;
            episode.push((s, a, r));
            s = next;
            if mdp.is_terminal(next) {
                success = mdp.is_gold(next);
                break;
            }
        }
        reinforce_update(&mut theta, &mut baseline, k, &episode, gamma, params.learning_rate, 0.1);
        max_err = max_err.max(reward.telescoping_error());
        progress.record(success);
        if params.stop_at_threshold && progress.reached_at.is_some() {
            break;
        }
    }
    Ok(progress.finish(seed, params.episode_cap, max_err))
}

/// Monte-Carlo policy gradient with a softmax tabular policy.
pub fn run_reinforce(
    mdp: &TabularMdp,
    variant: RewardVariant,
    estimator: &dyn HopEstimator,
    params: &LearnerParams,
    seeds: &[u64],
    exec: Execution,
) -> Result<ExperimentReport, TestbedError> {
    mdp.validate()?;
    params.validate()?;
    let runs = exec
        .map(seeds, |&seed| reinforce_seed(mdp, variant, estimator, params, seed))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble("reinforce", variant, estimator, params, runs))
}
