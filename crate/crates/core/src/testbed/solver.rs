use serde::{Deserialize, Serialize};

use super::mdp::TabularMdp;
use super::TestbedError;
use crate::shaping::ShapingConfig;

/// Tie tolerance for greedy action sets.
pub const TIE_TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    /// Sparse success reward only.
    Gold,
    /// Gold plus discounted potential difference.
    Grm,
    /// Raw progress difference, no gold.
    Naive,
}

impl RewardVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardVariant::Gold => "gold",
            RewardVariant::Grm => "grm",
            RewardVariant::Naive => "naive",
        }
    }
}

impl std::str::FromStr for RewardVariant {
    type Err = TestbedError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gold" | "sparse" => Ok(RewardVariant::Gold),
            "grm" => Ok(RewardVariant::Grm),
            "naive" => Ok(RewardVariant::Naive),
            other => Err(TestbedError::InvalidConfig(format!("unknown reward variant `{other}`"))),
        }
    }
}

/// Reward on a transition given potentials of both ends.
pub fn transition_reward(variant: RewardVariant, gold: f64, phi: f64, phi_next: f64, gamma: f64) -> f64 {
    match variant {
        RewardVariant::Gold => gold,
        RewardVariant::Grm => gold + gamma * phi_next - phi,
        RewardVariant::Naive => phi_next - phi,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
    /// Per state, actions within [`TIE_TOLERANCE`] of the max.
    pub greedy: Vec<Vec<usize>>,
    pub iterations: usize,
    pub residual: f64,
}

impl QTable {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn value(&self, s: usize) -> f64 {
        (0..self.n_actions).map(|a| self.q(s, a)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Q-value iteration for `reward(s, a, s')`. Stops once the sup-norm change
/// guarantees the result is within `tol` of the fixed point.
pub fn value_iteration(
    mdp: &TabularMdp,
    reward: &dyn Fn(usize, usize, usize) -> f64,
    gamma: f64,
    tol: f64,
) -> Result<QTable, TestbedError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(TestbedError::InvalidConfig(format!("gamma must be in (0, 1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(TestbedError::InvalidConfig("tol must be positive".into()));
    }
    let (n, k) = (mdp.n_states, mdp.n_actions);
    let mut expected = vec![0.0; n * k];
    for s in 0..n {
        for a in 0..k {
            expected[s * k + a] = mdp.row(s, a).iter().map(|&(t, p)| p * reward(s, a, t)).sum();
        }
    }
    let stop = tol * (1.0 - gamma) / gamma;
    let mut q = vec![0.0; n * k];
    let mut v = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        residual = 0.0;
        for s in 0..n {
            for a in 0..k {
                let future: f64 = mdp.row(s, a).iter().map(|&(t, p)| p * v[t]).sum();
                let updated = expected[s * k + a] + gamma * future;
                residual = f64::max(residual, (updated - q[s * k + a]).abs());
                q[s * k + a] = updated;
            }
        }
        for s in 0..n {
            v[s] = q[s * k..(s + 1) * k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        if residual <= stop {
            break;
        }
    }
    if residual > stop {
        return Err(TestbedError::NoConvergence { iterations, residual });
    }
    let greedy = (0..n)
        .map(|s| {
            (0..k)
                .filter(|&a| q[s * k + a] >= v[s] - TIE_TOLERANCE)
                .collect()
        })
        .collect();
    Ok(QTable {
        n_states: n,
        n_actions: k,
        values: q,
        greedy,
        iterations,
        residual,
    })
}

/// Solves `mdp` under a reward variant built from `potential`.
pub fn solve_variant(
    mdp: &TabularMdp,
    variant: RewardVariant,
    potential: &[f64],
    gamma: f64,
    tol: f64,
) -> Result<QTable, TestbedError> {
    let reward = |s: usize, _a: usize, t: usize| {
        transition_reward(variant, mdp.gold(s, t), potential[s], potential[t], gamma)
    };
    value_iteration(mdp, &reward, gamma, tol)
}

/// How the shaping term is built when checking invariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMutation {
    /// `γΦ(s') − Φ(s)`
    #[default]
    None,
    /// `Φ(s') − Φ(s)` added to gold, discount mismatched.
    NaiveDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDiff {
    pub state: usize,
    pub gold_actions: Vec<usize>,
    pub shaped_actions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub holds: bool,
    pub greedy_sets_match: bool,
    /// `max |Q_shaped(s,a) − (Q_gold(s,a) − Φ(s))|`
    pub max_shift_error: f64,
    pub differing_states: Vec<StateDiff>,
}

pub const SHIFT_TOLERANCE: f64 = 1e-6;

/// Checks that shaping with the MDP's own potential leaves greedy sets
/// unchanged at live states and shifts Q by `−Φ(s)`.
pub fn verify_policy_invariance(
    mdp: &TabularMdp,
    cfg: &ShapingConfig,
) -> Result<InvarianceReport, TestbedError> {
    verify_policy_invariance_with(mdp, cfg, &mdp.potential_values(), ShapingMutation::None)
}

pub fn verify_policy_invariance_with(
    mdp: &TabularMdp,
    cfg: &ShapingConfig,
    potential: &[f64],
    mutation: ShapingMutation,
) -> Result<InvarianceReport, TestbedError> {
    if potential.len() != mdp.n_states {
        return Err(TestbedError::InvalidConfig("potential length mismatch".into()));
    }
    let gamma = cfg.gamma();
    let tol = 1e-9;
    let gold = value_iteration(mdp, &|s, _, t| mdp.gold(s, t), gamma, tol)?;
    let shaped = match mutation {
        ShapingMutation::None => solve_variant(mdp, RewardVariant::Grm, potential, gamma, tol)?,
        ShapingMutation::NaiveDifference => value_iteration(
            mdp,
            &|s, _, t| mdp.gold(s, t) + potential[t] - potential[s],
            gamma,
            tol,
        )?,
    };
    let mut max_shift_error: f64 = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let e = (shaped.q(s, a) - (gold.q(s, a) - potential[s])).abs();
            max_shift_error = max_shift_error.max(e);
        }
    }
    let differing_states: Vec<StateDiff> = (0..mdp.n_states)
        .filter(|&s| !mdp.is_terminal(s) && gold.greedy[s] != shaped.greedy[s])
        .map(|s| StateDiff {
            state: s,
            gold_actions: gold.greedy[s].clone(),
            shaped_actions: shaped.greedy[s].clone(),
        })
        .collect();
    let greedy_sets_match = differing_states.is_empty();
    Ok(InvarianceReport {
        holds: greedy_sets_match && max_shift_error <= SHIFT_TOLERANCE,
        greedy_sets_match,
        max_shift_error,
        differing_states,
    })
}
