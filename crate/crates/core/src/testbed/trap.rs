//! A lure state with high progress sitting next to a risky completing move.
//!
//! States: `start` (Φ=0), `honeypot` (Φ=h), `goal` (Φ=1, gold, terminal) and
//! `fail` (Φ=0, terminal). Actions: `advance` and `stay`. From the honeypot,
//! `advance` reaches the goal with probability `1 − risk` and fails otherwise.
//! Under the raw progress difference the expected reward for advancing is
//! `(1 − risk)(1 − h) − risk·h`, which is negative for the canonical
//! parameters, so a naive learner parks at the honeypot.

use serde::{Deserialize, Serialize};

use super::mdp::TabularMdp;
use super::solver::{solve_variant, QTable, RewardVariant};
use super::TestbedError;
use crate::progress::Progress;

pub const START: usize = 0;
pub const HONEYPOT: usize = 1;
pub const GOAL: usize = 2;
pub const FAIL: usize = 3;
pub const ADVANCE: usize = 0;
pub const STAY: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapMdpSpec {
    pub honeypot_potential: f64,
    pub path_risk: f64,
    pub horizon: usize,
}

impl Default for TrapMdpSpec {
    fn default() -> Self {
        Self {
            honeypot_potential: 0.9,
            path_risk: 0.3,
            horizon: 200,
        }
    }
}

impl TrapMdpSpec {
    pub fn validate(&self) -> Result<(), TestbedError> {
        if !(0.0..1.0).contains(&self.honeypot_potential) {
            return Err(TestbedError::InvalidSpec(format!(
                "honeypot_potential must be in [0, 1), got {}",
                self.honeypot_potential
            )));
        }
        if !(0.0..1.0).contains(&self.path_risk) {
            return Err(TestbedError::InvalidSpec("path_risk must be in [0, 1)".into()));
        }
        if self.horizon == 0 {
            return Err(TestbedError::InvalidSpec("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<TabularMdp, TestbedError> {
        self.validate()?;
        let r = self.path_risk;
        let mut honeypot_advance = vec![(GOAL, 1.0 - r)];
        if r > 0.0 {
            honeypot_advance.push((FAIL, r));
        }
        let transitions = vec![
            vec![(HONEYPOT, 1.0)],
            vec![(START, 1.0)],
            honeypot_advance,
            vec![(HONEYPOT, 1.0)],
            vec![(GOAL, 1.0)],
            vec![(GOAL, 1.0)],
            vec![(FAIL, 1.0)],
            vec![(FAIL, 1.0)],
        ];
        let mdp = TabularMdp {
            n_states: 4,
            n_actions: 2,
            transitions,
            gold_states: [GOAL].into_iter().collect(),
            start_state: START,
            terminal_states: [GOAL, FAIL].into_iter().collect(),
            true_potential: vec![
                Progress::ZERO,
                Progress::clamped(self.honeypot_potential),
                Progress::ONE,
                Progress::ZERO,
            ],
        };
        mdp.validate()?;
        Ok(mdp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyOutcome {
    pub q: QTable,
    /// Action followed at the honeypot (lowest index among ties).
    pub honeypot_action: usize,
    pub honeypot_greedy: Vec<usize>,
    /// Probability of having reached the goal within the horizon.
    pub goal_probability: f64,
    /// `Σ_{t=1..H} γ^{t−1} E[Φ(s_t)]` along the greedy policy.
    pub accumulated_progress: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrapReport {
    pub spec: TrapMdpSpec,
    pub gamma: f64,
    pub naive: PolicyOutcome,
    pub grm: PolicyOutcome,
    /// Accumulated-progress value of the policy that parks at the honeypot.
    pub stagnation_value: f64,
    pub separated: bool,
}

fn outcome(mdp: &TabularMdp, q: QTable, spec: &TrapMdpSpec, gamma: f64) -> PolicyOutcome {
    let policy: Vec<usize> = q.greedy.iter().map(|g| g[0]).collect();
    let phi = mdp.potential_values();
    let mut dist = vec![0.0; mdp.n_states];
    dist[mdp.start_state] = 1.0;
    let mut accumulated = 0.0;
    let mut discount = 1.0;
    for _ in 0..spec.horizon {
        let mut next = vec![0.0; mdp.n_states];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for &(t, p) in mdp.row(s, policy[s]) {
                next[t] += mass * p;
            }
        }
        dist = next;
        accumulated += discount * dist.iter().zip(&phi).map(|(m, f)| m * f).sum::<f64>();
        discount *= gamma;
    }
    PolicyOutcome {
        honeypot_action: policy[HONEYPOT],
        honeypot_greedy: q.greedy[HONEYPOT].clone(),
        goal_probability: dist[GOAL],
        accumulated_progress: accumulated,
        q,
    }
}

/// Solves the trap exactly under the naive progress difference and under the
/// shaped reward.
pub fn demonstrate_semantic_trap(spec: &TrapMdpSpec, gamma: f64) -> Result<TrapReport, TestbedError> {
    let mdp = spec.build()?;
    let phi = mdp.potential_values();
    let tol = 1e-10;
    let naive_q = solve_variant(&mdp, RewardVariant::Naive, &phi, gamma, tol)?;
    let grm_q = solve_variant(&mdp, RewardVariant::Grm, &phi, gamma, tol)?;
    let naive = outcome(&mdp, naive_q, spec, gamma);
    let grm = outcome(&mdp, grm_q, spec, gamma);
    let h = spec.honeypot_potential;
    let stagnation_value = h * (1.0 - gamma.powi(spec.horizon as i32)) / (1.0 - gamma);
    let separated = naive.honeypot_greedy != grm.honeypot_greedy
        && naive.goal_probability == 0.0
        && grm.goal_probability > 0.0;
    Ok(TrapReport {
        spec: *spec,
        gamma,
        naive,
        grm,
        stagnation_value,
        separated,
    })
}
