use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TestbedError;
use crate::progress::Progress;
use crate::seed::{rng_for, streams};

pub const MAX_STATES: usize = 400;

/// Finite MDP with sparse transition rows and a ground-truth potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row `s * n_actions + a` lists `(s', P(s'|s,a))`.
    pub transitions: Vec<Vec<(usize, f64)>>,
    /// Entering one of these pays the gold reward.
    pub gold_states: BTreeSet<usize>,
    pub start_state: usize,
    pub terminal_states: BTreeSet<usize>,
    pub true_potential: Vec<Progress>,
}

impl TabularMdp {
    pub fn validate(&self) -> Result<(), TestbedError> {
        let bad = |s: String| Err(TestbedError::InvalidMdp(s));
        if self.n_states == 0 || self.n_actions == 0 {
            return bad("need at least one state and one action".into());
        }
        if self.n_states > MAX_STATES {
            return bad(format!("{} states exceeds the cap of {MAX_STATES}", self.n_states));
        }
        if self.transitions.len() != self.n_states * self.n_actions {
            return bad("transition table has the wrong number of rows".into());
        }
        if self.true_potential.len() != self.n_states {
            return bad("potential must have one value per state".into());
        }
        if self.start_state >= self.n_states {
            return bad("start state out of range".into());
        }
        for set in [&self.gold_states, &self.terminal_states] {
            if set.iter().any(|&s| s >= self.n_states) {
                return bad("state set refers to a missing state".into());
            }
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.row(s, a);
                let mut sum = 0.0;
                for &(next, p) in row {
                    if next >= self.n_states || !(0.0..=1.0).contains(&p) {
                        return bad(format!("bad entry in row ({s}, {a})"));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return bad(format!("row ({s}, {a}) sums to {sum}"));
                }
                if self.is_terminal(s) && row.iter().any(|&(n, p)| n != s && p > 0.0) {
                    return bad(format!("terminal state {s} is not absorbing"));
                }
            }
        }
        if self.true_potential[self.start_state].value() != 0.0 {
            return bad("potential of the start state must be 0".into());
        }
        if self.gold_states.iter().any(|&g| self.true_potential[g].value() != 1.0) {
            return bad("potential of gold states must be 1".into());
        }
        Ok(())
    }

    pub fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.n_actions + a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal_states.contains(&s)
    }

    pub fn is_gold(&self, s: usize) -> bool {
        self.gold_states.contains(&s)
    }

    /// Sparse gold reward: 1 for entering a gold state from a live state.
    pub fn gold(&self, s: usize, next: usize) -> f64 {
        if !self.is_terminal(s) && self.is_gold(next) {
            1.0
        } else {
            0.0
        }
    }

    pub fn potential_values(&self) -> Vec<f64> {
        self.true_potential.iter().map(|p| p.value()).collect()
    }

    /// Draws a successor from row `(s, a)`.
    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let row = self.row(s, a);
        let mut u: f64 = rng.random();
        for &(next, p) in row {
            if u < p {
                return next;
            }
            u -= p;
        }
        row.last().map_or(s, |&(n, _)| n)
    }
}

/// Shape limits for [`random_mdp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMdpConfig {
    pub min_states: usize,
    pub max_states: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    /// Successors per `(s, a)` row, at most.
    pub max_branching: usize,
}

impl Default for RandomMdpConfig {
    fn default() -> Self {
        Self {
            min_states: 3,
            max_states: 20,
            min_actions: 2,
            max_actions: 4,
            max_branching: 3,
        }
    }
}

/// Random MDP: state 0 starts, the last state is the gold terminal, the one
/// before it a failing terminal when there is room. Potentials of other
/// states are uniform in `[0, 1]`.
pub fn random_mdp(seed: u64, index: u64, cfg: &RandomMdpConfig) -> TabularMdp {
    let mut rng = rng_for(seed, streams::MDP_GEN, index);
    let n = rng.random_range(cfg.min_states.max(2)..=cfg.max_states.max(cfg.min_states.max(2)));
    let k = rng.random_range(cfg.min_actions.max(1)..=cfg.max_actions.max(cfg.min_actions.max(1)));
    let goal = n - 1;
    let mut terminal: BTreeSet<usize> = [goal].into_iter().collect();
    if n >= 4 {
        terminal.insert(n - 2);
    }
    let mut transitions = Vec::with_capacity(n * k);
    for s in 0..n {
        for _ in 0..k {
            if terminal.contains(&s) {
                transitions.push(vec![(s, 1.0)]);
                continue;
            }
            let branches = rng.random_range(1..=cfg.max_branching.max(1));
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(branches);
            for _ in 0..branches {
                let next = rng.random_range(0..n);
                let w: f64 = rng.random_range(0.05..1.0);
                match row.iter_mut().find(|(t, _)| *t == next) {
                    Some(e) => e.1 += w,
                    None => row.push((next, w)),
                }
            }
            let total: f64 = row.iter().map(|e| e.1).sum();
            row.iter_mut().for_each(|e| e.1 /= total);
            transitions.push(row);
        }
    }
    let true_potential = (0..n)
        .map(|s| match s {
            0 => Progress::ZERO,
            s if s == goal => Progress::ONE,
            _ => Progress::clamped(rng.random()),
        })
        .collect();
    TabularMdp {
        n_states: n,
        n_actions: k,
        transitions,
        gold_states: [goal].into_iter().collect(),
        start_state: 0,
        terminal_states: terminal,
        true_potential,
    }
}
