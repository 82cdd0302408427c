//! Exact policy-gradient oracle for softmax tabular policies.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::learning::softmax_row;
use super::mdp::TabularMdp;
use super::solver::{transition_reward, RewardVariant};
use super::TestbedError;
use crate::progress::Progress;
use crate::seed::{rng_for, streams};

struct PolicyEval {
    pi: Vec<Vec<f64>>,
    v: DVector<f64>,
    q: Vec<Vec<f64>>,
}

fn evaluate(
    mdp: &TabularMdp,
    variant: RewardVariant,
    theta: &[f64],
    gamma: f64,
) -> Result<PolicyEval, TestbedError> {
    let (n, k) = (mdp.n_states, mdp.n_actions);
    let phi = mdp.potential_values();
    let pi: Vec<Vec<f64>> = (0..n).map(|s| softmax_row(&theta[s * k..(s + 1) * k])).collect();
    let r = |s: usize, a: usize| -> f64 {
        mdp.row(s, a)
            .iter()
            .map(|&(t, p)| p * transition_reward(variant, mdp.gold(s, t), phi[s], phi[t], gamma))
            .sum()
    };
    let mut system = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        for a in 0..k {
            rhs[s] += pi[s][a] * r(s, a);
            for &(t, p) in mdp.row(s, a) {
                system[(s, t)] -= gamma * pi[s][a] * p;
            }
        }
    }
    let v = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| TestbedError::InvalidConfig("singular policy evaluation".into()))?;
    let q = (0..n)
        .map(|s| {
            (0..k)
                .map(|a| r(s, a) + gamma * mdp.row(s, a).iter().map(|&(t, p)| p * v[t]).sum::<f64>())
                .collect()
        })
        .collect();
    Ok(PolicyEval { pi, v, q })
}

/// Discounted return `V^π(start)` of the softmax policy with logits `theta`.
pub fn policy_objective(
    mdp: &TabularMdp,
    variant: RewardVariant,
    theta: &[f64],
    gamma: f64,
) -> Result<f64, TestbedError> {
    Ok(evaluate(mdp, variant, theta, gamma)?.v[mdp.start_state])
}

/// `∂J/∂θ[s,a] = d(s) π(a|s) (Q(s,a) − V(s))`, with `d` the discounted
/// state visitation from the start state.
pub fn exact_policy_gradient(
    mdp: &TabularMdp,
    variant: RewardVariant,
    theta: &[f64],
    gamma: f64,
) -> Result<Vec<f64>, TestbedError> {
    let (n, k) = (mdp.n_states, mdp.n_actions);
    let ev = evaluate(mdp, variant, theta, gamma)?;
    // d = (I − γ P_πᵀ)^{-1} e_start
    let mut system = DMatrix::<f64>::identity(n, n);
    for s in 0..n {
        for a in 0..k {
            for &(t, p) in mdp.row(s, a) {
                system[(t, s)] -= gamma * ev.pi[s][a] * p;
            }
        }
    }
    let mut start = DVector::<f64>::zeros(n);
    start[mdp.start_state] = 1.0;
    let d = system
        .lu()
        .solve(&start)
        .ok_or_else(|| TestbedError::InvalidConfig("singular visitation system".into()))?;
    let mut grad = vec![0.0; n * k];
    for s in 0..n {
        for a in 0..k {
            grad[s * k + a] = d[s] * ev.pi[s][a] * (ev.q[s][a] - ev.v[s]);
        }
    }
    Ok(grad)
}

/// Central differences of [`policy_objective`].
pub fn finite_difference_gradient(
    mdp: &TabularMdp,
    variant: RewardVariant,
    theta: &[f64],
    gamma: f64,
    step: f64,
) -> Result<Vec<f64>, TestbedError> {
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let up = policy_objective(mdp, variant, &probe, gamma)?;
        probe[i] = theta[i] - step;
        let down = policy_objective(mdp, variant, &probe, gamma)?;
        probe[i] = theta[i];
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// `max_i |a_i − b_i| / max(|a_i|, |b_i|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Three states, two actions: state 2 is the gold terminal; the others move
/// stochastically between each other and the goal.
pub fn three_state_mdp() -> TabularMdp {
    TabularMdp {
        n_states: 3,
        n_actions: 2,
        transitions: vec![
            vec![(1, 0.8), (0, 0.2)],
            vec![(0, 0.6), (2, 0.4)],
            vec![(2, 0.7), (0, 0.3)],
            vec![(1, 0.5), (0, 0.5)],
            vec![(2, 1.0)],
            vec![(2, 1.0)],
        ],
        gold_states: [2].into_iter().collect(),
        start_state: 0,
        terminal_states: [2].into_iter().collect(),
        true_potential: vec![Progress::ZERO, Progress::clamped(0.6), Progress::ONE],
    }
}

/// Seeded logits for gradient checks.
pub fn random_logits(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, streams::PROPERTY, 0);
    (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
}
