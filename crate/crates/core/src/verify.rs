//! Seeded property suites over the progress algebra, shaping and solver.

use rand::Rng;
use serde::Serialize;

use crate::exec::Execution;
use crate::progress::{incremental_delta, Hop, Progress};
use crate::seed::{rng_for, streams};
use crate::shaping::{euler_consistency_error, observed_orders, PotentialPath, ShapingConfig};
use crate::testbed::mdp::{random_mdp, RandomMdpConfig};
use crate::testbed::solver::{verify_policy_invariance_with, ShapingMutation, SHIFT_TOLERANCE};
use crate::testbed::trap::{demonstrate_semantic_trap, TrapMdpSpec};
use crate::testbed::TestbedError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Boundedness,
    Telescoping,
    QShift,
    Invariance,
    Trap,
    Euler,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Boundedness,
        Suite::Telescoping,
        Suite::QShift,
        Suite::Invariance,
        Suite::Trap,
        Suite::Euler,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Boundedness => "boundedness",
            Suite::Telescoping => "telescoping",
            Suite::QShift => "q_shift",
            Suite::Invariance => "invariance",
            Suite::Trap => "trap",
            Suite::Euler => "euler",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s.trim() || (s.trim() == "qshift" && *x == Suite::QShift))
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub boundedness_cases: usize,
    pub telescoping_cases: usize,
    pub mdp_cases: usize,
    pub shaping_gamma: f64,
    /// Wires a mismatched shaping term into the invariance and Q-shift
    /// suites, which must then fail.
    pub mutation: ShapingMutation,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            boundedness_cases: 100_000,
            telescoping_cases: 10_000,
            mdp_cases: 50,
            shaping_gamma: 0.98,
            mutation: ShapingMutation::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub cases: usize,
    pub failures: usize,
    /// Worst observed violation, in the suite's own units.
    pub worst: f64,
    pub detail: String,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

const CHUNK: usize = 1000;

fn chunked<F>(cases: usize, exec: Execution, f: F) -> (usize, f64)
where
    F: Fn(usize) -> (bool, f64) + Sync + Send,
{
    let chunks = cases.div_ceil(CHUNK);
    exec.map_range(chunks, |c| {
        let mut fails = 0;
        let mut worst: f64 = 0.0;
        for i in c * CHUNK..((c + 1) * CHUNK).min(cases) {
            let (ok, v) = f(i);
            if !ok {
                fails += 1;
            }
            worst = worst.max(v);
        }
        (fails, worst)
    })
    .into_iter()
    .fold((0, 0.0), |(a, w), (b, v)| (a + b, w.max(v)))
}

/// Unclamped incremental updates stay inside `[0, 1]`.
pub fn boundedness(cfg: &VerifyConfig, exec: Execution) -> SuiteResult {
    let (failures, worst) = chunked(cfg.boundedness_cases, exec, |i| {
        let mut rng = rng_for(cfg.seed, streams::PROPERTY, i as u64);
        let mut phi = match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        };
        let steps = rng.random_range(1..=50);
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            let h = match rng.random_range(0..10) {
                0 => -1.0,
                1 => 1.0,
                2 => 0.0,
                _ => rng.random_range(-1.0..=1.0),
            };
            let next = phi + incremental_delta(Progress::clamped(phi), Hop::clamped(h));
            worst = worst.max(-next).max(next - 1.0);
            phi = next.clamp(0.0, 1.0);
        }
        (worst <= 1e-12, worst.max(0.0))
    });
    SuiteResult {
        suite: Suite::Boundedness,
        cases: cfg.boundedness_cases,
        failures,
        worst,
        detail: "max excursion outside [0, 1]".into(),
    }
}

/// Discounted shaping sums against `γ^T Φ_T − Φ_0`.
pub fn telescoping(cfg: &VerifyConfig, exec: Execution) -> SuiteResult {
    const GAMMAS: [f64; 3] = [0.9, 0.98, 0.999];
    let (failures, worst) = chunked(cfg.telescoping_cases, exec, |i| {
        let mut rng = rng_for(cfg.seed, streams::PROPERTY ^ 1, i as u64);
        let gamma = GAMMAS[i % GAMMAS.len()];
        let len = rng.random_range(1..=200);
        let phis: Vec<Progress> = (0..len).map(|_| Progress::clamped(rng.random())).collect();
        let shaping = ShapingConfig::from_gamma(gamma, 0.05).expect("valid gamma");
        let sum = crate::shaping::discounted_shaping_sum(&phis, &shaping).expect("non-empty");
        let steps = (len - 1) as i32;
        let boundary = gamma.powi(steps) * phis[len - 1].value() - phis[0].value();
        let err = (sum - boundary).abs();
        (err <= 1e-9, err)
    });
    SuiteResult {
        suite: Suite::Telescoping,
        cases: cfg.telescoping_cases,
        failures,
        worst,
        detail: "max |shaping sum − boundary|".into(),
    }
}

fn mdp_suite(cfg: &VerifyConfig, exec: Execution, suite: Suite) -> Result<SuiteResult, TestbedError> {
    let shaping = ShapingConfig::from_gamma(cfg.shaping_gamma, 0.05)
        .map_err(|e| TestbedError::InvalidConfig(e.to_string()))?;
    let mdp_cfg = RandomMdpConfig::default();
    let mut mdps: Vec<_> = (0..cfg.mdp_cases)
        .map(|i| random_mdp(cfg.seed, i as u64, &mdp_cfg))
        .collect();
    if suite == Suite::Invariance {
        mdps.push(TrapMdpSpec::default().build()?);
    }
    let reports = exec
        .map(&mdps, |m| {
            verify_policy_invariance_with(m, &shaping, &m.potential_values(), cfg.mutation)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let (failures, worst, detail) = match suite {
        Suite::QShift => (
            reports.iter().filter(|r| r.max_shift_error > SHIFT_TOLERANCE).count(),
            reports.iter().map(|r| r.max_shift_error).fold(0.0, f64::max),
            "max |Q_shaped − (Q_gold − Φ)|".to_string(),
        ),
        _ => {
            let trap_holds = reports.last().is_none_or(|r| r.holds);
            let bad: Vec<usize> = reports[..reports.len().saturating_sub(1)]
                .iter()
                .enumerate()
                .filter(|(_, r)| !r.holds)
                .map(|(i, _)| i)
                .collect();
            let states = reports.iter().map(|r| r.differing_states.len()).sum::<usize>();
            (
                bad.len() + usize::from(!trap_holds),
                reports.iter().map(|r| r.max_shift_error).fold(0.0, f64::max),
                format!(
                    "{states} greedy-set differences; trap MDP {}; failing random MDPs {bad:?}",
                    if trap_holds { "holds" } else { "fails" }
                ),
            )
        }
    };
    Ok(SuiteResult {
        suite,
        cases: mdps.len(),
        failures,
        worst,
        detail,
    })
}

pub fn trap(_cfg: &VerifyConfig) -> Result<SuiteResult, TestbedError> {
    let r = demonstrate_semantic_trap(&TrapMdpSpec::default(), 0.98)?;
    Ok(SuiteResult {
        suite: Suite::Trap,
        cases: 1,
        failures: usize::from(!r.separated),
        worst: r.naive.goal_probability,
        detail: format!(
            "naive honeypot actions {:?}, shaped {:?}, shaped goal probability {:.3}",
            r.naive.honeypot_greedy, r.grm.honeypot_greedy, r.grm.goal_probability
        ),
    })
}

pub const EULER_STEPS: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

pub fn euler(_cfg: &VerifyConfig) -> SuiteResult {
    let errors: Vec<f64> = EULER_STEPS
        .iter()
        .map(|&h| euler_consistency_error(0.5, PotentialPath::SinSquared, h, 1.0).unwrap_or(f64::NAN))
        .collect();
    let orders = observed_orders(&errors);
    let failures = orders.iter().filter(|o| !(**o >= 0.9)).count();
    SuiteResult {
        suite: Suite::Euler,
        cases: orders.len(),
        failures,
        worst: orders.iter().cloned().fold(f64::INFINITY, f64::min),
        detail: format!("observed orders {orders:.3?}"),
    }
}

pub fn run_suite(suite: Suite, cfg: &VerifyConfig, exec: Execution) -> Result<SuiteResult, TestbedError> {
    match suite {
        Suite::Boundedness => Ok(boundedness(cfg, exec)),
        Suite::Telescoping => Ok(telescoping(cfg, exec)),
        Suite::QShift | Suite::Invariance => mdp_suite(cfg, exec, suite),
        Suite::Trap => trap(cfg),
        Suite::Euler => Ok(euler(cfg)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyConfig {
        VerifyConfig {
            boundedness_cases: 2000,
            telescoping_cases: 500,
            mdp_cases: 8,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn all_suites_pass_by_default() {
        for s in Suite::ALL {
            let r = run_suite(s, &small(), Execution::Parallel).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn naive_mutation_breaks_invariance() {
        let cfg = VerifyConfig {
            mutation: ShapingMutation::NaiveDifference,
            ..small()
        };
        let r = run_suite(Suite::Invariance, &cfg, Execution::Sequential).unwrap();
        assert!(!r.passed());
        assert!(r.detail.contains("trap MDP fails"), "{}", r.detail);
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }
}
