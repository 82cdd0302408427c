//! Small MDPs with known potentials, an exact solver, and tabular learners
//! fed by online progress rewards.

pub mod experiments;
pub mod gradient;
pub mod gridworld;
pub mod learning;
pub mod mdp;
pub mod report;
pub mod solver;
pub mod trap;

use thiserror::Error;

use crate::estimators::EstimatorError;

pub use gridworld::{GridWorld, GridWorldSpec};
pub use learning::{run_q_learning, run_reinforce, LearnerParams};
pub use mdp::{random_mdp, RandomMdpConfig, TabularMdp};
pub use report::{sign_test_less, ExperimentReport, SeedRun, SignTest};
pub use solver::{
    value_iteration, verify_policy_invariance, verify_policy_invariance_with, InvarianceReport,
    QTable, RewardVariant, ShapingMutation,
};
pub use trap::{demonstrate_semantic_trap, TrapMdpSpec, TrapReport};

#[derive(Debug, Error)]
pub enum TestbedError {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("goal is unreachable from the start")]
    Unreachable,
    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
