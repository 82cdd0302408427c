//! Progress estimation, hop labeling and progress-based reward shaping.

pub mod estimators;
pub mod evaluation;
pub mod exec;
pub mod labeling;
pub mod progress;
pub mod seed;
pub mod shaping;
pub mod testbed;
pub mod verify;

pub use exec::Execution;
pub use progress::{Hop, Progress};
