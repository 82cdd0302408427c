//! Potential-based reward shaping on progress estimates.
//!
//! The shaping term `γ·Φ(s') − Φ(s)` telescopes along any trajectory, so the
//! discounted sum of shaping rewards depends only on the endpoints. Adding it
//! to the sparse gold reward shifts every Q-value of a state by the same
//! amount and leaves the optimal policy alone. The raw progress difference
//! [`naive_reward`] does not telescope and is kept only to demonstrate why.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::progress::Progress;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapingError {
    #[error("invalid shaping config: {0}")]
    InvalidConfig(String),
    #[error("progress sequence is empty")]
    EmptySequence,
    #[error("step size must be positive and divide the horizon (h = {h}, T = {horizon})")]
    InvalidStep { h: f64, horizon: f64 },
    #[error("config parse error: {0}")]
    Parse(String),
}

/// Discounting and completion settings.
///
/// `gamma` is always `exp(-lambda_rate * step_h)`. Discrete RL code tends to
/// think in `gamma`, so [`ShapingConfig::from_gamma`] exists alongside
/// [`ShapingConfig::from_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapingConfig {
    #[serde(rename = "lambda")]
    lambda_rate: f64,
    step_h: f64,
    gamma: f64,
    #[serde(rename = "delta")]
    completion_margin_delta: f64,
}

impl ShapingConfig {
    pub const DEFAULT_DELTA: f64 = 0.05;
    pub const DEFAULT_GAMMA: f64 = 0.98;

    pub fn from_rate(lambda_rate: f64, step_h: f64, delta: f64) -> Result<Self, ShapingError> {
        if !(lambda_rate >= 0.0 && lambda_rate.is_finite()) {
            return Err(ShapingError::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {lambda_rate}"
            )));
        }
        if !(step_h > 0.0 && step_h.is_finite()) {
            return Err(ShapingError::InvalidConfig(format!(
                "step_h must be finite and > 0, got {step_h}"
            )));
        }
        check_delta(delta)?;
        let gamma = (-lambda_rate * step_h).exp();
        if gamma <= 0.0 {
            return Err(ShapingError::InvalidConfig(format!(
                "lambda * step_h = {} underflows gamma",
                lambda_rate * step_h
            )));
        }
        Ok(Self {
            lambda_rate,
            step_h,
            gamma,
            completion_margin_delta: delta,
        })
    }

    /// `gamma` in `(0, 1]` with `step_h = 1`.
    pub fn from_gamma(gamma: f64, delta: f64) -> Result<Self, ShapingError> {
        Self::from_gamma_with_step(gamma, 1.0, delta)
    }

    pub fn from_gamma_with_step(gamma: f64, step_h: f64, delta: f64) -> Result<Self, ShapingError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(ShapingError::InvalidConfig(format!(
                "gamma must be in (0, 1], got {gamma}"
            )));
        }
        if !(step_h > 0.0 && step_h.is_finite()) {
            return Err(ShapingError::InvalidConfig(format!(
                "step_h must be finite and > 0, got {step_h}"
            )));
        }
        check_delta(delta)?;
        Ok(Self {
            lambda_rate: -gamma.ln() / step_h,
            step_h,
            gamma,
            completion_margin_delta: delta,
        })
    }

    pub fn lambda_rate(&self) -> f64 {
        self.lambda_rate
    }
    pub fn step_h(&self) -> f64 {
        self.step_h
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn completion_margin_delta(&self) -> f64 {
        self.completion_margin_delta
    }

    pub fn with_delta(self, delta: f64) -> Result<Self, ShapingError> {
        check_delta(delta)?;
        Ok(Self {
            completion_margin_delta: delta,
            ..self
        })
    }

    /// Builds a config from the `lambda`, `step_h`, `gamma`, `delta` entries of
    /// a flat key-value map; other keys are ignored.
    ///
    /// `lambda` wins over `gamma` when both are present, but they must agree
    /// to within 1e-12.
    pub fn from_table(table: &toml::Table) -> Result<Self, ShapingError> {
        let get = |key: &str| -> Result<Option<f64>, ShapingError> {
            match table.get(key) {
                None => Ok(None),
                Some(toml::Value::Float(f)) => Ok(Some(*f)),
                Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
                Some(other) => Err(ShapingError::Parse(format!(
                    "key `{key}` must be a number, got {}",
                    other.type_str()
                ))),
            }
        };
        let delta = get("delta")?.unwrap_or(Self::DEFAULT_DELTA);
        let step_h = get("step_h")?;
        let cfg = match (get("lambda")?, get("gamma")?) {
            (Some(lambda), gamma) => {
                let cfg = Self::from_rate(lambda, step_h.unwrap_or(1.0), delta)?;
                if let Some(g) = gamma {
                    if (g - cfg.gamma).abs() > 1e-12 {
                        return Err(ShapingError::InvalidConfig(format!(
                            "gamma = {g} disagrees with exp(-lambda * step_h) = {}",
                            cfg.gamma
                        )));
                    }
                }
                cfg
            }
            (None, Some(g)) => Self::from_gamma_with_step(g, step_h.unwrap_or(1.0), delta)?,
            (None, None) => {
                Self::from_gamma_with_step(Self::DEFAULT_GAMMA, step_h.unwrap_or(1.0), delta)?
            }
        };
        Ok(cfg)
    }

    /// Parses the flat `key = value` text form.
    pub fn from_kv_str(text: &str) -> Result<Self, ShapingError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ShapingError::Parse(e.to_string()))?;
        Self::from_table(&table)
    }

    /// Flat `key = value` text with the keys `lambda`, `step_h`, `gamma`,
    /// `delta`.
    pub fn to_kv_string(&self) -> String {
        let mut map = BTreeMap::new();
        map.insert("lambda", self.lambda_rate);
        map.insert("step_h", self.step_h);
        map.insert("gamma", self.gamma);
        map.insert("delta", self.completion_margin_delta);
        ["lambda", "step_h", "gamma", "delta"]
            .iter()
            .map(|k| format!("{k} = {:?}\n", map[k]))
            .collect()
    }
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self::from_gamma(Self::DEFAULT_GAMMA, Self::DEFAULT_DELTA).expect("valid default")
    }
}

fn check_delta(delta: f64) -> Result<(), ShapingError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(ShapingError::InvalidConfig(format!(
            "delta must be in (0, 1), got {delta}"
        )))
    }
}

/// Progress before and after one environment step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub phi_s: Progress,
    pub phi_s_next: Progress,
}

impl Transition {
    pub fn new(phi_s: Progress, phi_s_next: Progress) -> Self {
        Self { phi_s, phi_s_next }
    }
}

/// `γ·Φ(s') − Φ(s)`, in `[-1, γ]`.
pub fn shaping_term(t: &Transition, cfg: &ShapingConfig) -> f64 {
    cfg.gamma * t.phi_s_next.value() - t.phi_s.value()
}

/// 1 when the next state is within `delta` of completion, else 0.
pub fn gold_reward(t: &Transition, cfg: &ShapingConfig) -> f64 {
    if t.phi_s_next.value() >= 1.0 - cfg.completion_margin_delta {
        1.0
    } else {
        0.0
    }
}

/// Gold reward plus shaping term.
pub fn grm_reward(t: &Transition, cfg: &ShapingConfig) -> f64 {
    gold_reward(t, cfg) + shaping_term(t, cfg)
}

/// Raw progress difference `Φ(s') − Φ(s)`.
///
/// **Unsafe for training.** Under discounting this reward turns the return
/// into a discounted sum of visited progress values, which pays an agent for
/// parking in a high-progress state instead of finishing the task. It exists
/// for the trap demonstration and mutation tests.
pub fn naive_reward(t: &Transition) -> f64 {
    t.phi_s_next.value() - t.phi_s.value()
}

/// `Σ_t γ^t (γ·Φ_{t+1} − Φ_t)` over consecutive pairs of `phis`.
pub fn discounted_shaping_sum(phis: &[Progress], cfg: &ShapingConfig) -> Result<f64, ShapingError> {
    if phis.is_empty() {
        return Err(ShapingError::EmptySequence);
    }
    let gamma = cfg.gamma;
    let mut discount = 1.0;
    let mut total = 0.0;
    for w in phis.windows(2) {
        total += discount * shaping_term(&Transition::new(w[0], w[1]), cfg);
        discount *= gamma;
    }
    Ok(total)
}

/// Closed form of [`discounted_shaping_sum`]: `γ^T·Φ_T − Φ_0`.
pub fn telescoped_boundary(phis: &[Progress], gamma: f64) -> Result<f64, ShapingError> {
    let (first, last) = match (phis.first(), phis.last()) {
        (Some(f), Some(l)) => (f.value(), l.value()),
        _ => return Err(ShapingError::EmptySequence),
    };
    let steps = (phis.len() - 1) as i32;
    Ok(gamma.powi(steps) * last - first)
}

/// Smooth potential profiles over `[0, T]` used by the continuous-time check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialPath {
    /// `Φ(t) = t / T`
    Linear,
    /// `Φ(t) = sin²(πt / 2T)`
    SinSquared,
}

impl PotentialPath {
    pub fn value(self, t: f64, horizon: f64) -> f64 {
        match self {
            PotentialPath::Linear => t / horizon,
            PotentialPath::SinSquared => (PI * t / (2.0 * horizon)).sin().powi(2),
        }
    }

    pub fn derivative(self, t: f64, horizon: f64) -> f64 {
        match self {
            PotentialPath::Linear => 1.0 / horizon,
            // d/dt sin²(u) = sin(2u)·du/dt
            PotentialPath::SinSquared => {
                let k = PI / (2.0 * horizon);
                k * (2.0 * k * t).sin()
            }
        }
    }
}

/// Breakdown of one continuous-time consistency evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EulerConsistency {
    pub steps: usize,
    /// Shaping sum on the sampled path with the forward-Euler discount
    /// `γ_h = 1 − λh`, i.e. `Σ γ_h^k (γ_h Φ_{k+1} − Φ_k)`.
    pub euler_sum: f64,
    /// Same sum with the exact discount `e^{-λh}`. Telescopes onto the
    /// boundary term at every `h`.
    pub exact_sum: f64,
    /// `e^{-λT}Φ(T) − Φ(0)`.
    pub boundary: f64,
    /// `|euler_sum − boundary|`.
    pub error: f64,
}

pub fn euler_consistency(
    lambda_rate: f64,
    path: PotentialPath,
    h: f64,
    horizon: f64,
) -> Result<EulerConsistency, ShapingError> {
    if !(h > 0.0 && horizon > 0.0 && h <= horizon * (1.0 + 1e-12)) {
        return Err(ShapingError::InvalidStep { h, horizon });
    }
    let steps = (horizon / h).round() as usize;
    if steps == 0 || ((steps as f64) * h - horizon).abs() > 1e-9 * horizon {
        return Err(ShapingError::InvalidStep { h, horizon });
    }
    if !(lambda_rate >= 0.0 && lambda_rate.is_finite()) {
        return Err(ShapingError::InvalidConfig(format!(
            "lambda must be finite and >= 0, got {lambda_rate}"
        )));
    }
    let gamma_euler = 1.0 - lambda_rate * h;
    let gamma_exact = (-lambda_rate * h).exp();
    let (mut euler_sum, mut exact_sum) = (0.0, 0.0);
    let (mut disc_euler, mut disc_exact) = (1.0, 1.0);
    for k in 0..steps {
        let phi = path.value(k as f64 * h, horizon);
        let phi_next = path.value((k + 1) as f64 * h, horizon);
        euler_sum += disc_euler * (gamma_euler * phi_next - phi);
        exact_sum += disc_exact * (gamma_exact * phi_next - phi);
        disc_euler *= gamma_euler;
        disc_exact *= gamma_exact;
    }
    let boundary =
        (-lambda_rate * horizon).exp() * path.value(horizon, horizon) - path.value(0.0, horizon);
    Ok(EulerConsistency {
        steps,
        euler_sum,
        exact_sum,
        boundary,
        error: (euler_sum - boundary).abs(),
    })
}

/// Distance between the forward-Euler shaping sum and the continuous boundary
/// term `e^{-λT}Φ(T) − Φ(0)`. Shrinks at first order in `h`.
pub fn euler_consistency_error(
    lambda_rate: f64,
    path: PotentialPath,
    h: f64,
    horizon: f64,
) -> Result<f64, ShapingError> {
    euler_consistency(lambda_rate, path, h, horizon).map(|e| e.error)
}

/// Observed orders `log2(e_k / e_{k+1})` for errors measured at successive
/// step halvings.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
