//! Hop-based relative progress.
//!
//! A [`Progress`] value is normalized task completion in `[0, 1]`. A [`Hop`]
//! relates two progress values: forward change is scaled by the distance left
//! to the goal, backward change by the distance already covered. Folding hops
//! with [`apply_hop`] can never leave `[0, 1]`, which is what makes hops a safe
//! regression target for a learned estimator.
//!
//! The second half of the module fuses three progress perspectives
//! (incremental, forward-anchored, backward-anchored) and gates the maintained
//! estimate by forward/backward agreement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("progress value {0} is outside [0, 1]")]
    ProgressOutOfRange(f64),
    #[error("hop value {0} is outside [-1, 1]")]
    HopOutOfRange(f64),
    #[error("invalid consistency config: {0}")]
    InvalidConsistencyConfig(&'static str),
}

/// Normalized task completion, always in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Progress(f64);

impl Progress {
    pub const ZERO: Progress = Progress(0.0);
    pub const ONE: Progress = Progress(1.0);

    pub fn new(value: f64) -> Result<Self, DomainError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Progress(value))
        } else {
            Err(DomainError::ProgressOutOfRange(value))
        }
    }

    /// Clamps into `[0, 1]`. NaN maps to 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Progress(0.0)
        } else {
            Progress(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Progress {
    type Error = DomainError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Progress::new(value)
    }
}

impl From<Progress> for f64 {
    fn from(p: Progress) -> f64 {
        p.0
    }
}

/// Relative progress between two states, always in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hop(f64);

impl Hop {
    pub const ZERO: Hop = Hop(0.0);

    pub fn new(value: f64) -> Result<Self, DomainError> {
        if (-1.0..=1.0).contains(&value) {
            Ok(Hop(value))
        } else {
            Err(DomainError::HopOutOfRange(value))
        }
    }

    /// Clamps into `[-1, 1]`. Estimator adapters use this; label computation
    /// never needs it. NaN maps to 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Hop(0.0)
        } else {
            Hop(value.clamp(-1.0, 1.0))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Integer percentage token in `[-100, 100]`.
    pub fn percent(self) -> i32 {
        (self.0 * 100.0).round() as i32
    }
}

impl TryFrom<f64> for Hop {
    type Error = DomainError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Hop::new(value)
    }
}

impl From<Hop> for f64 {
    fn from(h: Hop) -> f64 {
        h.0
    }
}

/// Hop label from `phi_p` (before) to `phi_q` (after).
///
/// Degenerate denominators (`phi_p = 1` going forward, `phi_p = 0` going
/// backward) yield exactly 0.
pub fn hop_label(phi_p: Progress, phi_q: Progress) -> Hop {
    let (p, q) = (phi_p.0, phi_q.0);
    let diff = q - p;
    if q >= p {
        let remaining = 1.0 - p;
        if remaining <= 0.0 {
            return Hop::ZERO;
        }
        Hop::clamped(diff / remaining)
    } else {
        if p <= 0.0 {
            return Hop::ZERO;
        }
        Hop::clamped(diff / p)
    }
}

/// Change in progress produced by `hop` applied at `phi_prev`.
pub fn incremental_delta(phi_prev: Progress, hop: Hop) -> f64 {
    if hop.0 >= 0.0 {
        (1.0 - phi_prev.0) * hop.0
    } else {
        phi_prev.0 * hop.0
    }
}

/// Inverse of [`hop_label`]: `phi_prev + incremental_delta(phi_prev, hop)`.
pub fn apply_hop(phi_prev: Progress, hop: Hop) -> Progress {
    Progress::clamped(phi_prev.0 + incremental_delta(phi_prev, hop))
}

/// Forward-anchored progress from the hop `H(init, s)`. A negative hop from
/// the initial state has no meaning and is clamped to 0.
pub fn forward_anchored(hop_from_init: Hop) -> Progress {
    Progress::clamped(hop_from_init.0.max(0.0))
}

/// Backward-anchored progress `1 + H(goal, s)`. A positive hop from the goal
/// is clamped to 0.
pub fn backward_anchored(hop_from_goal: Hop) -> Progress {
    Progress::clamped(1.0 + hop_from_goal.0.min(0.0))
}

/// Folds `hops` from `initial`, returning the progress after every hop.
pub fn reconstruct_trajectory(initial: Progress, hops: &[Hop]) -> Vec<Progress> {
    hops.iter()
        .scan(initial, |phi, &hop| {
            *phi = apply_hop(*phi, hop);
            Some(*phi)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveEstimates {
    pub incremental: Progress,
    pub forward: Progress,
    pub backward: Progress,
}

/// Plain average of the three perspectives.
pub fn fuse_average(p: &PerspectiveEstimates) -> Progress {
    Progress::clamped((p.incremental.0 + p.forward.0 + p.backward.0) / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub sensitivity_alpha: f64,
    pub epsilon_stability: f64,
}

impl ConsistencyConfig {
    pub const DEFAULT_ALPHA: f64 = 20.0;
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    pub fn new(sensitivity_alpha: f64, epsilon_stability: f64) -> Result<Self, DomainError> {
        if !(sensitivity_alpha > 0.0 && sensitivity_alpha.is_finite()) {
            return Err(DomainError::InvalidConsistencyConfig(
                "sensitivity_alpha must be a positive finite number",
            ));
        }
        if !(epsilon_stability > 0.0 && epsilon_stability.is_finite()) {
            return Err(DomainError::InvalidConsistencyConfig(
                "epsilon_stability must be a positive finite number",
            ));
        }
        Ok(Self {
            sensitivity_alpha,
            epsilon_stability,
        })
    }
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            sensitivity_alpha: Self::DEFAULT_ALPHA,
            epsilon_stability: Self::DEFAULT_EPSILON,
        }
    }
}

/// Gaussian confidence weight on the normalized forward/backward discrepancy.
/// Returns a value in `(0, 1]`; exactly 1 iff the two estimates agree.
pub fn consistency_weight(phi_f: Progress, phi_b: Progress, cfg: &ConsistencyConfig) -> f64 {
    let mean = 0.5 * (phi_f.0 + phi_b.0);
    let discrepancy = (phi_b.0 - phi_f.0).abs() / (mean + cfg.epsilon_stability);
    (-cfg.sensitivity_alpha * discrepancy * discrepancy).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerMode {
    /// Plain three-way average.
    FusionAverage,
    /// Conservative update weighted by forward/backward consistency.
    ConsistencyGated,
}

/// Progress maintained along a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub current: Progress,
    pub last_weight: f64,
    pub step_index: u64,
    pub mode: TrackerMode,
}

/// The three hops a tracker consumes per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepHops {
    /// `H(s_{t-1}, s_t)`
    pub incremental: Hop,
    /// `H(s_init, s_t)`
    pub from_init: Hop,
    /// `H(s_goal, s_t)`
    pub from_goal: Hop,
}

impl TrackerState {
    pub fn new(initial: Progress, mode: TrackerMode) -> Self {
        Self {
            current: initial,
            last_weight: 1.0,
            step_index: 0,
            mode,
        }
    }

    /// Perspectives this state would fuse for the given hops.
    pub fn perspectives(&self, hops: &StepHops) -> PerspectiveEstimates {
        PerspectiveEstimates {
            incremental: apply_hop(self.current, hops.incremental),
            forward: forward_anchored(hops.from_init),
            backward: backward_anchored(hops.from_goal),
        }
    }

    pub fn step(&self, hops: &StepHops, cfg: &ConsistencyConfig) -> TrackerState {
        let (next, weight) = match self.mode {
            TrackerMode::FusionAverage => (fuse_average(&self.perspectives(hops)).0, 1.0),
            TrackerMode::ConsistencyGated => {
                let phi_f = forward_anchored(hops.from_init);
                let phi_b = backward_anchored(hops.from_goal);
                let w = consistency_weight(phi_f, phi_b, cfg);
                let mean = 0.5 * (phi_f.0 + phi_b.0);
                let delta = incremental_delta(self.current, hops.incremental);
                let prev = self.current.0;
                (prev + 0.5 * w * (mean - prev + delta), w)
            }
        };
        TrackerState {
            current: Progress::clamped(next),
            last_weight: weight,
            step_index: self.step_index + 1,
            mode: self.mode,
        }
    }
}

/// Free-function form of [`TrackerState::step`].
pub fn tracker_step(
    state: &TrackerState,
    hop_inc: Hop,
    hop_from_init: Hop,
    hop_from_goal: Hop,
    cfg: &ConsistencyConfig,
) -> TrackerState {
    state.step(
        &StepHops {
            incremental: hop_inc,
            from_init: hop_from_init,
            from_goal: hop_from_goal,
        },
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: f64) -> Progress {
        Progress::new(v).unwrap()
    }
    fn h(v: f64) -> Hop {
        Hop::new(v).unwrap()
    }

    #[test]
    fn hop_label_examples() {
        assert!((hop_label(p(0.5), p(0.75)).value() - 0.5).abs() < 1e-12);
        assert_eq!(hop_label(p(0.5), p(0.5)).value(), 0.0);
        assert!((hop_label(p(0.8), p(0.4)).value() + 0.5).abs() < 1e-12);
        assert_eq!(hop_label(p(1.0), p(1.0)).value(), 0.0);
        assert_eq!(hop_label(p(0.0), p(0.0)).value(), 0.0);
    }

    #[test]
    fn out_of_range_inputs_are_domain_errors() {
        assert_eq!(
            Progress::new(1.5),
            Err(DomainError::ProgressOutOfRange(1.5))
        );
        assert!(Progress::new(-0.01).is_err());
        assert!(Progress::new(f64::NAN).is_err());
        assert_eq!(Hop::new(-1.2), Err(DomainError::HopOutOfRange(-1.2)));
        assert!(serde_json::from_str::<Progress>("1.5").is_err());
        assert!(serde_json::from_str::<Hop>("-0.25").is_ok());
    }

    #[test]
    fn apply_hop_examples() {
        assert!((apply_hop(p(0.5), h(0.5)).value() - 0.75).abs() < 1e-12);
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(apply_hop(p(x), Hop::ZERO).value(), x);
        }
        assert!((apply_hop(p(0.8), h(-0.5)).value() - 0.4).abs() < 1e-12);
        assert_eq!(apply_hop(p(0.5), h(1.0)).value(), 1.0);
    }

    #[test]
    fn incremental_delta_examples() {
        assert!((incremental_delta(p(0.5), h(0.5)) - 0.25).abs() < 1e-12);
        assert_eq!(incremental_delta(p(0.5), Hop::ZERO), 0.0);
        assert!((incremental_delta(p(0.8), h(-0.5)) + 0.4).abs() < 1e-12);
    }

    #[test]
    fn anchored_examples() {
        assert_eq!(forward_anchored(h(0.3)).value(), 0.3);
        assert_eq!(forward_anchored(h(-0.2)).value(), 0.0);
        assert_eq!(forward_anchored(h(1.0)).value(), 1.0);
        assert!((backward_anchored(h(-0.4)).value() - 0.6).abs() < 1e-12);
        assert_eq!(backward_anchored(h(0.0)).value(), 1.0);
        assert_eq!(backward_anchored(h(-1.0)).value(), 0.0);
        assert_eq!(backward_anchored(h(0.3)).value(), 1.0);
    }

    #[test]
    fn fuse_average_examples() {
        let est = |a, b, c| PerspectiveEstimates {
            incremental: p(a),
            forward: p(b),
            backward: p(c),
        };
        assert!((fuse_average(&est(0.6, 0.6, 0.6)).value() - 0.6).abs() < 1e-12);
        assert!((fuse_average(&est(0.3, 0.6, 0.9)).value() - 0.6).abs() < 1e-12);
        assert_eq!(fuse_average(&est(0.0, 0.0, 0.0)).value(), 0.0);
    }

    #[test]
    fn consistency_weight_examples() {
        let cfg = ConsistencyConfig::default();
        assert_eq!(consistency_weight(p(0.5), p(0.5), &cfg), 1.0);
        let w = consistency_weight(p(0.4), p(0.6), &cfg);
        let expected = (-20.0f64 * (0.2f64 / (0.5 + 1e-6)).powi(2)).exp();
        assert!((w - expected).abs() < 1e-15);
        assert!((w - (-3.2f64).exp()).abs() < 1e-5);
        assert!((w - 0.0408).abs() < 1e-4);
        assert_eq!(consistency_weight(p(0.0), p(0.0), &cfg), 1.0);
    }

    #[test]
    fn consistency_config_validation() {
        assert!(ConsistencyConfig::new(0.0, 1e-6).is_err());
        assert!(ConsistencyConfig::new(20.0, 0.0).is_err());
        assert!(ConsistencyConfig::new(20.0, 1e-6).is_ok());
    }

    #[test]
    fn tracker_gated_full_trust_example() {
        // prev 0.5; incremental hop 0.2 gives delta 0.1; both anchors say 0.6.
        let cfg = ConsistencyConfig::default();
        let state = TrackerState::new(p(0.5), TrackerMode::ConsistencyGated);
        let next = tracker_step(&state, h(0.2), h(0.6), h(-0.4), &cfg);
        assert!((next.current.value() - 0.6).abs() < 1e-12);
        assert_eq!(next.last_weight, 1.0);
        assert_eq!(next.step_index, 1);
    }

    #[test]
    fn tracker_gated_freezes_on_divergence() {
        let cfg = ConsistencyConfig::default();
        let state = TrackerState::new(p(0.5), TrackerMode::ConsistencyGated);
        // forward says 1.0, backward says 0.0: maximal disagreement
        let next = tracker_step(&state, h(0.8), h(1.0), h(-1.0), &cfg);
        assert!(next.last_weight < 1e-9);
        assert!((next.current.value() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn tracker_fusion_average_example() {
        let cfg = ConsistencyConfig::default();
        // prev 0.0, incremental hop 0.3 -> 0.3; forward 0.6; backward 0.9
        let state = TrackerState::new(Progress::ZERO, TrackerMode::FusionAverage);
        let next = tracker_step(&state, h(0.3), h(0.6), h(-0.1), &cfg);
        assert!((next.current.value() - 0.6).abs() < 1e-12);
        assert_eq!(next.last_weight, 1.0);
    }

    #[test]
    fn reconstruct_examples() {
        let out = reconstruct_trajectory(Progress::ZERO, &[h(0.5), h(0.5), h(0.5)]);
        let vals: Vec<f64> = out.iter().map(|x| x.value()).collect();
        for (a, b) in vals.iter().zip([0.5, 0.75, 0.875]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(reconstruct_trajectory(Progress::ZERO, &[]).is_empty());
        let out = reconstruct_trajectory(Progress::ZERO, &[h(1.0), h(-1.0)]);
        assert_eq!(out, vec![Progress::ONE, Progress::ZERO]);
    }

    #[test]
    fn percent_tokens() {
        assert_eq!(h(0.5).percent(), 50);
        assert_eq!(h(-1.0).percent(), -100);
        assert_eq!(h(0.004).percent(), 0);
    }

    fn unit() -> impl Strategy<Value = f64> {
        0.0..=1.0f64
    }
    fn signed() -> impl Strategy<Value = f64> {
        -1.0..=1.0f64
    }

    proptest! {
        #[test]
        fn round_trip(a in unit(), b in unit()) {
            let (pa, pb) = (p(a), p(b));
            let degenerate = (b >= a && a >= 1.0) || (b < a && a <= 0.0);
            prop_assume!(!degenerate);
            let back = apply_hop(pa, hop_label(pa, pb));
            prop_assert!((back.value() - b).abs() < 1e-12);
        }

        #[test]
        fn decomposition(a in unit(), x in signed()) {
            let (pa, hx) = (p(a), h(x));
            let expected = Progress::clamped(a + incremental_delta(pa, hx));
            prop_assert_eq!(apply_hop(pa, hx), expected);
        }

        #[test]
        fn labels_are_bounded(a in unit(), b in unit()) {
            let v = hop_label(p(a), p(b)).value();
            prop_assert!((-1.0..=1.0).contains(&v));
        }

        #[test]
        fn weight_decreases_with_discrepancy(mean in 0.05..0.95f64, d1 in 0.0..0.1f64, extra in 1e-4..0.1f64) {
            let cfg = ConsistencyConfig::default();
            let d2 = d1 + extra;
            prop_assume!(mean - d2 / 2.0 >= 0.0 && mean + d2 / 2.0 <= 1.0);
            let w1 = consistency_weight(p(mean - d1 / 2.0), p(mean + d1 / 2.0), &cfg);
            let w2 = consistency_weight(p(mean - d2 / 2.0), p(mean + d2 / 2.0), &cfg);
            prop_assert!(w2 < w1);
            prop_assert!(w2 > 0.0 && w1 <= 1.0);
            if d1 == 0.0 { prop_assert_eq!(w1, 1.0); } else { prop_assert!(w1 < 1.0); }
        }

        #[test]
        fn fuse_is_symmetric_and_bounded(a in unit(), b in unit(), c in unit()) {
            let e = |x, y, z| PerspectiveEstimates { incremental: p(x), forward: p(y), backward: p(z) };
            let f = fuse_average(&e(a, b, c)).value();
            for perm in [e(b, c, a), e(c, a, b), e(b, a, c), e(a, c, b), e(c, b, a)] {
                prop_assert!((fuse_average(&perm).value() - f).abs() < 1e-15);
            }
            prop_assert!(f >= a.min(b).min(c) - 1e-15 && f <= a.max(b).max(c) + 1e-15);
        }

        #[test]
        fn frozen_when_weight_negligible(prev in unit(), inc in signed(), f in 0.7..=1.0f64, b in 0.0..=0.05f64) {
            let cfg = ConsistencyConfig::default();
            let state = TrackerState::new(p(prev), TrackerMode::ConsistencyGated);
            let next = tracker_step(&state, h(inc), h(f), h(b - 1.0), &cfg);
            prop_assume!(next.last_weight < 1e-9);
            prop_assert!((next.current.value() - prev).abs() < 1e-9);
        }

        #[test]
        fn tracker_stays_bounded(prev in unit(), inc in signed(), f in signed(), b in signed(), gated in any::<bool>()) {
            let mode = if gated { TrackerMode::ConsistencyGated } else { TrackerMode::FusionAverage };
            let state = TrackerState::new(p(prev), mode);
            let next = tracker_step(&state, h(inc), h(f), h(b), &ConsistencyConfig::default());
            prop_assert!((0.0..=1.0).contains(&next.current.value()));
            prop_assert!(next.last_weight > 0.0 && next.last_weight <= 1.0);
        }
    }
}
