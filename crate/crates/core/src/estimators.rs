//! Hop estimators behind one query interface.
//!
//! * [`OracleEstimator`] evaluates the hop label exactly against a known
//!   potential.
//! * [`NoisyEstimator`] adds Gaussian noise and, inside an out-of-distribution
//!   region, pushes forward-anchored and backward-anchored answers apart so
//!   their disagreement can be detected downstream.
//! * [`fit_one_shot`] fits a ridge-regularized linear progress model on the
//!   pairs labeled from a single demonstration, minimizing the squared hop
//!   error, and returns a [`FittedEstimator`]. The ridge term shrinks the
//!   model toward the flat potential `Φ̂ = 1/2`, whose hops are all zero.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{generate_hop_samples, LabelingError, SamplingConfig, Trajectory};
use crate::progress::{hop_label, DomainError, Hop, Progress};
use crate::seed::{rng_for, streams};

pub type StateId = usize;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("state {0} is not covered by the estimator")]
    Unresolvable(StateId),
    #[error("frame reference `{0}` is not a state id")]
    BadFrameRef(String),
    #[error("singular fit: feature matrix has rank {rank} < {dim} and no regularization")]
    SingularFit { rank: usize, dim: usize },
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Labeling(#[from] LabelingError),
}

/// The tuple an estimator answers: hop from `before` to `after`, given the
/// task's initial and goal states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatorQuery<'a> {
    pub init: StateId,
    pub goal: StateId,
    pub before: StateId,
    pub after: StateId,
    pub task_text: &'a str,
}

impl EstimatorQuery<'_> {
    pub fn is_forward_anchored(&self) -> bool {
        self.before == self.init
    }
    pub fn is_backward_anchored(&self) -> bool {
        self.before == self.goal
    }
}

/// Anything that predicts hops. Implementations must be deterministic given
/// the query and the caller's generator.
pub trait HopEstimator: Send + Sync {
    fn name(&self) -> &str;
    fn estimate(&self, q: &EstimatorQuery<'_>, rng: &mut dyn RngCore) -> Result<Hop, EstimatorError>;
}

fn lookup(truth: &[Progress], s: StateId) -> Result<Progress, EstimatorError> {
    truth.get(s).copied().ok_or(EstimatorError::Unresolvable(s))
}

/// Exact hop label of the true progress values.
pub fn oracle_hop(q: &EstimatorQuery<'_>, truth: &[Progress]) -> Result<Hop, EstimatorError> {
    Ok(hop_label(lookup(truth, q.before)?, lookup(truth, q.after)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimator {
    truth: Vec<Progress>,
}

impl OracleEstimator {
    pub fn new(truth: Vec<Progress>) -> Self {
        Self { truth }
    }
    pub fn truth(&self) -> &[Progress] {
        &self.truth
    }
}

impl HopEstimator for OracleEstimator {
    fn name(&self) -> &str {
        "oracle"
    }
    fn estimate(&self, q: &EstimatorQuery<'_>, _rng: &mut dyn RngCore) -> Result<Hop, EstimatorError> {
        oracle_hop(q, &self.truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub gaussian_sigma: f64,
    /// States where forward and backward answers are split apart.
    pub ood_region: BTreeSet<StateId>,
    pub ood_divergence: f64,
    pub clamp: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            gaussian_sigma: 0.0,
            ood_region: BTreeSet::new(),
            ood_divergence: 0.0,
            clamp: true,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.gaussian_sigma >= 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(EstimatorError::InvalidConfig(
                "gaussian_sigma must be finite and >= 0".into(),
            ));
        }
        if !(self.ood_divergence >= 0.0 && self.ood_divergence.is_finite()) {
            return Err(EstimatorError::InvalidConfig(
                "ood_divergence must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Noisy hop before clamping.
pub fn noisy_hop_unclamped(
    q: &EstimatorQuery<'_>,
    truth: &[Progress],
    noise: &NoiseModel,
    rng: &mut dyn RngCore,
) -> Result<f64, EstimatorError> {
    let mut value = oracle_hop(q, truth)?.value();
    if noise.gaussian_sigma > 0.0 {
        let normal = Normal::new(0.0, noise.gaussian_sigma)
            .map_err(|e| EstimatorError::InvalidConfig(e.to_string()))?;
        value += normal.sample(rng);
    }
    if noise.ood_divergence > 0.0 && noise.ood_region.contains(&q.after) {
        if q.is_forward_anchored() {
            value += 0.5 * noise.ood_divergence;
        } else if q.is_backward_anchored() {
            value -= 0.5 * noise.ood_divergence;
        }
    }
    Ok(value)
}

/// Noisy hop with its own generator seeded from `seed`.
pub fn noisy_hop(
    q: &EstimatorQuery<'_>,
    truth: &[Progress],
    noise: &NoiseModel,
    seed: u64,
) -> Result<Hop, EstimatorError> {
    let mut rng = rng_for(seed, streams::ESTIMATOR, 0);
    let v = noisy_hop_unclamped(q, truth, noise, &mut rng)?;
    finish(v, noise.clamp)
}

fn finish(v: f64, clamp: bool) -> Result<Hop, EstimatorError> {
    if clamp {
        Ok(Hop::clamped(v))
    } else {
        Ok(Hop::new(v)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyEstimator {
    truth: Vec<Progress>,
    noise: NoiseModel,
}

impl NoisyEstimator {
    pub fn new(truth: Vec<Progress>, noise: NoiseModel) -> Result<Self, EstimatorError> {
        noise.validate()?;
        Ok(Self { truth, noise })
    }
    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
}

impl HopEstimator for NoisyEstimator {
    fn name(&self) -> &str {
        "noisy"
    }
    fn estimate(&self, q: &EstimatorQuery<'_>, rng: &mut dyn RngCore) -> Result<Hop, EstimatorError> {
        let v = noisy_hop_unclamped(q, &self.truth, &self.noise, rng)?;
        finish(v, self.noise.clamp)
    }
}

/// Hops drawn uniformly from `[-1, 1]`, ignoring the query. A null model.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandomEstimator;

impl HopEstimator for UniformRandomEstimator {
    fn name(&self) -> &str {
        "random"
    }
    fn estimate(&self, _q: &EstimatorQuery<'_>, rng: &mut dyn RngCore) -> Result<Hop, EstimatorError> {
        Ok(Hop::clamped(rng.random_range(-1.0..=1.0)))
    }
}

/// State feature extractors. Every map appends a constant bias feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FeatureMap {
    /// Environment coordinates as given.
    Raw,
    /// Gaussian bumps `exp(-|x - c|² / 2w²)` around fixed centers.
    Rbf { centers: Vec<Vec<f64>>, width: f64 },
    /// Per-state uniform noise, unrelated to progress.
    Random { dim: usize, seed: u64 },
}

impl FeatureMap {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureMap::Raw => "raw",
            FeatureMap::Rbf { .. } => "rbf",
            FeatureMap::Random { .. } => "random",
        }
    }

    /// RBF centers on a regular `nx × ny` lattice over the unit square.
    pub fn rbf_grid(nx: usize, ny: usize, width: f64) -> Self {
        let at = |i: usize, n: usize| if n <= 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
        let centers = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| vec![at(i, nx), at(j, ny)]))
            .collect();
        FeatureMap::Rbf { centers, width }
    }

    pub fn dim(&self, coord_dim: usize) -> usize {
        1 + match self {
            FeatureMap::Raw => coord_dim,
            FeatureMap::Rbf { centers, .. } => centers.len(),
            FeatureMap::Random { dim, .. } => *dim,
        }
    }

    pub fn features(&self, state: StateId, coords: &[f64]) -> Vec<f64> {
        let mut out = match self {
            FeatureMap::Raw => coords.to_vec(),
            FeatureMap::Rbf { centers, width } => centers
                .iter()
                .map(|c| {
                    let d2: f64 = c.iter().zip(coords).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d2 / (2.0 * width * width)).exp()
                })
                .collect(),
            FeatureMap::Random { dim, seed } => {
                let mut rng = rng_for(*seed, streams::FIT, state as u64);
                (0..*dim).map(|_| rng.random::<f64>()).collect()
            }
        };
        out.push(1.0);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneShotFitConfig {
    /// The single demonstration. Frame references of its first view must be
    /// state ids.
    pub demo: Trajectory,
    /// Coordinates per state id, fed to the feature map.
    pub state_coords: Vec<Vec<f64>>,
    pub feature_map: FeatureMap,
    pub regularization: f64,
    pub pair_budget: usize,
    /// Drives pair generation from the demo; `rng_seed` also fixes the
    /// budget subsample.
    pub sampling: SamplingConfig,
}

/// Linear progress model `Φ̂(s) = clamp(1/2 + w·φ(s))` queried through the hop
/// label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEstimator {
    pub weights: Vec<f64>,
    pub feature_map: FeatureMap,
    pub regularization: f64,
    pub pair_budget: usize,
    pub rng_seed: u64,
    pub train_pairs: usize,
    pub train_mse: f64,
    #[serde(skip)]
    coords: Vec<Vec<f64>>,
}

impl FittedEstimator {
    /// Reattaches state coordinates after deserialization.
    pub fn with_coords(mut self, coords: Vec<Vec<f64>>) -> Self {
        self.coords = coords;
        self
    }

    pub fn progress(&self, s: StateId) -> Result<Progress, EstimatorError> {
        let coords = self.coords.get(s).ok_or(EstimatorError::Unresolvable(s))?;
        let phi = self.feature_map.features(s, coords);
        Ok(Progress::clamped(PRIOR + dot(&self.weights, &phi)))
    }
}

impl HopEstimator for FittedEstimator {
    fn name(&self) -> &str {
        "fitted"
    }
    fn estimate(&self, q: &EstimatorQuery<'_>, _rng: &mut dyn RngCore) -> Result<Hop, EstimatorError> {
        Ok(hop_label(self.progress(q.before)?, self.progress(q.after)?))
    }
}

const PRIOR: f64 = 0.5;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean squared hop error over `(before, after, target)` triples.
pub fn hop_mse(
    est: &dyn HopEstimator,
    pairs: &[(StateId, StateId, f64)],
    init: StateId,
    goal: StateId,
    rng: &mut dyn RngCore,
) -> Result<f64, EstimatorError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &(before, after, target) in pairs {
        let q = EstimatorQuery {
            init,
            goal,
            before,
            after,
            task_text: "",
        };
        let e = est.estimate(&q, rng)?.value() - target;
        total += e * e;
    }
    Ok(total / pairs.len() as f64)
}

// Hop label and its partial derivatives in (p, q), with denominators
// floored so the Jacobian stays finite at the boundaries.
fn hop_and_grad(p: f64, q: f64) -> (f64, f64, f64) {
    const FLOOR: f64 = 1e-6;
    if q >= p {
        let d = (1.0 - p).max(FLOOR);
        ((q - p) / d, (q - 1.0) / (d * d), 1.0 / d)
    } else {
        let d = p.max(FLOOR);
        ((q - p) / d, -q / (d * d), 1.0 / d)
    }
}

struct FitProblem {
    rows: Vec<(Vec<f64>, Vec<f64>, f64)>,
    reg: f64,
}

impl FitProblem {
    fn predict(phi: &[f64], w: &[f64]) -> (f64, bool) {
        let raw = PRIOR + dot(w, phi);
        (raw.clamp(0.0, 1.0), (0.0..=1.0).contains(&raw))
    }

    fn loss(&self, w: &[f64]) -> f64 {
        let data: f64 = self
            .rows
            .iter()
            .map(|(a, b, t)| {
                let (p, _) = Self::predict(a, w);
                let (q, _) = Self::predict(b, w);
                let r = hop_and_grad(p, q).0 - t;
                r * r
            })
            .sum();
        data + self.reg * dot(w, w)
    }

    fn normal_equations(&self, w: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let d = w.len();
        let mut jtj = DMatrix::<f64>::zeros(d, d);
        let mut jtr = DVector::<f64>::zeros(d);
        let mut row = vec![0.0; d];
        for (a, b, t) in &self.rows {
            let (p, p_free) = Self::predict(a, w);
            let (q, q_free) = Self::predict(b, w);
            let (h, dp, dq) = hop_and_grad(p, q);
            let r = h - t;
            for k in 0..d {
                row[k] = if p_free { dp * a[k] } else { 0.0 } + if q_free { dq * b[k] } else { 0.0 };
            }
            for i in 0..d {
                jtr[i] += row[i] * r;
                for j in 0..d {
                    jtj[(i, j)] += row[i] * row[j];
                }
            }
        }
        for i in 0..d {
            jtj[(i, i)] += self.reg;
            jtr[i] += self.reg * w[i];
        }
        (jtj, jtr)
    }
}

fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let tol = max * 1e-10 * m.nrows().max(1) as f64;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Fits the demo's hop labels by Levenberg-Marquardt on the ridge objective
/// `Σ (Ĥ − H)² + ρ‖w‖²`, starting from a ridge fit of the demo's per-state
/// progress.
pub fn fit_one_shot(cfg: &OneShotFitConfig) -> Result<FittedEstimator, EstimatorError> {
    if !(cfg.regularization >= 0.0 && cfg.regularization.is_finite()) {
        return Err(EstimatorError::InvalidConfig(
            "regularization must be finite and >= 0".into(),
        ));
    }
    if cfg.pair_budget == 0 {
        return Err(EstimatorError::InvalidConfig("pair_budget must be positive".into()));
    }
    let demo = &cfg.demo;
    demo.validate()?;
    let view = &demo.views[0];
    let state_of = |frame: usize| -> Result<StateId, EstimatorError> {
        let r = demo.frame_ref(view, frame);
        let s: StateId = r.parse().map_err(|_| EstimatorError::BadFrameRef(r.clone()))?;
        if s >= cfg.state_coords.len() {
            return Err(EstimatorError::Unresolvable(s));
        }
        Ok(s)
    };
    let coord_dim = cfg.state_coords.first().map_or(0, Vec::len);
    let dim = cfg.feature_map.dim(coord_dim);
    let feat = |s: StateId| cfg.feature_map.features(s, &cfg.state_coords[s]);

    let mut sampling = cfg.sampling.clone();
    sampling.samples_per_cell = sampling
        .samples_per_cell
        .max(cfg.pair_budget.div_ceil(sampling.cells().max(1)));
    let labeled = generate_hop_samples(demo, &sampling)?;
    let mut samples = labeled.samples;
    if samples.len() > cfg.pair_budget {
        let mut rng = rng_for(sampling.rng_seed, streams::FIT, 0);
        use rand::seq::SliceRandom;
        samples.shuffle(&mut rng);
        samples.truncate(cfg.pair_budget);
    }

    // warm start: ridge regression of per-state demo progress
    let states = crate::labeling::sample_states(demo, &sampling)?;
    let mut xtx = DMatrix::<f64>::zeros(dim, dim);
    let mut xty = DVector::<f64>::zeros(dim);
    for st in &states {
        let phi = feat(state_of(st.frame)?);
        for i in 0..dim {
            xty[i] += phi[i] * (st.progress.value() - PRIOR);
            for j in 0..dim {
                xtx[(i, j)] += phi[i] * phi[j];
            }
        }
    }
    if cfg.regularization == 0.0 {
        let rank = numeric_rank(&xtx);
        if rank < dim {
            return Err(EstimatorError::SingularFit { rank, dim });
        }
    }
    for i in 0..dim {
        xtx[(i, i)] += cfg.regularization;
    }
    let w0 = xtx
        .clone()
        .cholesky()
        .map(|c| c.solve(&xty))
        .ok_or(EstimatorError::SingularFit {
            rank: numeric_rank(&xtx),
            dim,
        })?;

    let mut rows = Vec::with_capacity(samples.len());
    for s in &samples {
        let a = feat(state_of(s.before_ref.frame)?);
        let b = feat(state_of(s.after_ref.frame)?);
        rows.push((a, b, s.hop.value()));
    }
    let problem = FitProblem {
        rows,
        reg: cfg.regularization,
    };

    let mut w: Vec<f64> = w0.iter().cloned().collect();
    let mut loss = problem.loss(&w);
    let mut mu = 1e-3;
    for _ in 0..300 {
        let (jtj, jtr) = problem.normal_equations(&w);
        if jtr.amax() < 1e-14 {
            break;
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut damped = jtj.clone();
            for i in 0..dim {
                damped[(i, i)] += mu * (1.0 + jtj[(i, i)]);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&jtr))) else {
                mu *= 10.0;
                continue;
            };
            let candidate: Vec<f64> = w.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let cand_loss = problem.loss(&candidate);
            if cand_loss < loss {
                let rel = (loss - cand_loss) / loss.max(1e-300);
                w = candidate;
                loss = cand_loss;
                mu = (mu / 3.0).max(1e-12);
                improved = rel > 1e-12;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }

    let n = problem.rows.len().max(1) as f64;
    let data_loss = loss - cfg.regularization * dot(&w, &w);
    Ok(FittedEstimator {
        weights: w,
        feature_map: cfg.feature_map.clone(),
        regularization: cfg.regularization,
        pair_budget: cfg.pair_budget,
        rng_seed: sampling.rng_seed,
        train_pairs: problem.rows.len(),
        train_mse: data_loss.max(0.0) / n,
        coords: cfg.state_coords.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn truth(vals: &[f64]) -> Vec<Progress> {
        vals.iter().map(|&v| Progress::new(v).unwrap()).collect()
    }

    fn q(before: StateId, after: StateId) -> EstimatorQuery<'static> {
        EstimatorQuery {
            init: 0,
            goal: 4,
            before,
            after,
            task_text: "reach",
        }
    }

    #[test]
    fn oracle_examples() {
        let t = truth(&[0.0, 0.5, 0.75, 0.9, 1.0]);
        assert!((oracle_hop(&q(1, 2), &t).unwrap().value() - 0.5).abs() < 1e-12);
        assert_eq!(oracle_hop(&q(2, 2), &t).unwrap().value(), 0.0);
        assert_eq!(oracle_hop(&q(4, 0), &t).unwrap().value(), -1.0);
        assert!(matches!(
            oracle_hop(&q(1, 9), &t),
            Err(EstimatorError::Unresolvable(9))
        ));
    }

    #[test]
    fn oracle_reconstructs_truth_along_a_path() {
        let t = truth(&[0.0, 0.2, 0.1, 0.6, 0.55, 1.0]);
        let est = OracleEstimator::new(t.clone());
        let mut rng = rng_for(0, 0, 0);
        let mut phi = t[0];
        for w in [0usize, 1, 2, 3, 4, 5].windows(2) {
            let hop = est
                .estimate(
                    &EstimatorQuery {
                        init: 0,
                        goal: 5,
                        before: w[0],
                        after: w[1],
                        task_text: "",
                    },
                    &mut rng,
                )
                .unwrap();
            phi = crate::progress::apply_hop(phi, hop);
            assert!((phi.value() - t[w[1]].value()).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_outside_region_equals_oracle() {
        let t = truth(&[0.0, 0.3, 0.6, 0.8, 1.0]);
        let noise = NoiseModel {
            ood_region: [2].into_iter().collect(),
            ood_divergence: 0.4,
            ..NoiseModel::default()
        };
        for (b, a) in [(0, 1), (1, 3), (4, 3), (3, 1)] {
            assert_eq!(
                noisy_hop(&q(b, a), &t, &noise, 5).unwrap(),
                oracle_hop(&q(b, a), &t).unwrap()
            );
        }
    }

    #[test]
    fn ood_split_is_the_configured_divergence() {
        use crate::progress::{backward_anchored, forward_anchored};
        let t = truth(&[0.0, 0.3, 0.6, 0.8, 1.0]);
        let noise = NoiseModel {
            ood_region: [2].into_iter().collect(),
            ood_divergence: 0.4,
            ..NoiseModel::default()
        };
        let f = forward_anchored(noisy_hop(&q(0, 2), &t, &noise, 1).unwrap());
        let b = backward_anchored(noisy_hop(&q(4, 2), &t, &noise, 1).unwrap());
        assert!(((f.value() - b.value()).abs() - 0.4).abs() < 1e-12);
        // incremental queries are not shifted
        assert_eq!(
            noisy_hop(&q(1, 2), &t, &noise, 1).unwrap(),
            oracle_hop(&q(1, 2), &t).unwrap()
        );
    }

    #[test]
    fn gaussian_noise_has_configured_spread() {
        let t = truth(&[0.0, 0.3, 0.5, 0.8, 1.0]);
        let noise = NoiseModel {
            gaussian_sigma: 0.05,
            ..NoiseModel::default()
        };
        let base = oracle_hop(&q(1, 2), &t).unwrap().value();
        let mut rng = rng_for(11, streams::ESTIMATOR, 0);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| noisy_hop_unclamped(&q(1, 2), &t, &noise, &mut rng).unwrap() - base)
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((0.045..=0.055).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn clamping_and_unclamped_errors() {
        let t = truth(&[0.0, 0.5, 1.0]);
        let mut noise = NoiseModel {
            ood_region: [2].into_iter().collect(),
            ood_divergence: 0.8,
            ..NoiseModel::default()
        };
        let query = EstimatorQuery {
            init: 0,
            goal: 2,
            before: 0,
            after: 2,
            task_text: "",
        };
        assert_eq!(noisy_hop(&query, &t, &noise, 0).unwrap().value(), 1.0);
        noise.clamp = false;
        assert!(matches!(
            noisy_hop(&query, &t, &noise, 0),
            Err(EstimatorError::Domain(_))
        ));
    }

    fn line_demo(n: usize) -> (Trajectory, Vec<Vec<f64>>) {
        let frames: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let mut fpv = BTreeMap::new();
        fpv.insert("grid".to_string(), frames);
        let traj = Trajectory {
            id: "demo".into(),
            task_text: "walk".into(),
            num_frames: n,
            views: vec!["grid".into()],
            keyframes: vec![0, n / 2, n - 1],
            frames_per_view: fpv,
        };
        let coords = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        (traj, coords)
    }

    fn all_pairs(n: usize) -> Vec<(StateId, StateId, f64)> {
        let t: Vec<Progress> = (0..n)
            .map(|i| Progress::new(i as f64 / (n - 1) as f64).unwrap())
            .collect();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                out.push((a, b, hop_label(t[a], t[b]).value()));
            }
        }
        out
    }

    fn fit_cfg(traj: Trajectory, coords: Vec<Vec<f64>>, map: FeatureMap, reg: f64) -> OneShotFitConfig {
        OneShotFitConfig {
            demo: traj,
            state_coords: coords,
            feature_map: map,
            regularization: reg,
            pair_budget: 400,
            sampling: SamplingConfig {
                chunk_size: 1,
                rng_seed: 3,
                ..SamplingConfig::default()
            },
        }
    }

    #[test]
    fn realizable_fit_recovers_hops() {
        let (traj, coords) = line_demo(21);
        let est = fit_one_shot(&fit_cfg(traj, coords, FeatureMap::Raw, 0.0)).unwrap();
        let mut rng = rng_for(0, 0, 0);
        let mse = hop_mse(&est, &all_pairs(21), 0, 20, &mut rng).unwrap();
        assert!(mse < 1e-6, "mse {mse}");
    }

    #[test]
    fn heavy_regularization_collapses_to_zero_hop() {
        let (traj, coords) = line_demo(21);
        let est = fit_one_shot(&fit_cfg(traj, coords, FeatureMap::Raw, 1e12)).unwrap();
        let mut rng = rng_for(0, 0, 0);
        for (a, b, _) in all_pairs(21).into_iter().step_by(7) {
            let h = est
                .estimate(
                    &EstimatorQuery {
                        init: 0,
                        goal: 20,
                        before: a,
                        after: b,
                        task_text: "",
                    },
                    &mut rng,
                )
                .unwrap();
            assert!(h.value().abs() < 1e-6);
        }
    }

    #[test]
    fn rank_deficient_features_are_reported() {
        let (traj, _) = line_demo(5);
        // every state has the same coordinates: raw features have rank 1 < 2
        let coords = vec![vec![0.5]; 5];
        let err = fit_one_shot(&fit_cfg(traj, coords, FeatureMap::Raw, 0.0)).unwrap_err();
        assert!(matches!(err, EstimatorError::SingularFit { rank: 1, dim: 2 }));
    }

    #[test]
    fn fit_is_deterministic_and_serializable() {
        let (traj, coords) = line_demo(15);
        let map = FeatureMap::rbf_grid(4, 1, 0.3);
        let a = fit_one_shot(&fit_cfg(traj.clone(), coords.clone(), map.clone(), 1e-3)).unwrap();
        let b = fit_one_shot(&fit_cfg(traj, coords.clone(), map, 1e-3)).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        assert!(json.contains("\"weights\"") && json.contains("\"rbf\""));
        let back: FittedEstimator = serde_json::from_str(&json).unwrap();
        assert_eq!(back.with_coords(coords), a);
    }

    #[test]
    fn bad_frame_refs_are_rejected() {
        let (mut traj, coords) = line_demo(5);
        traj.frames_per_view.get_mut("grid").unwrap()[2] = "cam0.png".into();
        let err = fit_one_shot(&fit_cfg(traj, coords, FeatureMap::Raw, 0.0)).unwrap_err();
        assert!(matches!(err, EstimatorError::BadFrameRef(_)));
    }
}
