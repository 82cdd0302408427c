//! Reward-model quality metrics.
//!
//! Value-order correlation (VOC) is the Spearman correlation between scores
//! given to shuffled frames and their chronological order. Frames are scored
//! independently against the trajectory's first and last frames, so only the
//! init-anchored perspective is available.
//!
//! Outcome judgment classifies a progress curve `P_1..P_T` (1-indexed):
//! success (SE) when `P_T > 0.8` and `(3/T)·Σ_{t=⌈2T/3⌉}^{T} P_t > 0.6`,
//! partial success (PSE) when the mean is at least `ξ`, failure (FE)
//! otherwise.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{EstimatorError, EstimatorQuery, HopEstimator, StateId};
use crate::exec::Execution;
use crate::labeling::Trajectory;
use crate::progress::{forward_anchored, hop_label, Progress};
use crate::seed::{rng_for, streams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("true order is not a permutation of 0..{0}")]
    NotPermutation(usize),
    #[error("frame reference `{0}` is not a state id")]
    BadFrameRef(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VocScore {
    pub value: f64,
    /// Predictions were constant, so the correlation is undefined and
    /// reported as 0.
    pub degenerate: bool,
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation between `predicted` and the chronological positions
/// `true_order`.
pub fn voc_score(predicted: &[f64], true_order: &[usize]) -> Result<VocScore, EvalError> {
    if predicted.len() != true_order.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), true_order.len()));
    }
    let n = predicted.len();
    if n < 2 {
        return Err(EvalError::TooShort { need: 2, got: n });
    }
    let mut seen = vec![false; n];
    for &o in true_order {
        if o >= n || seen[o] {
            return Err(EvalError::NotPermutation(n));
        }
        seen[o] = true;
    }
    let order: Vec<f64> = true_order.iter().map(|&o| o as f64 + 1.0).collect();
    Ok(match pearson(&average_ranks(predicted), &order) {
        Some(value) => VocScore {
            value,
            degenerate: false,
        },
        None => VocScore {
            value: 0.0,
            degenerate: true,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocDensity {
    /// Keyframes only.
    Sparse,
    /// Keyframes plus three uniform samples inside each segment.
    Medium,
    /// Uniform over the whole trajectory, at most [`DENSE_CAP`] frames.
    Dense,
}

pub const DENSE_CAP: usize = 64;
pub const MEDIUM_PER_SEGMENT: usize = 3;

impl VocDensity {
    pub const ALL: [VocDensity; 3] = [VocDensity::Sparse, VocDensity::Medium, VocDensity::Dense];

    pub fn as_str(self) -> &'static str {
        match self {
            VocDensity::Sparse => "sparse",
            VocDensity::Medium => "medium",
            VocDensity::Dense => "dense",
        }
    }
}

impl std::str::FromStr for VocDensity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "sparse" | "s" => Ok(VocDensity::Sparse),
            "medium" | "m" => Ok(VocDensity::Medium),
            "dense" | "d" => Ok(VocDensity::Dense),
            other => Err(format!("unknown density `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocConfig {
    pub sampling: VocDensity,
    pub shuffle_seed: u64,
}

/// Frames evaluated at a density, in chronological order.
pub fn select_frames(traj: &Trajectory, density: VocDensity) -> Vec<usize> {
    let mut frames: Vec<usize> = match density {
        VocDensity::Sparse => traj.keyframes.clone(),
        VocDensity::Medium => {
            let mut out = vec![traj.keyframes[0]];
            for seg in traj.keyframes.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                for k in 1..=MEDIUM_PER_SEGMENT {
                    let f = a + ((k * (b - a)) as f64 / (MEDIUM_PER_SEGMENT + 1) as f64).round() as usize;
                    if f > a && f < b {
                        out.push(f);
                    }
                }
                out.push(b);
            }
            out
        }
        VocDensity::Dense => {
            let l = traj.num_frames;
            if l <= DENSE_CAP {
                (0..l).collect()
            } else {
                (0..DENSE_CAP)
                    .map(|i| ((i * (l - 1)) as f64 / (DENSE_CAP - 1) as f64).round() as usize)
                    .collect()
            }
        }
    };
    frames.dedup();
    frames
}

/// Scores one frame of a trajectory in isolation.
pub trait FrameScorer: Sync {
    fn name(&self) -> &str;
    fn score(&self, traj: &Trajectory, frame: usize, rng: &mut dyn RngCore) -> Result<f64, EvalError>;
}

/// How an estimator's state ids are read off a trajectory frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateMapping {
    /// The frame index is the state id.
    FrameIndex,
    /// The first view's frame reference parses as the state id.
    FirstViewRef,
}

impl StateMapping {
    fn state(self, traj: &Trajectory, frame: usize) -> Result<StateId, EvalError> {
        match self {
            StateMapping::FrameIndex => Ok(frame),
            StateMapping::FirstViewRef => {
                let r = traj.frame_ref(&traj.views[0], frame);
                r.parse().map_err(|_| EvalError::BadFrameRef(r))
            }
        }
    }
}

/// Init-anchored progress `max(H(s_0, s), 0)` from any hop estimator.
pub struct AnchoredScorer<'a> {
    pub estimator: &'a dyn HopEstimator,
    pub mapping: StateMapping,
}

impl FrameScorer for AnchoredScorer<'_> {
    fn name(&self) -> &str {
        self.estimator.name()
    }
    fn score(&self, traj: &Trajectory, frame: usize, rng: &mut dyn RngCore) -> Result<f64, EvalError> {
        let init = self.mapping.state(traj, 0)?;
        let q = EstimatorQuery {
            init,
            goal: self.mapping.state(traj, traj.num_frames - 1)?,
            before: init,
            after: self.mapping.state(traj, frame)?,
            task_text: &traj.task_text,
        };
        Ok(forward_anchored(self.estimator.estimate(&q, rng)?).value())
    }
}

fn chronological(traj: &Trajectory, frame: usize) -> Progress {
    Progress::clamped(frame as f64 / (traj.num_frames.max(2) - 1) as f64)
}

/// Oracle whose true progress is elapsed time, `t / (L − 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChronologicalOracle;

impl FrameScorer for ChronologicalOracle {
    fn name(&self) -> &str {
        "oracle"
    }
    fn score(&self, traj: &Trajectory, frame: usize, _rng: &mut dyn RngCore) -> Result<f64, EvalError> {
        let hop = hop_label(chronological(traj, 0), chronological(traj, frame));
        Ok(forward_anchored(hop).value())
    }
}

/// `1 − Φ` of the chronological oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct AntiOracle;

impl FrameScorer for AntiOracle {
    fn name(&self) -> &str {
        "anti_oracle"
    }
    fn score(&self, traj: &Trajectory, frame: usize, rng: &mut dyn RngCore) -> Result<f64, EvalError> {
        Ok(1.0 - ChronologicalOracle.score(traj, frame, rng)?)
    }
}

/// Uniform scores in `[0, 1]`, ignoring the frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomScorer;

impl FrameScorer for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }
    fn score(&self, _traj: &Trajectory, _frame: usize, rng: &mut dyn RngCore) -> Result<f64, EvalError> {
        Ok(rng.random::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VocRow {
    pub trajectory_id: String,
    pub density: VocDensity,
    pub voc: f64,
    pub degenerate: bool,
    pub frames: usize,
    pub failures: usize,
    /// More than 10% of frames failed to score; excluded from the mean.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VocReport {
    pub scorer: String,
    pub density: VocDensity,
    pub rows: Vec<VocRow>,
    pub mean_voc: f64,
}

impl VocReport {
    pub fn write_csv<W: Write>(&self, w: W, header: bool) -> Result<(), EvalError> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        if header {
            out.write_record(["trajectory_id", "density", "voc"])?;
        }
        for r in &self.rows {
            let voc = if r.skipped {
                "nan".to_string()
            } else {
                format!("{:.6}", r.voc)
            };
            out.write_record([r.trajectory_id.as_str(), r.density.as_str(), &voc])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn voc_one(
    scorer: &dyn FrameScorer,
    traj: &Trajectory,
    index: usize,
    cfg: &VocConfig,
) -> Result<VocRow, EvalError> {
    let chronological = select_frames(traj, cfg.sampling);
    let mut rng = rng_for(cfg.shuffle_seed, streams::VOC, index as u64);
    let mut shuffled: Vec<(usize, usize)> = chronological.iter().copied().enumerate().collect();
    shuffled.shuffle(&mut rng);
    let mut predicted = Vec::with_capacity(shuffled.len());
    let mut order = Vec::with_capacity(shuffled.len());
    let mut failures = 0;
    for &(rank, frame) in &shuffled {
        match scorer.score(traj, frame, &mut rng) {
            Ok(v) => {
                predicted.push(v);
                order.push(rank);
            }
            Err(e) => {
                log::warn!("{}: frame {frame} failed to score: {e}", traj.id);
                failures += 1;
            }
        }
    }
    let frames = shuffled.len();
    let skipped = failures * 10 > frames || predicted.len() < 2;
    let score = if skipped {
        VocScore {
            value: f64::NAN,
            degenerate: false,
        }
    } else {
        // re-rank surviving frames so the order stays a permutation
        let ranks = average_ranks(&order.iter().map(|&o| o as f64).collect::<Vec<_>>());
        let dense: Vec<usize> = ranks.iter().map(|r| *r as usize - 1).collect();
        voc_score(&predicted, &dense)?
    };
    Ok(VocRow {
        trajectory_id: traj.id.clone(),
        density: cfg.sampling,
        voc: score.value,
        degenerate: score.degenerate,
        frames,
        failures,
        skipped,
    })
}

/// VOC per trajectory and the mean over trajectories that were not skipped.
pub fn evaluate_estimator_voc(
    scorer: &dyn FrameScorer,
    trajectories: &[Trajectory],
    cfg: &VocConfig,
    exec: Execution,
) -> Result<VocReport, EvalError> {
    for t in trajectories {
        t.validate().map_err(EstimatorError::from)?;
    }
    let indexed: Vec<(usize, &Trajectory)> = trajectories.iter().enumerate().collect();
    let rows = exec
        .map(&indexed, |&(i, t)| voc_one(scorer, t, i, cfg))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let kept: Vec<f64> = rows.iter().filter(|r| !r.skipped).map(|r| r.voc).collect();
    let mean_voc = if kept.is_empty() {
        f64::NAN
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    };
    Ok(VocReport {
        scorer: scorer.name().to_string(),
        density: cfg.sampling,
        rows,
        mean_voc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeLabel {
    SE,
    PSE,
    FE,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 3] = [OutcomeLabel::SE, OutcomeLabel::PSE, OutcomeLabel::FE];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeLabel::SE => "SE",
            OutcomeLabel::PSE => "PSE",
            OutcomeLabel::FE => "FE",
        }
    }
}

pub const DEFAULT_XI: f64 = 0.4;
pub const FINAL_THRESHOLD: f64 = 0.8;
pub const TAIL_THRESHOLD: f64 = 0.6;

/// First 1-indexed time step of the success tail, `⌈2T/3⌉`.
pub fn tail_start(len: usize) -> usize {
    (2 * len).div_ceil(3)
}

/// `(3/T)·Σ_{t=⌈2T/3⌉}^{T} P_t`.
pub fn tail_score(curve: &[Progress]) -> f64 {
    let t = curve.len();
    let sum: f64 = curve[tail_start(t) - 1..].iter().map(|p| p.value()).sum();
    3.0 / t as f64 * sum
}

pub fn judge_outcome(curve: &[Progress], xi: f64) -> Result<OutcomeLabel, EvalError> {
    if curve.len() < 3 {
        return Err(EvalError::TooShort {
            need: 3,
            got: curve.len(),
        });
    }
    let last = curve[curve.len() - 1].value();
    if last > FINAL_THRESHOLD && tail_score(curve) > TAIL_THRESHOLD {
        return Ok(OutcomeLabel::SE);
    }
    let mean = curve.iter().map(|p| p.value()).sum::<f64>() / curve.len() as f64;
    Ok(if mean >= xi {
        OutcomeLabel::PSE
    } else {
        OutcomeLabel::FE
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    /// `matrix[truth][predicted]` in SE, PSE, FE order.
    pub matrix: [[usize; 3]; 3],
    /// Recall per true class; `None` when the class is absent.
    pub per_class_accuracy: [Option<f64>; 3],
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

impl ClassificationReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["truth", "pred_SE", "pred_PSE", "pred_FE", "class_accuracy"])?;
        for t in OutcomeLabel::ALL {
            let row = self.matrix[t.index()];
            let acc = self.per_class_accuracy[t.index()].map_or("nan".to_string(), |a| format!("{a:.6}"));
            out.write_record([
                t.as_str().to_string(),
                row[0].to_string(),
                row[1].to_string(),
                row[2].to_string(),
                acc,
            ])?;
        }
        out.write_record([
            "overall".to_string(),
            String::new(),
            String::new(),
            String::new(),
            format!("{:.6}", self.accuracy),
        ])?;
        out.flush()?;
        Ok(())
    }
}

pub fn classification_report(
    predictions: &[OutcomeLabel],
    truth: &[OutcomeLabel],
) -> Result<ClassificationReport, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), truth.len()));
    }
    let mut matrix = [[0usize; 3]; 3];
    for (p, t) in predictions.iter().zip(truth) {
        matrix[t.index()][p.index()] += 1;
    }
    let correct = (0..3).map(|i| matrix[i][i]).sum();
    let total = truth.len();
    let per_class_accuracy = std::array::from_fn(|i| {
        let n: usize = matrix[i].iter().sum();
        (n > 0).then(|| matrix[i][i] as f64 / n as f64)
    });
    Ok(ClassificationReport {
        matrix,
        per_class_accuracy,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        correct,
        total,
    })
}

/// A labeled synthetic curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveFixture {
    pub id: String,
    pub curve: Vec<Progress>,
    pub label: OutcomeLabel,
}

/// Sixty curves, twenty per class, each at least 0.05 away from every
/// threshold it is tested against (with `ξ = 0.4`). Lengths include
/// 3, 4, 6 and 7.
pub fn judgment_fixtures(seed: u64) -> Vec<CurveFixture> {
    let mut rng = rng_for(seed, streams::FIXTURE, 0);
    let lengths = [3usize, 4, 6, 7, 10, 15, 20, 30, 45, 60];
    let mut out = Vec::with_capacity(60);
    for label in OutcomeLabel::ALL {
        for i in 0..20 {
            let t = lengths[i % lengths.len()];
            let curve = match label {
                // rises to a plateau in [0.9, 1] reached by the tail
                OutcomeLabel::SE => {
                    let top = rng.random_range(0.9..=1.0);
                    let start = tail_start(t) - 1;
                    (0..t)
                        .map(|k| {
                            let v = if k >= start {
                                top
                            } else {
                                top * (k as f64 + 1.0) / (start as f64 + 1.0)
                            };
                            Progress::clamped(v)
                        })
                        .collect()
                }
                // hovers in [0.5, 0.7]: mean clear of ξ, final clear of 0.8
                OutcomeLabel::PSE => (0..t).map(|_| Progress::clamped(rng.random_range(0.5..=0.7))).collect(),
                // stays in [0, 0.3]
                OutcomeLabel::FE => (0..t).map(|_| Progress::clamped(rng.random_range(0.0..=0.3))).collect(),
            };
            out.push(CurveFixture {
                id: format!("{}-{i:02}", label.as_str()),
                curve,
                label,
            });
        }
    }
    out
}
