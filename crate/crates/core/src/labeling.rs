//! Hop-labeled training samples from keyframed trajectories.
//!
//! Pipeline per trajectory:
//!
//! 1. [`sample_states`] keeps every keyframe and spreads `m = ⌊⌊L/C⌋ / N⌋`
//!    interior points uniformly inside each of the `N` keyframe segments.
//!    Sampled state `i` of `M + 1` gets ground-truth progress `i / M`.
//! 2. [`generate_hop_samples`] draws ordered state pairs from a seeded pool
//!    and accepts them into a `(hop bin, temporal-gap bin)` grid with a fixed
//!    per-cell quota. Cells the trajectory cannot fill stay short; they are
//!    reported, never padded with duplicates.
//! 3. A zero-hop channel adds pairs of raw frames that share a sampled state
//!    (so their progress difference is 0) labeled exactly 0, at rate
//!    `alpha_zero` of the final output.
//!
//! Segments receive the same number of interior points regardless of their
//! length. Frame references are opaque strings and are never decoded.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::progress::{hop_label, Hop, Progress};
use crate::seed::{rng_for, streams};

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("trajectory `{id}`: {reason}")]
    InvalidTrajectory { id: String, reason: String },
    #[error("trajectory `{id}`: chunk size {chunk} exceeds frame count {frames}")]
    ChunkTooLarge { id: String, chunk: usize, frames: usize },
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error("unknown view `{view}` for trajectory `{id}`")]
    UnknownView { id: String, view: String },
    #[error("manifest line {line}: {source}")]
    Manifest {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A keyframed, view-synchronized recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub task_text: String,
    pub num_frames: usize,
    pub views: Vec<String>,
    pub keyframes: Vec<usize>,
    /// Per-view frame references. Missing views get synthetic ids
    /// `"{id}/{view}/{frame}"`.
    #[serde(default)]
    pub frames_per_view: BTreeMap<String, Vec<String>>,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), LabelingError> {
        let bad = |reason: String| LabelingError::InvalidTrajectory {
            id: self.id.clone(),
            reason,
        };
        if self.num_frames == 0 {
            return Err(bad("num_frames must be positive".into()));
        }
        if self.views.is_empty() {
            return Err(bad("at least one view is required".into()));
        }
        let unique: BTreeSet<&String> = self.views.iter().collect();
        if unique.len() != self.views.len() {
            return Err(bad("duplicate view names".into()));
        }
        if self.keyframes.len() < 2 {
            return Err(bad("need at least two keyframes (one segment)".into()));
        }
        if self.keyframes[0] != 0 || *self.keyframes.last().unwrap() != self.num_frames - 1 {
            return Err(bad(format!(
                "keyframes must start at 0 and end at {}",
                self.num_frames - 1
            )));
        }
        if self.keyframes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("keyframes must be strictly increasing".into()));
        }
        for (view, frames) in &self.frames_per_view {
            if !self.views.contains(view) {
                return Err(bad(format!("frames given for undeclared view `{view}`")));
            }
            if frames.len() != self.num_frames {
                return Err(bad(format!(
                    "view `{view}` has {} frames, expected {}",
                    frames.len(),
                    self.num_frames
                )));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> usize {
        self.keyframes.len().saturating_sub(1)
    }

    pub fn frame_ref(&self, view: &str, frame: usize) -> String {
        match self.frames_per_view.get(view) {
            Some(frames) => frames[frame].clone(),
            None => format!("{}/{}/{}", self.id, view, frame),
        }
    }

    fn state_ref(&self, frame: usize) -> StateRef {
        StateRef {
            frame,
            views: self
                .views
                .iter()
                .map(|v| (v.clone(), self.frame_ref(v, frame)))
                .collect(),
        }
    }
}

/// One synchronized multi-view observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateRef {
    pub frame: usize,
    pub views: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub chunk_size: usize,
    pub n_hop_bins: usize,
    pub n_distance_bins: usize,
    pub alpha_zero: f64,
    /// Defaults to half an inter-state progress step, `0.5 / M`.
    pub zero_hop_epsilon: Option<f64>,
    pub samples_per_cell: usize,
    pub rng_seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            chunk_size: 1,
            n_hop_bins: 25,
            n_distance_bins: 4,
            alpha_zero: 0.05,
            zero_hop_epsilon: None,
            samples_per_cell: 1,
            rng_seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), LabelingError> {
        let bad = |s: &str| Err(LabelingError::InvalidConfig(s.to_string()));
        if self.chunk_size == 0 {
            return bad("chunk_size must be positive");
        }
        if self.n_hop_bins == 0 || self.n_distance_bins == 0 {
            return bad("bin counts must be positive");
        }
        if !(0.0..1.0).contains(&self.alpha_zero) {
            return bad("alpha_zero must be in [0, 1)");
        }
        if let Some(eps) = self.zero_hop_epsilon {
            if !(eps > 0.0) {
                return bad("zero_hop_epsilon must be positive");
            }
        }
        if self.samples_per_cell == 0 {
            return bad("samples_per_cell must be positive");
        }
        Ok(())
    }

    pub fn hop_bin(&self, hop: f64) -> usize {
        let n = self.n_hop_bins;
        (((hop + 1.0) / 2.0 * n as f64).floor() as usize).min(n - 1)
    }

    /// Uniform bins over gaps `1..=num_frames-1`; a zero gap falls in bin 0.
    pub fn gap_bin(&self, gap: usize, num_frames: usize) -> usize {
        let span = num_frames.saturating_sub(1).max(1);
        (gap.saturating_sub(1) * self.n_distance_bins / span).min(self.n_distance_bins - 1)
    }

    pub fn cells(&self) -> usize {
        self.n_hop_bins * self.n_distance_bins
    }
}

/// A sampled state: raw frame index plus ground-truth progress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampledState {
    pub frame: usize,
    pub progress: Progress,
}

/// Interior points per segment, `⌊⌊L/C⌋ / N⌋`.
pub fn points_per_segment(num_frames: usize, chunk_size: usize, segments: usize) -> usize {
    (num_frames / chunk_size) / segments
}

pub fn sample_states(
    traj: &Trajectory,
    cfg: &SamplingConfig,
) -> Result<Vec<SampledState>, LabelingError> {
    traj.validate()?;
    cfg.validate()?;
    if cfg.chunk_size > traj.num_frames {
        return Err(LabelingError::ChunkTooLarge {
            id: traj.id.clone(),
            chunk: cfg.chunk_size,
            frames: traj.num_frames,
        });
    }
    let m = points_per_segment(traj.num_frames, cfg.chunk_size, traj.segments());
    let mut frames = vec![traj.keyframes[0]];
    for seg in traj.keyframes.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let span = b - a;
        let mut interior = BTreeSet::new();
        for k in 1..=m {
            let offset = ((k * span) as f64 / (m + 1) as f64).round() as usize;
            let f = a + offset;
            if f > a && f < b {
                interior.insert(f);
            }
        }
        frames.extend(interior);
        frames.push(b);
    }
    let last = (frames.len() - 1).max(1) as f64;
    Ok(frames
        .iter()
        .enumerate()
        .map(|(i, &frame)| SampledState {
            frame,
            progress: Progress::clamped(i as f64 / last),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleChannel {
    Stratified,
    ZeroHop,
}

/// One training tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopSample {
    pub trajectory_id: String,
    pub task_text: String,
    pub init_ref: StateRef,
    pub goal_ref: StateRef,
    pub before_ref: StateRef,
    pub after_ref: StateRef,
    pub hop: Hop,
    pub hop_percent: i32,
    pub phi_before: Progress,
    pub phi_after: Progress,
    pub temporal_gap: usize,
    pub hop_bin: usize,
    pub gap_bin: usize,
    pub views_used: Vec<String>,
    pub channel: SampleChannel,
}

/// Per-trajectory sampling bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingDiagnostics {
    pub trajectory_id: String,
    pub sampled_states: usize,
    pub pool_size: usize,
    pub filled_cells: usize,
    pub underfull_cells: Vec<(usize, usize)>,
    pub zero_hop_epsilon: f64,
    pub zero_hop_requested: usize,
    pub zero_hop_emitted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub samples: Vec<HopSample>,
    pub diagnostics: LabelingDiagnostics,
}

/// Exhaustive pools are used up to this many sampled states.
pub const EXHAUSTIVE_POOL_LIMIT: usize = 200;
/// Random pool size per requested sample beyond the exhaustive limit.
pub const POOL_OVERSAMPLING: usize = 50;

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn candidate_pool(n: usize, target: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    if n <= EXHAUSTIVE_POOL_LIMIT {
        let mut pool = Vec::with_capacity(n * n.saturating_sub(1));
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    pool.push((p, q));
                }
            }
        }
        pool
    } else {
        let want = (POOL_OVERSAMPLING * target).min(n * (n - 1));
        let mut seen = HashSet::with_capacity(want);
        let mut pool = Vec::with_capacity(want);
        let mut attempts = 0usize;
        while pool.len() < want && attempts < want * 4 {
            attempts += 1;
            let p = rng.random_range(0..n);
            let q = rng.random_range(0..n);
            if p != q && seen.insert((p, q)) {
                pool.push((p, q));
            }
        }
        pool.sort_unstable();
        pool
    }
}

/// Frames that snap to each sampled state (nearest state, ties to the
/// earlier one).
fn local_windows(states: &[SampledState], num_frames: usize) -> Vec<(usize, usize)> {
    let n = states.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 {
                0
            } else {
                (states[i - 1].frame + states[i].frame) / 2 + 1
            };
            let hi = if i + 1 == n {
                num_frames - 1
            } else {
                (states[i].frame + states[i + 1].frame) / 2
            };
            (lo, hi)
        })
        .collect()
}

pub fn generate_hop_samples(
    traj: &Trajectory,
    cfg: &SamplingConfig,
) -> Result<LabeledTrajectory, LabelingError> {
    let states = sample_states(traj, cfg)?;
    let m = states.len() - 1;
    let epsilon = cfg.zero_hop_epsilon.unwrap_or(0.5 / m.max(1) as f64);
    let mut rng = rng_for(cfg.rng_seed, streams::LABELING, fnv1a(&traj.id));

    let quota = cfg.samples_per_cell;
    let mut pool = candidate_pool(states.len(), quota * cfg.cells(), &mut rng);
    pool.shuffle(&mut rng);

    let init_ref = traj.state_ref(0);
    let goal_ref = traj.state_ref(traj.num_frames - 1);
    let make = |p: &SampledState, q: &SampledState, hop: Hop, channel: SampleChannel| {
        let gap = p.frame.abs_diff(q.frame);
        HopSample {
            trajectory_id: traj.id.clone(),
            task_text: traj.task_text.clone(),
            init_ref: init_ref.clone(),
            goal_ref: goal_ref.clone(),
            before_ref: traj.state_ref(p.frame),
            after_ref: traj.state_ref(q.frame),
            hop,
            hop_percent: hop.percent(),
            phi_before: p.progress,
            phi_after: q.progress,
            temporal_gap: gap,
            hop_bin: cfg.hop_bin(hop.value()),
            gap_bin: cfg.gap_bin(gap, traj.num_frames),
            views_used: traj.views.clone(),
            channel,
        }
    };

    let mut cells: Vec<Vec<HopSample>> = vec![Vec::new(); cfg.cells()];
    for &(pi, qi) in &pool {
        let (p, q) = (&states[pi], &states[qi]);
        let hop = hop_label(p.progress, q.progress);
        let cell = cfg.hop_bin(hop.value()) * cfg.n_distance_bins
            + cfg.gap_bin(p.frame.abs_diff(q.frame), traj.num_frames);
        if cells[cell].len() < quota {
            cells[cell].push(make(p, q, hop, SampleChannel::Stratified));
        }
    }
    let underfull: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.len() < quota)
        .map(|(i, _)| (i / cfg.n_distance_bins, i % cfg.n_distance_bins))
        .collect();
    if !underfull.is_empty() {
        log::warn!(
            "trajectory `{}`: {} of {} bins below quota {}",
            traj.id,
            underfull.len(),
            cfg.cells(),
            quota
        );
    }
    let filled = cells.iter().filter(|c| !c.is_empty()).count();
    let mut samples: Vec<HopSample> = cells.into_iter().flatten().collect();

    // zero-hop channel: alpha_zero of the final output, stochastically rounded
    let target = cfg.alpha_zero / (1.0 - cfg.alpha_zero) * samples.len() as f64;
    let mut requested = target.floor() as usize;
    if rng.random::<f64>() < target - target.floor() {
        requested += 1;
    }
    let windows = local_windows(&states, traj.num_frames);
    let wide: Vec<usize> = (0..states.len())
        .filter(|&i| windows[i].1 > windows[i].0)
        .collect();
    let mut used = HashSet::new();
    let mut emitted = 0usize;
    let mut attempts = 0usize;
    while emitted < requested && attempts < requested * 64 + 64 {
        attempts += 1;
        let (i, a, b) = if wide.is_empty() {
            let i = rng.random_range(0..states.len());
            (i, states[i].frame, states[i].frame)
        } else {
            let i = wide[rng.random_range(0..wide.len())];
            let (lo, hi) = windows[i];
            let a = rng.random_range(lo..=hi);
            let mut b = rng.random_range(lo..hi);
            if b >= a {
                b += 1;
            }
            (i, a, b)
        };
        if !used.insert((a, b)) && !wide.is_empty() {
            continue;
        }
        // both frames snap to state i, so |ΔΦ| = 0 <= epsilon
        let phi = states[i].progress;
        let before = SampledState { frame: a, progress: phi };
        let after = SampledState { frame: b, progress: phi };
        samples.push(make(&before, &after, Hop::ZERO, SampleChannel::ZeroHop));
        emitted += 1;
    }
    if emitted < requested {
        log::warn!(
            "trajectory `{}`: zero-hop channel short ({emitted} of {requested})",
            traj.id
        );
    }

    Ok(LabeledTrajectory {
        samples,
        diagnostics: LabelingDiagnostics {
            trajectory_id: traj.id.clone(),
            sampled_states: states.len(),
            pool_size: pool.len(),
            filled_cells: filled,
            underfull_cells: underfull,
            zero_hop_epsilon: epsilon,
            zero_hop_requested: requested,
            zero_hop_emitted: emitted,
        },
    })
}

/// One copy of every sample per view subset, with references restricted to
/// the subset. Labels are untouched.
pub fn expand_views(
    samples: &[HopSample],
    view_subsets: &[Vec<String>],
) -> Result<Vec<HopSample>, LabelingError> {
    let restrict = |r: &StateRef, subset: &[String]| StateRef {
        frame: r.frame,
        views: subset
            .iter()
            .map(|v| (v.clone(), r.views[v].clone()))
            .collect(),
    };
    let mut out = Vec::with_capacity(samples.len() * view_subsets.len());
    for s in samples {
        for subset in view_subsets {
            if let Some(v) = subset.iter().find(|v| !s.init_ref.views.contains_key(*v)) {
                return Err(LabelingError::UnknownView {
                    id: s.trajectory_id.clone(),
                    view: v.clone(),
                });
            }
            out.push(HopSample {
                init_ref: restrict(&s.init_ref, subset),
                goal_ref: restrict(&s.goal_ref, subset),
                before_ref: restrict(&s.before_ref, subset),
                after_ref: restrict(&s.after_ref, subset),
                views_used: subset.clone(),
                ..s.clone()
            });
        }
    }
    Ok(out)
}

/// Counts per `(hop_bin, gap_bin)` cell for stratified samples plus the
/// zero-hop channel tally.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinOccupancy {
    pub n_hop_bins: usize,
    pub n_distance_bins: usize,
    pub counts: Vec<u64>,
    pub zero_hop_count: u64,
    pub total: u64,
    pub zero_hop_fraction: f64,
}

impl BinOccupancy {
    pub fn count(&self, hop_bin: usize, gap_bin: usize) -> u64 {
        self.counts[hop_bin * self.n_distance_bins + gap_bin]
    }

    /// Largest over smallest nonzero cell count; `None` without occupied cells.
    pub fn max_min_ratio(&self) -> Option<f64> {
        let occupied = self.counts.iter().filter(|&&c| c > 0);
        let max = occupied.clone().max()?;
        let min = occupied.min()?;
        Some(*max as f64 / *min as f64)
    }

    /// CSV with header `hop_bin,gap_bin,count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "hop_bin,gap_bin,count")?;
        for h in 0..self.n_hop_bins {
            for g in 0..self.n_distance_bins {
                writeln!(w, "{h},{g},{}", self.count(h, g))?;
            }
        }
        Ok(())
    }
}

pub fn bin_occupancy_report(samples: &[HopSample], cfg: &SamplingConfig) -> BinOccupancy {
    let mut counts = vec![0u64; cfg.cells()];
    let mut zero = 0u64;
    for s in samples {
        match s.channel {
            SampleChannel::ZeroHop => zero += 1,
            SampleChannel::Stratified => {
                let h = s.hop_bin.min(cfg.n_hop_bins - 1);
                let g = s.gap_bin.min(cfg.n_distance_bins - 1);
                counts[h * cfg.n_distance_bins + g] += 1;
            }
        }
    }
    let total = samples.len() as u64;
    BinOccupancy {
        n_hop_bins: cfg.n_hop_bins,
        n_distance_bins: cfg.n_distance_bins,
        counts,
        zero_hop_count: zero,
        total,
        zero_hop_fraction: if total == 0 {
            0.0
        } else {
            zero as f64 / total as f64
        },
    }
}

/// Reads a line-delimited JSON trajectory manifest. Blank lines are skipped.
pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<Trajectory>, LabelingError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let traj: Trajectory = serde_json::from_str(&line)
            .map_err(|source| LabelingError::Manifest { line: i + 1, source })?;
        out.push(traj);
    }
    Ok(out)
}

/// One JSON object per line, UTF-8.
pub fn write_samples_jsonl<W: Write>(samples: &[HopSample], mut w: W) -> Result<(), LabelingError> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(frames: usize, keyframes: Vec<usize>) -> Trajectory {
        Trajectory {
            id: "t0".into(),
            task_text: "stack the blocks".into(),
            num_frames: frames,
            views: vec!["front".into(), "wrist".into()],
            keyframes,
            frames_per_view: BTreeMap::new(),
        }
    }

    fn cfg(chunk: usize) -> SamplingConfig {
        SamplingConfig {
            chunk_size: chunk,
            ..SamplingConfig::default()
        }
    }

    #[test]
    fn points_per_segment_examples() {
        assert_eq!(points_per_segment(100, 5, 4), 5);
        assert_eq!(points_per_segment(100, 100, 4), 0);
        assert_eq!(points_per_segment(10, 2, 1), 5);
    }

    #[test]
    fn sample_states_inserts_m_points_per_segment() {
        let t = traj(100, vec![0, 25, 50, 75, 99]);
        let states = sample_states(&t, &cfg(5)).unwrap();
        assert_eq!(states.len(), 5 + 4 * 5);
        assert!(states.windows(2).all(|w| w[0].frame < w[1].frame));
        assert_eq!(states[0].progress.value(), 0.0);
        assert_eq!(states.last().unwrap().progress.value(), 1.0);
        for k in &t.keyframes {
            assert!(states.iter().any(|s| s.frame == *k));
        }
    }

    #[test]
    fn chunk_equal_to_length_keeps_keyframes_only() {
        let t = traj(100, vec![0, 25, 50, 75, 99]);
        let states = sample_states(&t, &cfg(100)).unwrap();
        let frames: Vec<usize> = states.iter().map(|s| s.frame).collect();
        assert_eq!(frames, t.keyframes);
    }

    #[test]
    fn single_segment() {
        let t = traj(10, vec![0, 9]);
        let states = sample_states(&t, &cfg(2)).unwrap();
        assert_eq!(states.len(), 7);
    }

    #[test]
    fn config_errors() {
        let t = traj(10, vec![0, 9]);
        assert!(matches!(
            sample_states(&t, &cfg(11)),
            Err(LabelingError::ChunkTooLarge { .. })
        ));
        let bad = traj(10, vec![0]);
        assert!(sample_states(&bad, &cfg(2)).is_err());
        let bad = traj(10, vec![0, 5, 5, 9]);
        assert!(sample_states(&bad, &cfg(2)).is_err());
        let bad = traj(10, vec![1, 9]);
        assert!(sample_states(&bad, &cfg(2)).is_err());
        assert!(sample_states(&t, &cfg(0)).is_err());
    }

    #[test]
    fn frames_per_view_must_match() {
        let mut t = traj(3, vec![0, 2]);
        t.frames_per_view.insert("front".into(), vec!["a".into(), "b".into()]);
        assert!(t.validate().is_err());
        t.frames_per_view
            .insert("front".into(), vec!["a".into(), "b".into(), "c".into()]);
        assert!(t.validate().is_ok());
        assert_eq!(t.frame_ref("front", 1), "b");
        assert_eq!(t.frame_ref("wrist", 1), "t0/wrist/1");
        t.frames_per_view.insert("top".into(), vec!["x".into(); 3]);
        assert!(t.validate().is_err());
    }

    #[test]
    fn bins_cover_the_range() {
        let c = SamplingConfig::default();
        assert_eq!(c.hop_bin(-1.0), 0);
        assert_eq!(c.hop_bin(1.0), 24);
        assert_eq!(c.hop_bin(0.0), 12);
        assert_eq!(c.gap_bin(1, 101), 0);
        assert_eq!(c.gap_bin(100, 101), 3);
        assert_eq!(c.gap_bin(0, 101), 0);
    }

    #[test]
    fn zero_alpha_means_no_zero_channel() {
        let t = traj(40, vec![0, 13, 26, 39]);
        let c = SamplingConfig {
            chunk_size: 4,
            alpha_zero: 0.0,
            ..SamplingConfig::default()
        };
        let out = generate_hop_samples(&t, &c).unwrap();
        assert!(out.samples.iter().all(|s| s.channel == SampleChannel::Stratified));
        assert!(out.samples.iter().all(|s| s.hop.value() != 0.0));
    }

    #[test]
    fn zero_channel_pairs_share_progress() {
        let t = traj(200, vec![0, 50, 120, 199]);
        let c = SamplingConfig {
            chunk_size: 20,
            alpha_zero: 0.3,
            ..SamplingConfig::default()
        };
        let out = generate_hop_samples(&t, &c).unwrap();
        let zeros: Vec<&HopSample> = out
            .samples
            .iter()
            .filter(|s| s.channel == SampleChannel::ZeroHop)
            .collect();
        assert!(!zeros.is_empty());
        let m = out.diagnostics.sampled_states - 1;
        for s in zeros {
            assert_eq!(s.hop.value(), 0.0);
            assert_eq!(s.hop_percent, 0);
            assert!((s.phi_after.value() - s.phi_before.value()).abs() <= 0.5 / m as f64);
            assert!(s.temporal_gap > 0);
        }
    }

    #[test]
    fn expand_views_cardinality() {
        let t = traj(40, vec![0, 20, 39]);
        let out = generate_hop_samples(&t, &cfg(4)).unwrap();
        let ten: Vec<HopSample> = out.samples.into_iter().take(10).collect();
        let subsets = vec![vec!["front".to_string()], vec!["front".into(), "wrist".into()]];
        let expanded = expand_views(&ten, &subsets).unwrap();
        assert_eq!(expanded.len(), 20);
        for (i, e) in expanded.iter().enumerate() {
            assert_eq!(e.hop, ten[i / 2].hop);
            assert_eq!(e.views_used, subsets[i % 2]);
            assert_eq!(e.before_ref.views.len(), subsets[i % 2].len());
        }
        let one = expand_views(&ten[..1], &[vec!["front".into()], vec!["wrist".into()], vec![]])
            .unwrap();
        assert_eq!(one.len(), 3);
        assert!(expand_views(&ten, &[]).unwrap().is_empty());
        assert!(matches!(
            expand_views(&ten, &[vec!["top".into()]]),
            Err(LabelingError::UnknownView { .. })
        ));
    }

    #[test]
    fn occupancy_of_empty_input() {
        let c = SamplingConfig::default();
        let r = bin_occupancy_report(&[], &c);
        assert_eq!(r.counts.len(), 100);
        assert!(r.counts.iter().all(|&x| x == 0));
        assert_eq!(r.total, 0);
        assert_eq!(r.zero_hop_fraction, 0.0);
        assert_eq!(r.max_min_ratio(), None);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("hop_bin,gap_bin,count\n0,0,0\n"));
        assert_eq!(text.lines().count(), 101);
    }

    #[test]
    fn occupancy_of_uniform_fixture() {
        let t = traj(40, vec![0, 20, 39]);
        let template = generate_hop_samples(&t, &cfg(4)).unwrap().samples[0].clone();
        let c = SamplingConfig::default();
        let mut samples = Vec::new();
        for h in 0..c.n_hop_bins {
            for g in 0..c.n_distance_bins {
                for _ in 0..(3 + (h + g) % 2) {
                    samples.push(HopSample {
                        hop_bin: h,
                        gap_bin: g,
                        ..template.clone()
                    });
                }
            }
        }
        let r = bin_occupancy_report(&samples, &c);
        assert!(r.max_min_ratio().unwrap() <= 1.5);
        assert_eq!(r.zero_hop_count, 0);
    }

    #[test]
    fn manifest_round_trip() {
        let t = traj(5, vec![0, 4]);
        let line = serde_json::to_string(&t).unwrap();
        let text = format!("{line}\n\n{line}\n");
        let parsed = read_manifest(text.as_bytes()).unwrap();
        assert_eq!(parsed, vec![t.clone(), t]);
        let err = read_manifest("{\"id\": 3}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LabelingError::Manifest { line: 1, .. }));
    }
}
