use std::io::Write;

use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use super::solver::RewardVariant;
use super::TestbedError;
use crate::progress::TrackerMode;

pub const REPORT_NOTE: &str =
    "tabular analog: compares reward variants by direction only, not by absolute rollout counts";

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    /// First episode whose trailing window success rate reaches the
    /// threshold, or the episode cap.
    pub episodes_to_threshold: usize,
    pub reached_threshold: bool,
    pub episodes_run: usize,
    /// Success rate over the last window of episodes.
    pub final_success_rate: f64,
    /// Trailing-window success rate after each episode.
    pub curve: Vec<f64>,
    /// Largest gap between the realized discounted shaping sum and its
    /// telescoped boundary over all episodes.
    pub max_telescoping_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub algorithm: String,
    pub reward_variant: RewardVariant,
    pub estimator: String,
    pub tracker_mode: TrackerMode,
    pub note: String,
    pub runs: Vec<SeedRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub algorithm: String,
    pub reward_variant: RewardVariant,
    pub estimator: String,
    pub tracker_mode: TrackerMode,
    pub note: String,
    pub seeds: Vec<u64>,
    pub episodes_to_threshold: Vec<usize>,
    pub median_episodes_to_threshold: f64,
    pub seeds_reaching_threshold: usize,
    pub final_success_rate: f64,
    pub max_telescoping_error: f64,
}

impl ExperimentReport {
    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    pub fn episodes_to_threshold(&self) -> Vec<usize> {
        self.runs.iter().map(|r| r.episodes_to_threshold).collect()
    }

    pub fn median_episodes_to_threshold(&self) -> f64 {
        median(&self.episodes_to_threshold())
    }

    pub fn final_success_rate(&self) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        self.runs.iter().map(|r| r.final_success_rate).sum::<f64>() / self.runs.len() as f64
    }

    pub fn max_telescoping_error(&self) -> f64 {
        self.runs.iter().map(|r| r.max_telescoping_error).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            algorithm: self.algorithm.clone(),
            reward_variant: self.reward_variant,
            estimator: self.estimator.clone(),
            tracker_mode: self.tracker_mode,
            note: self.note.clone(),
            seeds: self.seeds(),
            episodes_to_threshold: self.episodes_to_threshold(),
            median_episodes_to_threshold: self.median_episodes_to_threshold(),
            seeds_reaching_threshold: self.runs.iter().filter(|r| r.reached_threshold).count(),
            final_success_rate: self.final_success_rate(),
            max_telescoping_error: self.max_telescoping_error(),
        }
    }

    /// One row per seed.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TestbedError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "algorithm",
            "reward_variant",
            "estimator",
            "tracker_mode",
            "seed",
            "episodes_to_threshold",
            "reached_threshold",
            "episodes_run",
            "final_success_rate",
        ])?;
        let mode = tracker_mode_str(self.tracker_mode);
        for r in &self.runs {
            out.write_record([
                self.algorithm.as_str(),
                self.reward_variant.as_str(),
                self.estimator.as_str(),
                mode,
                &r.seed.to_string(),
                &r.episodes_to_threshold.to_string(),
                &r.reached_threshold.to_string(),
                &r.episodes_run.to_string(),
                &format!("{:.6}", r.final_success_rate),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Long-format learning curves: `seed,episode,success_rate`.
    pub fn write_curves_csv<W: Write>(&self, w: W) -> Result<(), TestbedError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["seed", "episode", "success_rate"])?;
        for r in &self.runs {
            for (i, v) in r.curve.iter().enumerate() {
                out.write_record([r.seed.to_string(), (i + 1).to_string(), format!("{v:.6}")])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, w: W) -> Result<(), TestbedError> {
        serde_json::to_writer_pretty(w, &self.summary())?;
        Ok(())
    }
}

pub fn tracker_mode_str(mode: TrackerMode) -> &'static str {
    match mode {
        TrackerMode::FusionAverage => "fusion_average",
        TrackerMode::ConsistencyGated => "consistency_gated",
    }
}

pub fn median(values: &[usize]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignTest {
    /// Pairs where the first sample is strictly smaller.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

/// One-sided paired sign test that `a` tends to be smaller than `b`.
/// Ties are dropped.
pub fn sign_test_less(a: &[usize], b: &[usize]) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        match x.cmp(y) {
            std::cmp::Ordering::Less => wins += 1,
            std::cmp::Ordering::Greater => losses += 1,
            std::cmp::Ordering::Equal => ties += 1,
        }
    }
    let n = (wins + losses) as u64;
    let p_value = if n == 0 || wins == 0 {
        1.0
    } else {
        let dist = Binomial::new(0.5, n).expect("valid binomial");
        dist.sf(wins as u64 - 1)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3, 1, 2]), 2.0);
        assert_eq!(median(&[4, 1, 3, 2]), 2.5);
    }

    #[test]
    fn sign_test_matches_binomial_tail() {
        // 15 wins of 20: P(X >= 15) = Σ_{k=15}^{20} C(20,k) / 2^20
        let a: Vec<usize> = (0..20).map(|i| if i < 15 { 1 } else { 3 }).collect();
        let b = vec![2; 20];
        let t = sign_test_less(&a, &b);
        let choose = |n: u64, k: u64| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
        let expected: f64 = (15..=20).map(|k| choose(20, k)).sum::<f64>() / 2f64.powi(20);
        assert_eq!((t.wins, t.losses, t.ties), (15, 5, 0));
        assert!((t.p_value - expected).abs() < 1e-12);
    }

    #[test]
    fn sign_test_all_ties() {
        assert_eq!(sign_test_less(&[1, 2], &[1, 2]).p_value, 1.0);
    }
}
