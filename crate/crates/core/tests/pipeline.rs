use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use dopamine_core::estimators::OracleEstimator;
use dopamine_core::labeling::{generate_hop_samples, SampleChannel, SamplingConfig, Trajectory};
use dopamine_core::testbed::experiments::seed_list;
use dopamine_core::testbed::gridworld::GridWorldSpec;
use dopamine_core::testbed::learning::{run_q_learning, LearnerParams};
use dopamine_core::testbed::solver::RewardVariant;
use dopamine_core::verify::{run_suite, Suite, VerifyConfig};
use dopamine_core::Execution;

fn reference_hop(p: f64, q: f64) -> f64 {
    match (q >= p, p) {
        (true, p) if p >= 1.0 => 0.0,
        (true, p) => (q - p) / (1.0 - p),
        (false, p) if p <= 0.0 => 0.0,
        (false, p) => (q - p) / p,
    }
}

fn trajectory(num_frames: usize, cuts: &[usize]) -> Trajectory {
    let mut keyframes: BTreeSet<usize> = cuts.iter().map(|c| 1 + c % (num_frames - 2)).collect();
    keyframes.insert(0);
    keyframes.insert(num_frames - 1);
    Trajectory {
        id: format!("p-{num_frames}-{}", cuts.len()),
        task_text: "t".into(),
        num_frames,
        views: vec!["cam".into()],
        keyframes: keyframes.into_iter().collect(),
        frames_per_view: BTreeMap::new(),
    }
}

/// Every ordered pair of sampled frames with its label.
fn enumerate_pairs(frames: &[usize]) -> BTreeMap<(usize, usize), f64> {
    let m = (frames.len() - 1) as f64;
    let mut out = BTreeMap::new();
    for (i, &a) in frames.iter().enumerate() {
        for (j, &b) in frames.iter().enumerate() {
            if i != j {
                out.insert((a, b), reference_hop(i as f64 / m, j as f64 / m));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn stratified_labels_match_enumeration(
        num_frames in 4usize..30,
        cuts in proptest::collection::vec(0usize..100, 0..3),
        chunk_pick in 0usize..100,
        seed in any::<u64>(),
    ) {
        let traj = trajectory(num_frames, &cuts);
        let chunk = 1 + chunk_pick % num_frames;
        let cfg = SamplingConfig { chunk_size: chunk, samples_per_cell: 2, rng_seed: seed, ..SamplingConfig::default() };
        let out = generate_hop_samples(&traj, &cfg).unwrap();
        prop_assume!(out.diagnostics.sampled_states <= 12);

        let mut frames: BTreeSet<usize> = BTreeSet::new();
        for s in out.samples.iter().filter(|s| s.channel == SampleChannel::Stratified) {
            frames.insert(s.before_ref.frame);
            frames.insert(s.after_ref.frame);
        }
        // sampled frames, rebuilt from the uniform-per-segment rule
        let segments = traj.keyframes.len() - 1;
        let m = num_frames / chunk / segments;
        let mut sampled = BTreeSet::new();
        for w in traj.keyframes.windows(2) {
            sampled.insert(w[0]);
            sampled.insert(w[1]);
            for k in 1..=m {
                let f = (w[0] as f64 + (k * (w[1] - w[0])) as f64 / (m + 1) as f64).round() as usize;
                if f > w[0] && f < w[1] {
                    sampled.insert(f);
                }
            }
        }
        let sampled: Vec<usize> = sampled.into_iter().collect();
        prop_assert_eq!(sampled.len(), out.diagnostics.sampled_states);
        prop_assert!(frames.iter().all(|f| sampled.contains(f)));
        let pairs = enumerate_pairs(&sampled);
        for s in out.samples.iter().filter(|s| s.channel == SampleChannel::Stratified) {
            let want = pairs[&(s.before_ref.frame, s.after_ref.frame)];
            prop_assert!((s.hop.value() - want).abs() <= 1e-12);
        }
        // no duplicated pairs
        let keys: BTreeSet<_> = out.samples.iter()
            .filter(|s| s.channel == SampleChannel::Stratified)
            .map(|s| (s.before_ref.frame, s.after_ref.frame))
            .collect();
        prop_assert_eq!(keys.len(), out.samples.iter().filter(|s| s.channel == SampleChannel::Stratified).count());
    }
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let grid = GridWorldSpec::canonical().build().unwrap();
    let oracle = OracleEstimator::new(grid.mdp.true_potential.clone());
    let params = LearnerParams {
        episode_cap: 200,
        ..LearnerParams::default()
    };
    let seeds = seed_list(9, 6);
    for variant in [RewardVariant::Gold, RewardVariant::Grm] {
        let a = run_q_learning(&grid.mdp, variant, &oracle, &params, &seeds, Execution::Sequential).unwrap();
        let b = run_q_learning(&grid.mdp, variant, &oracle, &params, &seeds, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
    let cfg = VerifyConfig {
        boundedness_cases: 3000,
        telescoping_cases: 300,
        mdp_cases: 10,
        ..VerifyConfig::default()
    };
    for s in Suite::ALL {
        let a = run_suite(s, &cfg, Execution::Sequential).unwrap();
        let b = run_suite(s, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b, "{}", s.as_str());
    }
}

#[test]
fn shaped_learning_keeps_telescoping_error_small() {
    let grid = GridWorldSpec::canonical().build().unwrap();
    let oracle = OracleEstimator::new(grid.mdp.true_potential.clone());
    let report = run_q_learning(
        &grid.mdp,
        RewardVariant::Grm,
        &oracle,
        &LearnerParams::default(),
        &seed_list(1, 4),
        Execution::Parallel,
    )
    .unwrap();
    assert!(report.max_telescoping_error() < 1e-9, "{}", report.max_telescoping_error());
}
