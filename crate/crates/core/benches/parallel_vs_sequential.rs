use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dopamine_core::estimators::OracleEstimator;
use dopamine_core::testbed::experiments::seed_list;
use dopamine_core::testbed::gridworld::GridWorldSpec;
use dopamine_core::testbed::learning::{run_q_learning, LearnerParams};
use dopamine_core::testbed::solver::RewardVariant;
use dopamine_core::verify::{run_suite, Suite, VerifyConfig};
use dopamine_core::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn property_suites(c: &mut Criterion) {
    let cfg = VerifyConfig {
        boundedness_cases: 20_000,
        telescoping_cases: 2_000,
        mdp_cases: 50,
        ..VerifyConfig::default()
    };
    let mut group = c.benchmark_group("suites");
    group.sample_size(10);
    for suite in [Suite::Boundedness, Suite::Telescoping, Suite::Invariance] {
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(suite.as_str(), name), &exec, |b, &exec| {
                b.iter(|| black_box(run_suite(suite, &cfg, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn q_learning_seeds(c: &mut Criterion) {
    let grid = GridWorldSpec::canonical().build().unwrap();
    let oracle = OracleEstimator::new(grid.mdp.true_potential.clone());
    let params = LearnerParams::default();
    let seeds = seed_list(0, 8);
    let mut group = c.benchmark_group("q_learning_grm_8_seeds");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                black_box(
                    run_q_learning(&grid.mdp, RewardVariant::Grm, &oracle, &params, &seeds, exec)
                        .unwrap(),
                )
            })
        });
    }
    group.finish();
}

criterion_group!(benches, property_suites, q_learning_seeds);
criterion_main!(benches);
