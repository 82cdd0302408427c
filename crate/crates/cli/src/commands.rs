//! Subcommand bodies. Each resolves its settings, runs, writes outputs and
//! then the manifest.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use dopamine_core::estimators::{HopEstimator, NoisyEstimator, OracleEstimator};
use dopamine_core::evaluation::{
    classification_report, evaluate_estimator_voc, judge_outcome, judgment_fixtures, AnchoredScorer,
    AntiOracle, ChronologicalOracle, FrameScorer, RandomScorer, StateMapping, VocConfig, VocDensity,
    DEFAULT_XI,
};
use dopamine_core::exec::with_jobs;
use dopamine_core::labeling::{
    bin_occupancy_report, expand_views, generate_hop_samples, read_manifest, write_samples_jsonl,
    SamplingConfig, Trajectory,
};
use dopamine_core::progress::{ConsistencyConfig, TrackerMode};
use dopamine_core::shaping::ShapingConfig;
use dopamine_core::testbed::experiments::{one_shot_adaptation, seed_list, GatingSetup};
use dopamine_core::testbed::report::{sign_test_less, ExperimentReport};
use dopamine_core::testbed::{
    demonstrate_semantic_trap, run_q_learning, run_reinforce, GridWorld, GridWorldSpec, LearnerParams,
    RewardVariant, ShapingMutation, TrapMdpSpec,
};
use dopamine_core::testbed::trap::{ADVANCE, HONEYPOT, STAY};
use dopamine_core::verify::{run_suite, Suite, VerifyConfig};
use dopamine_core::Execution;

use crate::config::{pick, resolve_seed, split_list, FileConfig, RunManifest};
use crate::error::CliError;
use crate::{Cli, Command, EvalArgs, LabelArgs, TrainArgs, TrapArgs, VerifyArgs};

pub struct Context {
    pub subcommand: &'static str,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
}

impl Context {
    pub fn new(cli: &Cli, file: &FileConfig) -> Result<Self, CliError> {
        let subcommand = match cli.command {
            Command::Label(_) => "label",
            Command::Verify(_) => "verify",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Trap(_) => "trap",
        };
        let jobs = cli.jobs.or(file.jobs);
        if jobs == Some(0) {
            return Err(CliError::Config("jobs must be positive".into()));
        }
        Ok(Self {
            subcommand,
            config_path: cli.config.clone(),
            seed: resolve_seed(cli.seed, file.seed)?,
            out_dir: pick(cli.out.clone(), file.out.clone(), PathBuf::from("dopamine-out")),
            jobs,
        })
    }

    fn exec(&self) -> Execution {
        if self.jobs == Some(1) {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn prepare_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out_dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| CliError::io(&path, e))
    }

    fn finish(&self, settings: &serde_json::Value) -> Result<(), CliError> {
        RunManifest::new(
            self.subcommand,
            self.config_path.as_deref(),
            self.seed,
            &self.out_dir,
            settings,
        )?
        .write()
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>, CliError> {
    let f = File::open(path).map_err(io_err(path))?;
    Ok(read_manifest(BufReader::new(f))?)
}

fn parse_subsets(s: &str) -> Vec<Vec<String>> {
    s.split(';').map(split_list).filter(|v| !v.is_empty()).collect()
}

pub fn label(ctx: &Context, a: &LabelArgs, f: &FileConfig) -> Result<(), CliError> {
    let input = a
        .input
        .clone()
        .or(f.input.clone())
        .ok_or_else(|| CliError::Config("label needs --input (a trajectory manifest)".into()))?;
    let d = SamplingConfig::default();
    let cfg = SamplingConfig {
        chunk_size: pick(a.chunk_size, f.chunk_size, d.chunk_size),
        n_hop_bins: pick(a.n_hop_bins, f.n_hop_bins, d.n_hop_bins),
        n_distance_bins: pick(a.n_distance_bins, f.n_distance_bins, d.n_distance_bins),
        alpha_zero: pick(a.alpha_zero, f.alpha_zero, d.alpha_zero),
        zero_hop_epsilon: a.zero_hop_epsilon.or(f.zero_hop_epsilon),
        samples_per_cell: pick(a.samples_per_cell, f.samples_per_cell, d.samples_per_cell),
        rng_seed: ctx.seed,
    };
    cfg.validate()?;
    let subsets = a.view_subsets.clone().or(f.view_subsets.clone()).map(|s| parse_subsets(&s));

    let trajectories = load_trajectories(&input)?;
    let labeled = with_jobs(ctx.jobs, || {
        ctx.exec()
            .map(&trajectories, |t| generate_hop_samples(t, &cfg))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut samples = Vec::new();
    let mut diagnostics = Vec::new();
    for l in labeled {
        samples.extend(l.samples);
        diagnostics.push(l.diagnostics);
    }
    let occupancy = bin_occupancy_report(&samples, &cfg);
    if let Some(subsets) = &subsets {
        samples = expand_views(&samples, subsets)?;
    }

    ctx.prepare_out()?;
    let mut w = ctx.create("samples.jsonl")?;
    write_samples_jsonl(&samples, &mut w)?;
    w.flush().map_err(io_err(&ctx.out_dir))?;
    let mut w = ctx.create("bin_occupancy.csv")?;
    occupancy.write_csv(&mut w).map_err(io_err(&ctx.out_dir))?;
    w.flush().map_err(io_err(&ctx.out_dir))?;
    let w = ctx.create("diagnostics.json")?;
    serde_json::to_writer_pretty(w, &diagnostics).map_err(|e| CliError::Io(e.to_string()))?;

    println!(
        "labeled {} trajectories: {} samples ({} zero-hop, {:.2}%)",
        trajectories.len(),
        samples.len(),
        occupancy.zero_hop_count,
        100.0 * occupancy.zero_hop_fraction
    );
    ctx.finish(&json!({
        "input": input,
        "sampling": cfg,
        "view_subsets": subsets,
    }))
}

fn parse_mutation(s: &str) -> Result<ShapingMutation, CliError> {
    match s {
        "none" => Ok(ShapingMutation::None),
        "naive" | "naive_difference" => Ok(ShapingMutation::NaiveDifference),
        other => Err(CliError::Config(format!("unknown mutation `{other}` (none, naive)"))),
    }
}

pub fn verify(ctx: &Context, a: &VerifyArgs, f: &FileConfig) -> Result<(), CliError> {
    let suites: Vec<Suite> = match a.suite.clone().or(f.suite.clone()) {
        Some(s) => split_list(&s)
            .iter()
            .map(|x| x.parse().map_err(CliError::Config))
            .collect::<Result<_, _>>()?,
        None => Suite::ALL.to_vec(),
    };
    let d = VerifyConfig::default();
    let cfg = VerifyConfig {
        seed: ctx.seed,
        boundedness_cases: pick(a.boundedness_cases, f.boundedness_cases, d.boundedness_cases),
        telescoping_cases: pick(a.telescoping_cases, f.telescoping_cases, d.telescoping_cases),
        mdp_cases: pick(a.mdp_cases, f.mdp_cases, d.mdp_cases),
        shaping_gamma: pick(a.gamma, f.gamma, d.shaping_gamma),
        mutation: parse_mutation(&pick(a.mutation.clone(), f.mutation.clone(), "none".into()))?,
    };
    let results = with_jobs(ctx.jobs, || {
        suites
            .iter()
            .map(|&s| run_suite(s, &cfg, ctx.exec()))
            .collect::<Result<Vec<_>, _>>()
    })?;

    ctx.prepare_out()?;
    let w = ctx.create("verify.json")?;
    serde_json::to_writer_pretty(w, &results).map_err(|e| CliError::Io(e.to_string()))?;
    let mut failed = Vec::new();
    for r in &results {
        println!(
            "{:<12} {}  cases {:>6}  failures {:>4}  {}",
            r.suite.as_str(),
            if r.passed() { "PASS" } else { "FAIL" },
            r.cases,
            r.failures,
            r.detail
        );
        if !r.passed() {
            failed.push(r.suite.as_str());
        }
    }
    ctx.finish(&json!({ "suites": suites, "verify": cfg }))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::PropertyFailure(format!("failed suites: {}", failed.join(", "))))
    }
}

fn build_estimator(
    kind: &str,
    grid: &GridWorld,
    sigma: f64,
    seed: u64,
) -> Result<Box<dyn HopEstimator>, CliError> {
    Ok(match kind {
        "oracle" => Box::new(OracleEstimator::new(grid.mdp.true_potential.clone())),
        "noisy" => {
            let setup = GatingSetup::canonical(grid, sigma)?;
            Box::new(NoisyEstimator::new(grid.mdp.true_potential.clone(), setup.noise)?)
        }
        "fitted" => {
            let fit = one_shot_adaptation(grid, seed)?;
            println!(
                "one-shot fit: held-out hop MSE {:.4} (random-feature baseline {:.4})",
                fit.fitted_mse, fit.baseline_mse
            );
            Box::new(fit.fitted.with_coords(grid.coords.clone()))
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown estimator `{other}` (oracle, noisy, fitted)"
            )))
        }
    })
}

pub fn train(ctx: &Context, a: &TrainArgs, f: &FileConfig) -> Result<(), CliError> {
    let variants: Vec<RewardVariant> = split_list(&pick(a.variant.clone(), f.variant.clone(), "gold,grm".into()))
        .iter()
        .map(|v| v.parse::<RewardVariant>())
        .collect::<Result<_, _>>()?;
    if variants.is_empty() {
        return Err(CliError::Config("no reward variant given".into()));
    }
    let algorithm = pick(a.algorithm.clone(), f.algorithm.clone(), "q_learning".into());
    if !matches!(algorithm.as_str(), "q_learning" | "reinforce") {
        return Err(CliError::Config(format!("unknown algorithm `{algorithm}` (q_learning, reinforce)")));
    }
    let n_seeds = pick(a.seeds, f.seeds, 20);
    if n_seeds == 0 {
        return Err(CliError::Config("seeds must be positive".into()));
    }
    let estimator_kind = pick(a.estimator.clone(), f.estimator.clone(), "oracle".into());
    let sigma = pick(a.sigma, f.sigma, 0.05);
    let tracker_mode = match pick(a.tracker.clone(), f.tracker.clone(), "gated".into()).as_str() {
        "gated" => TrackerMode::ConsistencyGated,
        "average" => TrackerMode::FusionAverage,
        other => return Err(CliError::Config(format!("unknown tracker `{other}` (gated, average)"))),
    };
    let d = LearnerParams::default();
    let shaping = ShapingConfig::from_gamma(
        pick(a.gamma, f.gamma, d.shaping.gamma()),
        pick(a.delta, f.delta, d.shaping.completion_margin_delta()),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let consistency = ConsistencyConfig::new(
        pick(a.alpha, f.alpha, d.consistency.sensitivity_alpha),
        d.consistency.epsilon_stability,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let params = LearnerParams {
        learning_rate: pick(a.learning_rate, f.learning_rate, d.learning_rate),
        epsilon: pick(a.epsilon, f.epsilon, d.epsilon),
        episode_cap: pick(a.episode_cap, f.episode_cap, d.episode_cap),
        shaping,
        consistency,
        tracker_mode,
        ..d
    };
    params.validate()?;

    let grid = GridWorldSpec::canonical().build()?;
    let estimator = build_estimator(&estimator_kind, &grid, sigma, ctx.seed)?;
    let seeds = seed_list(ctx.seed, n_seeds);
    let reports: Vec<ExperimentReport> = with_jobs(ctx.jobs, || {
        variants
            .iter()
            .map(|&v| match algorithm.as_str() {
                "reinforce" => run_reinforce(&grid.mdp, v, estimator.as_ref(), &params, &seeds, ctx.exec()),
                _ => run_q_learning(&grid.mdp, v, estimator.as_ref(), &params, &seeds, ctx.exec()),
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    ctx.prepare_out()?;
    for r in &reports {
        let name = r.reward_variant.as_str();
        let mut w = ctx.create(&format!("{name}_report.csv"))?;
        r.write_csv(&mut w)?;
        let mut w = ctx.create(&format!("{name}_curves.csv"))?;
        r.write_curves_csv(&mut w)?;
        println!(
            "{:<6} median episodes to threshold {:>7.1}  reached {}/{}",
            name,
            r.median_episodes_to_threshold(),
            r.runs.iter().filter(|x| x.reached_threshold).count(),
            r.runs.len()
        );
    }
    let gold = reports.iter().find(|r| r.reward_variant == RewardVariant::Gold);
    let grm = reports.iter().find(|r| r.reward_variant == RewardVariant::Grm);
    let sign_test = match (gold, grm) {
        (Some(g), Some(s)) => {
            let t = sign_test_less(&s.episodes_to_threshold(), &g.episodes_to_threshold());
            println!(
                "grm vs gold sign test: {} wins, {} losses, {} ties, p = {:.3e}",
                t.wins, t.losses, t.ties, t.p_value
            );
            Some(t)
        }
        _ => None,
    };
    let w = ctx.create("summary.json")?;
    serde_json::to_writer_pretty(
        w,
        &json!({
            "reports": reports.iter().map(ExperimentReport::summary).collect::<Vec<_>>(),
            "grm_vs_gold": sign_test,
        }),
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    ctx.finish(&json!({
        "variants": variants,
        "algorithm": algorithm,
        "seeds": n_seeds,
        "estimator": estimator_kind,
        "sigma": sigma,
        "params": params,
    }))
}

pub fn eval(ctx: &Context, a: &EvalArgs, f: &FileConfig) -> Result<(), CliError> {
    let densities: Vec<VocDensity> = split_list(&pick(a.density.clone(), f.density.clone(), "sparse,medium,dense".into()))
        .iter()
        .map(|d| d.parse::<VocDensity>().map_err(|e| CliError::Config(e.to_string())))
        .collect::<Result<_, _>>()?;
    let xi = pick(a.xi, f.xi, DEFAULT_XI);
    if !(0.0..=1.0).contains(&xi) {
        return Err(CliError::Config(format!("xi must be in [0, 1], got {xi}")));
    }
    let scorer_name = pick(a.scorer.clone(), f.scorer.clone(), "oracle".into());
    let input = a.input.clone().or(f.input.clone());

    let grid = GridWorldSpec::canonical().build()?;
    let trajectories = match &input {
        Some(p) => load_trajectories(p)?,
        None => vec![grid.demonstration("grid-demo")?],
    };
    let oracle = OracleEstimator::new(grid.mdp.true_potential.clone());
    let grid_oracle = AnchoredScorer {
        estimator: &oracle,
        mapping: StateMapping::FirstViewRef,
    };
    let scorer: &dyn FrameScorer = match scorer_name.as_str() {
        "oracle" => &ChronologicalOracle,
        "anti_oracle" => &AntiOracle,
        "random" => &RandomScorer,
        "grid_oracle" => &grid_oracle,
        other => {
            return Err(CliError::Config(format!(
                "unknown scorer `{other}` (oracle, anti_oracle, random, grid_oracle)"
            )))
        }
    };
    let reports = with_jobs(ctx.jobs, || {
        densities
            .iter()
            .map(|&d| {
                let cfg = VocConfig {
                    sampling: d,
                    shuffle_seed: ctx.seed,
                };
                evaluate_estimator_voc(scorer, &trajectories, &cfg, ctx.exec())
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let fixtures = judgment_fixtures(ctx.seed);
    let preds = fixtures
        .iter()
        .map(|c| judge_outcome(&c.curve, xi))
        .collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<_> = fixtures.iter().map(|c| c.label).collect();
    let confusion = classification_report(&preds, &truth)?;

    ctx.prepare_out()?;
    let mut w = ctx.create("voc.csv")?;
    for (i, r) in reports.iter().enumerate() {
        r.write_csv(&mut w, i == 0)?;
    }
    w.flush().map_err(io_err(&ctx.out_dir))?;
    let mut w = ctx.create("voc_summary.csv")?;
    writeln!(w, "scorer,density,mean_voc,trajectories,skipped").map_err(io_err(&ctx.out_dir))?;
    for r in &reports {
        let skipped = r.rows.iter().filter(|x| x.skipped).count();
        writeln!(w, "{},{},{:.6},{},{}", r.scorer, r.density.as_str(), r.mean_voc, r.rows.len(), skipped)
            .map_err(io_err(&ctx.out_dir))?;
        println!(
            "voc {:<7} {:<12} mean {:>8.4} over {} trajectories",
            r.density.as_str(),
            r.scorer,
            r.mean_voc,
            r.rows.len() - skipped
        );
    }
    w.flush().map_err(io_err(&ctx.out_dir))?;
    let mut w = ctx.create("confusion.csv")?;
    confusion.write_csv(&mut w)?;
    let mut w = ctx.create("judgments.csv")?;
    writeln!(w, "id,truth,predicted").map_err(io_err(&ctx.out_dir))?;
    for (c, p) in fixtures.iter().zip(&preds) {
        writeln!(w, "{},{},{}", c.id, c.label.as_str(), p.as_str()).map_err(io_err(&ctx.out_dir))?;
    }
    w.flush().map_err(io_err(&ctx.out_dir))?;
    println!(
        "judgment accuracy {}/{} = {:.4} (xi = {xi})",
        confusion.correct, confusion.total, confusion.accuracy
    );
    ctx.finish(&json!({
        "input": input,
        "densities": densities,
        "xi": xi,
        "scorer": scorer_name,
    }))
}

pub fn trap(ctx: &Context, a: &TrapArgs, f: &FileConfig) -> Result<(), CliError> {
    let d = TrapMdpSpec::default();
    let spec = TrapMdpSpec {
        honeypot_potential: pick(a.honeypot_potential, f.honeypot_potential, d.honeypot_potential),
        path_risk: pick(a.path_risk, f.path_risk, d.path_risk),
        ..d
    };
    let gamma = pick(a.gamma, f.gamma, ShapingConfig::DEFAULT_GAMMA);
    let report = demonstrate_semantic_trap(&spec, gamma)?;

    ctx.prepare_out()?;
    let w = ctx.create("trap.json")?;
    serde_json::to_writer_pretty(w, &report).map_err(|e| CliError::Io(e.to_string()))?;
    for (name, o) in [("naive", &report.naive), ("grm", &report.grm)] {
        println!(
            "{name:<6} honeypot Q(advance) {:>8.4}  Q(stay) {:>8.4}  greedy {:?}  goal probability {:.3}",
            o.q.q(HONEYPOT, ADVANCE),
            o.q.q(HONEYPOT, STAY),
            o.honeypot_greedy, o.goal_probability
        );
    }
    println!(
        "{}",
        if report.separated {
            "naive reward stagnates at the honeypot; shaped reward reaches the goal"
        } else {
            "no separation for these parameters"
        }
    );
    ctx.finish(&json!({ "trap": spec, "gamma": gamma }))
}
