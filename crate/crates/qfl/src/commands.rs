//! The five experiment commands. Each writes its config echo and outputs into one
//! directory and reports whether its check passed.

use std::fs;
use std::path::{Path, PathBuf};

use qfl_core::baselines::CpModel;
use qfl_core::measurement::validate_sampling_lemma;
use qfl_core::qfl::{random_su_blocks, torus_scan, verify_theorem1, BlockSet, QflCircuitSpec, Theorem1Report};
use qfl_core::rng::{derive_seed, substream};
use qfl_core::separation::{
    cp_baseline_gap_demo, derive_measurement_pair, run_discrimination, run_reduction_suite, DiscriminationReport, GapReport, MeasurementPair,
    ReductionSummary,
};
use qfl_core::stateprep::RegisterLayout;
use qfl_core::training::{
    evaluate, generate_task, metrics_from_scores, softmax, train, train_cp_classifier, Metrics, QflModel, SyntheticTask, TrainConfig,
    TrainOutcome,
};
use serde::Serialize;

use crate::config::*;
use crate::error::CliError;
use crate::fourier::{degree_support, SupportReport};
use crate::output::{write_json, write_metrics_csv, write_torus_csv};

/// Frozen input/measurement pair of the separation check.
pub const GOLDEN_PAIR: &str = include_str!("../golden/separation_pair.json");

pub fn golden_pair() -> Result<MeasurementPair, CliError> {
    serde_json::from_str(GOLDEN_PAIR).map_err(|e| CliError::Run(format!("golden pair: {e}")))
}

#[derive(Debug)]
pub struct Outcome {
    pub pass: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Runs `config`, writing `config.json` and the command's outputs into `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    if config.shots != Shots::Exact && !matches!(config.command, CommandConfig::SampleBound(_) | CommandConfig::TrainSynthetic(_)) {
        return Err(CliError::Usage(format!("`{}` is exact-only; drop --shots", config.command.name())));
    }
    fs::create_dir_all(out)?;
    let echo = out.join("config.json");
    fs::write(&echo, config.to_json())?;
    let mut outcome = match &config.command {
        CommandConfig::VerifyExpressivity(c) => verify_expressivity(config.seed, c, out),
        CommandConfig::TorusScan(c) => cmd_torus_scan(config.seed, c, out),
        CommandConfig::Separation(c) => separation(config.seed, c, out),
        CommandConfig::SampleBound(c) => sample_bound(config.seed, config.shots, c, out),
        CommandConfig::TrainSynthetic(c) => train_synthetic(config.seed, config.shots, c, out),
    }?;
    outcome.files.insert(0, echo);
    Ok(outcome)
}

#[derive(Serialize)]
struct ExpressivityReport {
    seed: u64,
    negative_control: bool,
    runs: Vec<Theorem1Report>,
    all_pass: bool,
}

fn verify_expressivity(seed: u64, c: &ExpressivityConfig, out: &Path) -> Result<Outcome, CliError> {
    if c.trials == 0 || c.num_features.is_empty() || c.depths.is_empty() {
        return Err(CliError::Usage("need at least one feature count, depth and trial".into()));
    }
    let mut runs = Vec::new();
    for &md in &c.num_features {
        for &p in &c.depths {
            let s = derive_seed(seed, &format!("expressivity/{md}/{p}"));
            runs.push(verify_theorem1(md, p, c.trials, s, c.negative_control)?);
        }
    }
    let all_pass = runs.iter().all(|r| r.all_pass);
    let failed: usize = runs.iter().map(|r| r.trials.iter().filter(|t| !t.pass).count()).sum();
    let path = out.join("expressivity.json");
    write_json(&path, &ExpressivityReport { seed, negative_control: c.negative_control, runs, all_pass })?;
    Ok(Outcome { pass: all_pass, summary: format!("{failed} failing trials"), files: vec![path] })
}

#[derive(Serialize)]
struct TorusReport {
    seed: u64,
    entry: [usize; 2],
    resolution: usize,
    files: Vec<String>,
    support: Vec<SupportReport>,
    pass: bool,
}

/// Random SU blocks of depth `p` for the torus scan.
pub fn torus_spec(seed: u64, num_features: usize, depth: usize) -> Result<QflCircuitSpec, CliError> {
    let layout = RegisterLayout::for_features(num_features)?;
    let mut rng = substream(derive_seed(seed, &format!("torus-scan/{depth}")), "blocks");
    let blocks = random_su_blocks(&layout, depth, &mut rng)?;
    Ok(QflCircuitSpec::new(depth, layout, BlockSet::Fixed { unitaries: blocks }, true)?)
}

pub fn torus_file_name(depth: usize) -> String {
    format!("torus_P{depth}.csv")
}

fn cmd_torus_scan(seed: u64, c: &TorusConfig, out: &Path) -> Result<Outcome, CliError> {
    if c.num_features != 2 {
        return Err(CliError::Usage(format!("torus scan needs exactly two features, got {}", c.num_features)));
    }
    if c.depths.is_empty() {
        return Err(CliError::Usage("no depths requested".into()));
    }
    let mut files = Vec::new();
    let mut support = Vec::new();
    for &p in &c.depths {
        let spec = torus_spec(seed, c.num_features, p)?;
        let grid = torus_scan(&spec, (c.entry[0], c.entry[1]), c.resolution)?;
        let path = out.join(torus_file_name(p));
        write_torus_csv(&path, &grid)?;
        support.push(degree_support(&grid, c.resolution, p).map_err(CliError::Usage)?);
        files.push(path);
    }
    let pass = support.iter().all(|s| s.pass);
    let worst = support.iter().map(|s| s.outside_fraction).fold(0.0, f64::max);
    let names = c.depths.iter().map(|&p| torus_file_name(p)).collect();
    let path = out.join("torus_scan.json");
    write_json(&path, &TorusReport { seed, entry: c.entry, resolution: c.resolution, files: names, support, pass })?;
    files.push(path);
    Ok(Outcome { pass, summary: format!("largest off-support mass fraction {worst:e}"), files })
}

#[derive(Serialize)]
struct SeparationReport {
    seed: u64,
    pair: MeasurementPair,
    pair_matches_search: bool,
    discrimination: DiscriminationReport,
    reduction: ReductionSummary,
    cp_gap: GapReport,
    pass: bool,
}

fn separation(seed: u64, c: &SeparationConfig, out: &Path) -> Result<Outcome, CliError> {
    let pair = golden_pair()?;
    let pair_matches_search = derive_measurement_pair()? == pair;
    let discrimination = run_discrimination(&pair, c.class1_samples)?;
    let reduction = run_reduction_suite(c.reduction_trials, derive_seed(seed, "reduction"))?;
    let gap_seeds: Vec<u64> = c.gap.seeds.iter().map(|s| derive_seed(seed, &format!("cp-gap/{s}"))).collect();
    let cp_gap = cp_baseline_gap_demo(&c.gap.ranks, c.gap.steps, c.gap.learning_rate, &gap_seeds, c.class1_samples)?;
    let pass = pair_matches_search && discrimination.pass && reduction.pass;
    let summary = format!(
        "max error {:e}, {} joint queries, reduction deviation {:e}",
        discrimination.max_error, discrimination.queries.joint_oracles, reduction.max_block_deviation
    );
    let path = out.join("separation.json");
    write_json(&path, &SeparationReport { seed, pair, pair_matches_search, discrimination, reduction, cp_gap, pass })?;
    Ok(Outcome { pass, summary, files: vec![path] })
}

fn sample_bound(seed: u64, shots: Shots, c: &SampleBoundConfig, out: &Path) -> Result<Outcome, CliError> {
    let report = validate_sampling_lemma(c.epsilon, c.delta, c.trials, seed, shots.count())?;
    let path = out.join("sample_bound.json");
    write_json(&path, &report)?;
    Ok(Outcome {
        pass: report.pass,
        summary: format!("{} shots, {:.3} within epsilon (need {:.3})", report.shots, report.fraction, report.threshold),
        files: vec![path],
    })
}

#[derive(Serialize)]
struct ModelSummary {
    parameter_count: usize,
    initial_validation_loss: f64,
    best_validation_loss: f64,
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
    test: Metrics,
}

impl ModelSummary {
    fn new<M>(parameter_count: usize, o: &TrainOutcome<M>, test: Metrics) -> Self {
        Self {
            parameter_count,
            initial_validation_loss: o.initial_validation_loss,
            best_validation_loss: o.best_validation_loss,
            best_epoch: o.best_epoch,
            epochs_run: o.epochs_run,
            stopped_early: o.stopped_early,
            test,
        }
    }
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    task_seed: u64,
    positive_fraction: f64,
    qfl: ModelSummary,
    cp: ModelSummary,
    pass: bool,
}

fn cp_test_metrics(model: &CpModel, task: &SyntheticTask) -> Result<Metrics, CliError> {
    let test = task.splits().test;
    let scores: Vec<f64> = test.clone().map(|i| Ok(softmax(&model.predict(&task.features[i])?)[1])).collect::<Result<_, qfl_core::Error>>()?;
    Ok(metrics_from_scores(&scores, &task.labels[test]))
}

fn train_synthetic(seed: u64, shots: Shots, c: &TrainSyntheticConfig, out: &Path) -> Result<Outcome, CliError> {
    let t = c.task;
    let task = generate_task(t.num_modalities, t.feature_dim, t.degree, t.samples, seed)?;
    let model = QflModel::init(task.num_features(), &c.model, seed)?;
    let cfg = TrainConfig { seed, shots: shots.count(), ..c.train.clone() };

    let qfl = train(&task, &model, &cfg)?;
    let qfl_test = evaluate(&qfl.model, &task, task.splits().test)?;
    let cp = train_cp_classifier(&task, c.cp.rank, c.cp.granularity, &cfg)?;
    let cp_test = cp_test_metrics(&cp.model, &task)?;

    let metrics = out.join("metrics.csv");
    write_metrics_csv(&metrics, &qfl.history)?;
    let cp_metrics = out.join("cp_metrics.csv");
    write_metrics_csv(&cp_metrics, &cp.history)?;

    let pass = qfl.best_validation_loss < qfl.initial_validation_loss;
    let summary = format!(
        "validation loss {:.4} -> {:.4} (epoch {}), {} vs {} parameters",
        qfl.initial_validation_loss,
        qfl.best_validation_loss,
        qfl.best_epoch,
        model.parameter_count(),
        cp.model.parameter_count()
    );
    let report = TrainSummary {
        seed,
        task_seed: task.seed,
        positive_fraction: task.positive_fraction(),
        qfl: ModelSummary::new(model.parameter_count(), &qfl, qfl_test),
        cp: ModelSummary::new(cp.model.parameter_count(), &cp, cp_test),
        pass,
    };
    let path = out.join("summary.json");
    write_json(&path, &report)?;
    Ok(Outcome { pass, summary, files: vec![metrics, cp_metrics, path] })
}
