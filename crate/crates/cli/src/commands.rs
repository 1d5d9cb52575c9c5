use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ipsi::dataset::{load_csv, CsvSchema};
use ipsi::estimators::{estimate_all, EstimatorConfig};
use ipsi::inference::{effect_curve, Multipliers};
use ipsi::intervention::{log_delta_grid, oracle_curve, simulate_dataset};
use ipsi::learners::LearnerSpec;
use ipsi::rng::{derive_seed, Stream};
use ipsi::simulation::{
    dgp_by_name, read_records_csv, run_replication, summarize, truth_curve, write_records_csv, write_truth_csv,
    NuisanceMode, SimConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{EstimateArgs, GenerateArgs, OracleArgs, SimulateArgs};
use crate::error::CliError;

const RUN_FILE: &str = "run.json";

#[derive(Debug, Serialize, Deserialize)]
struct InputChecksum {
    path: String,
    sha256: String,
}

/// Effective configuration written next to every run's outputs.
#[derive(Debug, Serialize, Deserialize)]
struct RunEcho<S> {
    tool: String,
    version: String,
    command: String,
    seed: u64,
    settings: S,
    inputs: Vec<InputChecksum>,
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io("cannot create", path, e))
}

fn prepare_outdir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io("cannot create directory", dir, e))
}

fn checksum(path: &Path) -> Result<InputChecksum, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io("cannot read", path, e))?;
    Ok(InputChecksum { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

fn write_echo<S: Serialize>(
    dir: &Path,
    command: &str,
    seed: u64,
    settings: S,
    inputs: Vec<InputChecksum>,
) -> Result<(), CliError> {
    let echo = RunEcho {
        tool: "ipsi".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed,
        settings,
        inputs,
    };
    let path = dir.join(RUN_FILE);
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &echo).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io("cannot write", &path, e))
}

pub fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn reference_range() -> (f64, f64) {
    ((-2.3f64).exp(), 2.3f64.exp())
}

#[derive(Debug, Serialize)]
struct EstimateSettings {
    input: PathBuf,
    delta_min: f64,
    delta_max: f64,
    delta_points: usize,
    nsplits: usize,
    learner_prop: String,
    learner_out: String,
    alpha: f64,
    bootstrap_reps: usize,
    seed: u64,
    multipliers: String,
    max_lag: Option<usize>,
    id_col: String,
    time_col: String,
    treatment_col: String,
    outcome_col: String,
    covariates: Option<Vec<String>>,
    time_varying_outcome: bool,
    write_influence: bool,
}

fn parse_multipliers(name: &str) -> Result<Multipliers, CliError> {
    match name {
        "rademacher" => Ok(Multipliers::Rademacher),
        "gaussian" => Ok(Multipliers::Gaussian),
        other => Err(CliError::Usage(format!("unknown multipliers `{other}` (rademacher or gaussian)"))),
    }
}

pub fn estimate(args: EstimateArgs) -> Result<(), CliError> {
    let input = required(args.input, "input")?;
    let outdir = required(args.outdir, "outdir")?;
    let defaults = CsvSchema::default();
    let learner_prop: LearnerSpec = args.learner_prop.as_deref().unwrap_or("cv-ensemble").parse()?;
    let learner_out: LearnerSpec = args.learner_out.as_deref().unwrap_or("cv-ensemble").parse()?;
    let s = EstimateSettings {
        input,
        delta_min: args.delta_min.unwrap_or(0.2),
        delta_max: args.delta_max.unwrap_or(5.0),
        delta_points: args.delta_points.unwrap_or(101),
        nsplits: args.nsplits.unwrap_or(2),
        learner_prop: learner_prop.to_string(),
        learner_out: learner_out.to_string(),
        alpha: args.alpha.unwrap_or(0.05),
        bootstrap_reps: args.bootstrap_reps.unwrap_or(10_000),
        seed: args.seed.unwrap_or(0),
        multipliers: args.multipliers.unwrap_or_else(|| "rademacher".into()),
        max_lag: args.max_lag,
        id_col: args.id_col.unwrap_or(defaults.id),
        time_col: args.time_col.unwrap_or(defaults.time),
        treatment_col: args.treatment_col.unwrap_or(defaults.treatment),
        outcome_col: args.outcome_col.unwrap_or(defaults.outcome),
        covariates: args.covariates,
        time_varying_outcome: args.time_varying_outcome,
        write_influence: !args.no_influence,
    };
    let multipliers = parse_multipliers(&s.multipliers)?;
    let grid = log_delta_grid(s.delta_min, s.delta_max, s.delta_points)?;
    let schema = CsvSchema {
        id: s.id_col.clone(),
        time: s.time_col.clone(),
        treatment: s.treatment_col.clone(),
        outcome: s.outcome_col.clone(),
        covariates: s.covariates.clone(),
        time_varying_outcome: s.time_varying_outcome,
    };
    let inputs = vec![checksum(&s.input)?];
    let data = load_csv(&s.input, &schema)?;

    let mut config = EstimatorConfig::new(Arc::new(learner_prop), Arc::new(learner_out), grid)
        .with_splits(s.nsplits)
        .with_seed(s.seed);
    config.max_lag = s.max_lag;
    let est = estimate_all(&data, &config)?;
    let curve = effect_curve(
        &est.influence,
        &est.efficient,
        s.alpha,
        s.bootstrap_reps,
        s.seed,
        multipliers,
    )?;

    prepare_outdir(&outdir)?;
    let path = outdir.join("curve.csv");
    curve.write_curve_csv(create(&path)?)?;
    curve.write_summary_csv(create(&outdir.join("summary.csv"))?)?;
    if s.write_influence {
        est.influence.write_csv(create(&outdir.join("influence.csv"))?)?;
    }
    write_echo(&outdir, "estimate", s.seed, &s, inputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SimulateSettings {
    dgp: String,
    mode: String,
    n: usize,
    reps: usize,
    delta_min: f64,
    delta_max: f64,
    delta_points: usize,
    nsplits: usize,
    alpha: f64,
    bootstrap_reps: usize,
    oracle_draws: usize,
    seed: u64,
}

/// Settings of a previous run in `dir`, if any.
fn previous_settings(dir: &Path) -> Result<Option<SimulateSettings>, CliError> {
    let path = dir.join(RUN_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io("cannot read", &path, e))?;
    let echo: RunEcho<SimulateSettings> =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("cannot parse {}: {e}", path.display())))?;
    Ok(Some(echo.settings))
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let outdir = required(args.outdir, "outdir")?;
    let mode: NuisanceMode = args.mode.as_deref().unwrap_or("cor-p").parse()?;
    let (lo, hi) = reference_range();
    let s = SimulateSettings {
        dgp: args.dgp.unwrap_or_else(|| "kang-schafer".into()),
        mode: mode.to_string(),
        n: args.n.unwrap_or(1000),
        reps: args.reps.unwrap_or(500),
        delta_min: args.delta_min.unwrap_or(lo),
        delta_max: args.delta_max.unwrap_or(hi),
        delta_points: args.delta_points.unwrap_or(100),
        nsplits: args.nsplits.unwrap_or_else(|| mode.default_splits()),
        alpha: args.alpha.unwrap_or(0.05),
        bootstrap_reps: args.bootstrap_reps.unwrap_or(10_000),
        oracle_draws: args.oracle_draws.unwrap_or(1_000_000),
        seed: args.seed.unwrap_or(0),
    };
    let mut config = SimConfig::new(mode, s.n, s.reps, log_delta_grid(s.delta_min, s.delta_max, s.delta_points)?);
    config.dgp = s.dgp.clone();
    config.n_splits = Some(s.nsplits);
    config.alpha = s.alpha;
    config.bootstrap_reps = s.bootstrap_reps;
    config.oracle_draws = s.oracle_draws;
    config.seed = s.seed;

    let records_path = outdir.join("replications.csv");
    let mut records = Vec::new();
    if args.resume && records_path.exists() {
        match previous_settings(&outdir)? {
            Some(prev) if SimulateSettings { reps: s.reps, ..prev.clone() } == s => {}
            _ => return Err(CliError::Usage("--resume needs an output directory from a run with the same settings".into())),
        }
        let file = File::open(&records_path).map_err(|e| CliError::io("cannot read", &records_path, e))?;
        records = read_records_csv(file)?;
        records.retain(|r| r.rep < s.reps);
    }
    let truth = truth_curve(&config)?;
    let done: BTreeSet<usize> = records.iter().map(|r| r.rep).collect();
    let missing: Vec<usize> = (0..s.reps).filter(|r| !done.contains(r)).collect();
    let fresh = missing
        .par_iter()
        .map(|&r| run_replication(&config, &truth, r))
        .collect::<Result<Vec<_>, _>>()?;
    records.extend(fresh);
    let report = summarize(&config, &truth, records)?;

    prepare_outdir(&outdir)?;
    write_truth_csv(&truth, create(&outdir.join("truth.csv"))?)?;
    write_records_csv(&report.records, config.grid.values(), create(&records_path)?)?;
    report.write_metrics_csv(create(&outdir.join("metrics.csv"))?)?;
    report.write_summary(create(&outdir.join("summary.txt"))?)?;
    write_echo(&outdir, "simulate", s.seed, &s, Vec::new())
}

#[derive(Debug, Serialize)]
struct OracleSettings {
    dgp: String,
    delta_min: f64,
    delta_max: f64,
    delta_points: usize,
    oracle_draws: usize,
    seed: u64,
}

pub fn oracle(args: OracleArgs) -> Result<(), CliError> {
    let outdir = required(args.outdir, "outdir")?;
    let (lo, hi) = reference_range();
    let s = OracleSettings {
        dgp: args.dgp.unwrap_or_else(|| "kang-schafer".into()),
        delta_min: args.delta_min.unwrap_or(lo),
        delta_max: args.delta_max.unwrap_or(hi),
        delta_points: args.delta_points.unwrap_or(100),
        oracle_draws: args.oracle_draws.unwrap_or(1_000_000),
        seed: args.seed.unwrap_or(0),
    };
    let dgp = dgp_by_name(&s.dgp)?;
    let grid = log_delta_grid(s.delta_min, s.delta_max, s.delta_points)?;
    let truth = oracle_curve(dgp.as_ref(), grid.values(), s.oracle_draws, derive_seed(s.seed, Stream::Oracle, 0))?;
    prepare_outdir(&outdir)?;
    write_truth_csv(&truth, create(&outdir.join("oracle.csv"))?)?;
    write_echo(&outdir, "oracle", s.seed, &s, Vec::new())
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let output = required(args.output, "output")?;
    let dgp = dgp_by_name(args.dgp.as_deref().unwrap_or("longitudinal-demo"))?;
    let n = args.n.unwrap_or(50);
    if n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let data = simulate_dataset(dgp.as_ref(), n, args.seed.unwrap_or(0));
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_outdir(parent)?;
    }
    data.write_csv_path(&output)?;
    Ok(())
}
