use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ipsi", version, about = "Incremental propensity score intervention effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the effect curve from a long-format CSV.
    Estimate(EstimateArgs),
    /// Run the Kang-Schafer simulation experiment.
    Simulate(SimulateArgs),
    /// Monte Carlo ground truth for a built-in process.
    Oracle(OracleArgs),
    /// Write a simulated dataset as CSV.
    Generate(GenerateArgs),
}

/// Every option is optional on the command line so a TOML file given with
/// `--config` can fill it in; flags win over the file.
macro_rules! merge_options {
    ($ty:ident { $($field:ident),* $(,)? } flags { $($flag:ident),* $(,)? }) => {
        impl $ty {
            fn merge(self, file: $ty) -> $ty {
                $ty {
                    config: self.config,
                    $($field: self.$field.or(file.$field),)*
                    $($flag: self.$flag || file.$flag,)*
                }
            }
        }
    };
}

fn load_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

pub trait WithConfig: Sized + for<'de> Deserialize<'de> {
    fn config_path(&self) -> Option<&Path>;
    fn merged(self, file: Self) -> Self;

    /// Fill unset options from the config file, if any.
    fn resolve_config(self) -> Result<Self, CliError> {
        match self.config_path().map(Path::to_path_buf) {
            Some(path) => {
                let file: Self = load_file(&path)?;
                Ok(self.merged(file))
            }
            None => Ok(self),
        }
    }
}

macro_rules! with_config {
    ($ty:ident) => {
        impl WithConfig for $ty {
            fn config_path(&self) -> Option<&Path> {
                self.config.as_deref()
            }
            fn merged(self, file: Self) -> Self {
                self.merge(file)
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EstimateArgs {
    /// TOML file with defaults for any of these options (kebab-case keys).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Long-format CSV with one row per unit and time.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    /// Smallest increment (default 0.2).
    #[arg(long)]
    pub delta_min: Option<f64>,
    /// Largest increment (default 5).
    #[arg(long)]
    pub delta_max: Option<f64>,
    /// Number of log-spaced increments (default 101, which includes 1).
    #[arg(long)]
    pub delta_points: Option<usize>,
    /// Sample splits for cross-fitting; 1 fits on the full sample (default 2).
    #[arg(long)]
    pub nsplits: Option<usize>,
    /// Propensity learner, `kind[:key=value,...]` (default cv-ensemble).
    #[arg(long)]
    pub learner_prop: Option<String>,
    /// Outcome learner, same syntax (default cv-ensemble).
    #[arg(long)]
    pub learner_out: Option<String>,
    /// Band level (default 0.05).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Multiplier bootstrap draws (default 10000).
    #[arg(long)]
    pub bootstrap_reps: Option<usize>,
    /// Seed for fold assignment and bootstrap (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// `rademacher` (default) or `gaussian`.
    #[arg(long)]
    pub multipliers: Option<String>,
    /// Keep only the last few periods of history in nuisance features.
    #[arg(long)]
    pub max_lag: Option<usize>,
    #[arg(long)]
    pub id_col: Option<String>,
    #[arg(long)]
    pub time_col: Option<String>,
    #[arg(long)]
    pub treatment_col: Option<String>,
    #[arg(long)]
    pub outcome_col: Option<String>,
    /// Covariate columns (comma separated); default: every other column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Treat the outcome column as time-varying; lagged values become
    /// covariates.
    #[arg(long)]
    pub time_varying_outcome: bool,
    /// Skip writing influence.csv.
    #[arg(long)]
    pub no_influence: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

merge_options!(EstimateArgs {
    input, outdir, delta_min, delta_max, delta_points, nsplits, learner_prop, learner_out, alpha,
    bootstrap_reps, seed, multipliers, max_lag, id_col, time_col, treatment_col, outcome_col, covariates, threads,
} flags { time_varying_outcome, no_influence });
with_config!(EstimateArgs);

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    /// Data-generating process (default kang-schafer).
    #[arg(long)]
    pub dgp: Option<String>,
    /// Nuisance mode: cor-p (default), mis-p, cor-np or mis-np.
    #[arg(long)]
    pub mode: Option<String>,
    /// Sample size per replication (default 1000).
    #[arg(long)]
    pub n: Option<usize>,
    /// Replications (default 500).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Default exp(-2.3).
    #[arg(long)]
    pub delta_min: Option<f64>,
    /// Default exp(2.3).
    #[arg(long)]
    pub delta_max: Option<f64>,
    /// Default 100.
    #[arg(long)]
    pub delta_points: Option<usize>,
    /// Default: 1 for parametric modes, 2 otherwise.
    #[arg(long)]
    pub nsplits: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap draws per replication; 0 skips bands (default 10000).
    #[arg(long)]
    pub bootstrap_reps: Option<usize>,
    /// Monte Carlo draws for the true curve (default 1000000).
    #[arg(long)]
    pub oracle_draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep replications already in the output directory and run the rest.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

merge_options!(SimulateArgs {
    outdir, dgp, mode, n, reps, delta_min, delta_max, delta_points, nsplits, alpha, bootstrap_reps,
    oracle_draws, seed, threads,
} flags { resume });
with_config!(SimulateArgs);

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct OracleArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    /// Default kang-schafer.
    #[arg(long)]
    pub dgp: Option<String>,
    /// Default exp(-2.3).
    #[arg(long)]
    pub delta_min: Option<f64>,
    /// Default exp(2.3).
    #[arg(long)]
    pub delta_max: Option<f64>,
    /// Default 100.
    #[arg(long)]
    pub delta_points: Option<usize>,
    /// Default 1000000.
    #[arg(long)]
    pub oracle_draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

merge_options!(OracleArgs { outdir, dgp, delta_min, delta_max, delta_points, oracle_draws, seed, threads } flags {});
with_config!(OracleArgs);

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GenerateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Destination CSV.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Default longitudinal-demo.
    #[arg(long)]
    pub dgp: Option<String>,
    /// Default 50.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

merge_options!(GenerateArgs { output, dgp, n, seed } flags {});
with_config!(GenerateArgs);
