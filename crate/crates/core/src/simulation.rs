//! Kang-Schafer experiments: data generation, integrated bias and RMSE,
//! and uniform-band coverage over replications.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::LongitudinalDataset;
use crate::estimators::{estimate_all, EstimatorConfig, EstimatorError};
use crate::inference::{effect_curve, flat_line_multiplier, InferenceError, Multipliers};
use crate::intervention::{log_delta_grid, oracle_curve, simulate_dataset, DeltaGrid, Dgp, InterventionError, OracleValue};
use crate::learners::{Interactions, LearnerKind, LearnerSpec};
use crate::rng::{derive_seed, Stream};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("unknown data-generating process `{0}`")]
    UnknownDgp(String),
    #[error("unknown nuisance mode `{0}`")]
    UnknownMode(String),
    #[error("mode `{mode}` needs transformed covariates, which `{dgp}` does not provide")]
    UnsupportedMode { dgp: String, mode: NuisanceMode },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("malformed replication records: {0}")]
    Records(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimulationError>;

fn expit(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Coefficients of the treatment model's linear index on `X`.
pub const PROPENSITY_COEFFICIENTS: [f64; 4] = [-1.0, 0.5, -0.25, -0.1];
/// Weights of `X` inside the effect modifier `13.7 * (2 X1 + X2 + X3 + X4)`.
pub const OUTCOME_WEIGHTS: [f64; 4] = [2.0, 1.0, 1.0, 1.0];
pub const OUTCOME_SCALE: f64 = 13.7;
pub const OUTCOME_BASELINE: f64 = 200.0;
pub const TREATMENT_EFFECT: f64 = 10.0;

/// Covariate transformations of Kang and Schafer (2007):
/// `exp(X1 / 2)`, `X2 / (1 + exp(X1)) + 10`, `(X1 X3 / 25 + 0.6)^3` and
/// `(X2 + X4 + 20)^2`.
pub fn transform_covariates(x: [f64; 4]) -> [f64; 4] {
    [
        (x[0] / 2.0).exp(),
        x[1] / (1.0 + x[0].exp()) + 10.0,
        (x[0] * x[2] / 25.0 + 0.6).powi(3),
        (x[1] + x[3] + 20.0).powi(2),
    ]
}

/// Single-timepoint benchmark with `X ~ N(0, I_4)`,
/// `P(A = 1 | X) = expit(-X1 + 0.5 X2 - 0.25 X3 - 0.1 X4)` and
/// `Y ~ N(200 + A {10 + 13.7 (2 X1 + X2 + X3 + X4)}, 1)`.
///
/// The null variant keeps the same confounding but drops treatment from
/// the outcome: `Y ~ N(200 + 13.7 (2 X1 + X2 + X3 + X4), 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KangSchafer {
    pub transformed: bool,
    pub null_effect: bool,
}

impl KangSchafer {
    pub fn new(transformed: bool) -> Self {
        Self { transformed, null_effect: false }
    }

    pub fn null(transformed: bool) -> Self {
        Self { transformed, null_effect: true }
    }

    fn index(x: &[f64], w: &[f64; 4]) -> f64 {
        x.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

impl Dgp for KangSchafer {
    fn name(&self) -> &str {
        match (self.null_effect, self.transformed) {
            (false, false) => "kang-schafer",
            (false, true) => "kang-schafer-transformed",
            (true, false) => "kang-schafer-null",
            (true, true) => "kang-schafer-null-transformed",
        }
    }

    fn n_times(&self) -> usize {
        1
    }

    fn sample_covariates(&self, _t: usize, _x: &[Vec<f64>], _a: &[u8], rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..4).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn propensity(&self, _t: usize, x: &[Vec<f64>], _a: &[u8]) -> f64 {
        expit(Self::index(&x[0], &PROPENSITY_COEFFICIENTS))
    }

    fn outcome_mean(&self, x: &[Vec<f64>], a: &[u8]) -> f64 {
        let modifier = OUTCOME_SCALE * Self::index(&x[0], &OUTCOME_WEIGHTS);
        if self.null_effect {
            OUTCOME_BASELINE + modifier
        } else {
            OUTCOME_BASELINE + f64::from(a[0]) * (TREATMENT_EFFECT + modifier)
        }
    }

    fn outcome_sd(&self) -> f64 {
        1.0
    }

    fn observe(&self, _t: usize, x: &[f64]) -> Vec<f64> {
        if self.transformed {
            transform_covariates([x[0], x[1], x[2], x[3]]).to_vec()
        } else {
            x.to_vec()
        }
    }
}

/// A small time-varying process used for demos and multi-period checks.
/// Two covariates per period:
/// `X_t1 ~ N(0.3 X_{t-1,1} + 0.5 A_{t-1}, 1)`, `X_t2 ~ N(0, 1)`,
/// `P(A_t = 1 | H_t) = expit(-0.3 + 0.6 X_t1 - 0.4 X_t2 + 0.5 A_{t-1})`,
/// `Y ~ N(1 + sum_t (A_t + 0.5 X_t1), 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LongitudinalDemo {
    pub periods: usize,
}

impl Dgp for LongitudinalDemo {
    fn name(&self) -> &str {
        "longitudinal-demo"
    }

    fn n_times(&self) -> usize {
        self.periods
    }

    fn sample_covariates(&self, t: usize, x: &[Vec<f64>], a: &[u8], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (prev_x, prev_a) = if t > 1 { (x[t - 2][0], f64::from(a[t - 2])) } else { (0.0, 0.0) };
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        vec![0.3 * prev_x + 0.5 * prev_a + e1, e2]
    }

    fn propensity(&self, t: usize, x: &[Vec<f64>], a: &[u8]) -> f64 {
        let prev_a = if t > 1 { f64::from(a[t - 2]) } else { 0.0 };
        let xt = &x[t - 1];
        expit(-0.3 + 0.6 * xt[0] - 0.4 * xt[1] + 0.5 * prev_a)
    }

    fn outcome_mean(&self, x: &[Vec<f64>], a: &[u8]) -> f64 {
        1.0 + x.iter().zip(a).map(|(xt, &at)| f64::from(at) + 0.5 * xt[0]).sum::<f64>()
    }

    fn outcome_sd(&self) -> f64 {
        1.0
    }
}

/// Names accepted by [`dgp_by_name`].
pub const DGP_NAMES: [&str; 4] = ["kang-schafer", "kang-schafer-transformed", "kang-schafer-null", "longitudinal-demo"];

/// Built-in processes by name.
pub fn dgp_by_name(name: &str) -> Result<Box<dyn Dgp>> {
    Ok(match name {
        "kang-schafer" => Box::new(KangSchafer::new(false)),
        "kang-schafer-transformed" => Box::new(KangSchafer::new(true)),
        "kang-schafer-null" => Box::new(KangSchafer::null(false)),
        "longitudinal-demo" => Box::new(LongitudinalDemo { periods: 2 }),
        other => return Err(SimulationError::UnknownDgp(other.to_string())),
    })
}

/// Draw a Kang-Schafer dataset, reporting `X*` instead of `X` when
/// `transformed` is set.
pub fn simulate_kang_schafer(n: usize, seed: u64, transformed: bool) -> LongitudinalDataset {
    simulate_dataset(&KangSchafer::new(transformed), n, seed)
}

/// Which covariates the nuisance learners see and how they are fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NuisanceMode {
    /// Logistic / linear models on `X`, which contain the truth.
    CorrectParametric,
    /// The same models on `X*`.
    MisspecifiedParametric,
    /// Cross-validated ensemble on `X`.
    NonparametricX,
    /// Cross-validated ensemble on `X*`.
    NonparametricXStar,
}

impl NuisanceMode {
    pub const ALL: [NuisanceMode; 4] = [
        NuisanceMode::CorrectParametric,
        NuisanceMode::MisspecifiedParametric,
        NuisanceMode::NonparametricX,
        NuisanceMode::NonparametricXStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NuisanceMode::CorrectParametric => "cor-p",
            NuisanceMode::MisspecifiedParametric => "mis-p",
            NuisanceMode::NonparametricX => "cor-np",
            NuisanceMode::NonparametricXStar => "mis-np",
        }
    }

    pub fn transformed(self) -> bool {
        matches!(self, NuisanceMode::MisspecifiedParametric | NuisanceMode::NonparametricXStar)
    }

    pub fn parametric(self) -> bool {
        matches!(self, NuisanceMode::CorrectParametric | NuisanceMode::MisspecifiedParametric)
    }

    /// One split (full-sample fits) for parametric models, two otherwise.
    pub fn default_splits(self) -> usize {
        if self.parametric() {
            1
        } else {
            2
        }
    }

    /// Propensity and outcome learners. The parametric outcome model
    /// interacts treatment with every covariate.
    pub fn learners(self, seed: u64) -> (LearnerSpec, LearnerSpec) {
        if self.parametric() {
            (
                LearnerSpec::new(LearnerKind::Logistic).with_seed(seed),
                LearnerSpec::new(LearnerKind::Linear).with_interactions(Interactions::LastColumn).with_seed(seed),
            )
        } else {
            let spec = LearnerSpec::new(LearnerKind::CvEnsemble).with_seed(seed);
            (spec.clone(), spec)
        }
    }
}

impl fmt::Display for NuisanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NuisanceMode {
    type Err = SimulationError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "cor-p" | "correct-parametric" => NuisanceMode::CorrectParametric,
            "mis-p" | "misspecified-parametric" => NuisanceMode::MisspecifiedParametric,
            "cor-np" | "nonparametric-x" => NuisanceMode::NonparametricX,
            "mis-np" | "nonparametric-xstar" => NuisanceMode::NonparametricXStar,
            _ => return Err(SimulationError::UnknownMode(s.to_string())),
        })
    }
}

/// Process used for generation, adjusted to report what `mode` needs.
fn dgp_for(name: &str, mode: NuisanceMode) -> Result<Box<dyn Dgp>> {
    let transformed = mode.transformed();
    Ok(match (name, transformed) {
        ("kang-schafer" | "kang-schafer-transformed", t) => Box::new(KangSchafer::new(t)),
        ("kang-schafer-null", t) => Box::new(KangSchafer::null(t)),
        (other, false) => dgp_by_name(other)?,
        (other, true) => {
            dgp_by_name(other)?;
            return Err(SimulationError::UnsupportedMode { dgp: other.to_string(), mode });
        }
    })
}

/// 100 log-spaced increments on `[exp(-2.3), exp(2.3)]`.
pub fn reference_grid() -> DeltaGrid {
    log_delta_grid((-2.3f64).exp(), 2.3f64.exp(), 100).expect("valid constant grid")
}

/// 25 log-spaced increments on the same range, for coverage runs where
/// the bootstrap dominates the cost.
pub fn coverage_grid() -> DeltaGrid {
    log_delta_grid((-2.3f64).exp(), 2.3f64.exp(), 25).expect("valid constant grid")
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dgp: String,
    pub mode: NuisanceMode,
    pub n: usize,
    pub reps: usize,
    pub grid: DeltaGrid,
    /// Defaults to [`NuisanceMode::default_splits`].
    pub n_splits: Option<usize>,
    pub alpha: f64,
    /// Multiplier-bootstrap draws per replication; zero skips the bands.
    pub bootstrap_reps: usize,
    pub oracle_draws: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(mode: NuisanceMode, n: usize, reps: usize, grid: DeltaGrid) -> Self {
        Self {
            dgp: "kang-schafer".into(),
            mode,
            n,
            reps,
            grid,
            n_splits: None,
            alpha: 0.05,
            bootstrap_reps: 10_000,
            oracle_draws: 1_000_000,
            seed: 0,
        }
    }

    pub fn splits(&self) -> usize {
        self.n_splits.unwrap_or_else(|| self.mode.default_splits())
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(SimulationError::InvalidConfig("reps must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(SimulationError::InvalidConfig("n must be at least 2".into()));
        }
        if self.grid.is_empty() {
            return Err(SimulationError::InvalidConfig("empty delta grid".into()));
        }
        dgp_for(&self.dgp, self.mode)?;
        Ok(())
    }

    pub fn replication_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, Stream::Replication, rep as u64)
    }
}

/// Ground-truth curve for the configured process and grid.
pub fn truth_curve(config: &SimConfig) -> Result<Vec<OracleValue>> {
    let dgp = dgp_for(&config.dgp, config.mode)?;
    Ok(oracle_curve(dgp.as_ref(), config.grid.values(), config.oracle_draws, derive_seed(config.seed, Stream::Oracle, 0))?)
}

/// Everything kept from one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub seed: u64,
    pub efficient: Vec<f64>,
    pub ipw: Vec<f64>,
    pub plugin: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub c_alpha: Option<f64>,
    pub p_value: Option<f64>,
    /// Uniform band contains the truth at every grid point.
    pub covered: Option<bool>,
    /// No horizontal line fits in the uniform band.
    pub rejected: Option<bool>,
}

/// Run one replication against a precomputed truth.
pub fn run_replication(config: &SimConfig, truth: &[OracleValue], rep: usize) -> Result<ReplicationRecord> {
    let dgp = dgp_for(&config.dgp, config.mode)?;
    let seed = config.replication_seed(rep);
    let data = simulate_dataset(dgp.as_ref(), config.n, seed);
    let (prop, out) = config.mode.learners(derive_seed(seed, Stream::Forest, 0));
    let est_config = EstimatorConfig::new(Arc::new(prop), Arc::new(out), config.grid.clone())
        .with_splits(config.splits())
        .with_seed(seed);
    let est = estimate_all(&data, &est_config)?;
    let n = data.n_units();
    let mut record = ReplicationRecord {
        rep,
        seed,
        sigma_hat: crate::inference::variance_hat(&est.influence, &est.efficient)?
            .into_iter()
            .map(f64::sqrt)
            .collect(),
        efficient: est.efficient,
        ipw: est.ipw,
        plugin: est.plugin,
        c_alpha: None,
        p_value: None,
        covered: None,
        rejected: None,
    };
    if config.bootstrap_reps > 0 {
        let curve = effect_curve(
            &est.influence,
            &record.efficient,
            config.alpha,
            config.bootstrap_reps,
            seed,
            Multipliers::Rademacher,
        )?;
        let truth: Vec<f64> = truth.iter().map(|o| o.psi).collect();
        record.covered = Some(curve.covers(&truth));
        record.rejected = Some(flat_line_multiplier(&curve.psi_hat, &curve.sigma_hat, n) > curve.c_alpha);
        record.c_alpha = Some(curve.c_alpha);
        record.p_value = Some(curve.p_value_no_effect);
    }
    Ok(record)
}

/// Replications `range` of the experiment. Each depends only on the config
/// and its index, so disjoint ranges can be run separately and merged.
pub fn run_replications(config: &SimConfig, truth: &[OracleValue], range: Range<usize>) -> Result<Vec<ReplicationRecord>> {
    config.validate()?;
    if truth.len() != config.grid.len() {
        return Err(SimulationError::DimensionMismatch(format!(
            "{} truth values for {} grid points",
            truth.len(),
            config.grid.len()
        )));
    }
    range.into_par_iter().map(|r| run_replication(config, truth, r)).collect()
}

/// `bias = mean_i |mean_j est[j, i] - truth[i]|` and
/// `rmse = sqrt(n) * mean_i sqrt(mean_j (est[j, i] - truth[i])^2)`.
pub fn integrated_metrics(estimates: ArrayView2<'_, f64>, truth: &[f64], n: usize) -> Result<(f64, f64)> {
    let (j, i) = estimates.dim();
    if i != truth.len() || j == 0 || i == 0 {
        return Err(SimulationError::DimensionMismatch(format!(
            "{j} x {i} estimates against {} truth values",
            truth.len()
        )));
    }
    let mut bias = 0.0;
    let mut rmse = 0.0;
    for (col, &psi) in estimates.columns().into_iter().zip(truth) {
        let err: Vec<f64> = col.iter().map(|v| v - psi).collect();
        bias += (err.iter().sum::<f64>() / j as f64).abs();
        rmse += (err.iter().map(|e| e * e).sum::<f64>() / j as f64).sqrt();
    }
    Ok((bias / i as f64, (n as f64).sqrt() * rmse / i as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorMetrics {
    pub estimator: &'static str,
    pub bias: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub dgp: String,
    pub mode: NuisanceMode,
    pub n: usize,
    pub reps: usize,
    pub n_splits: usize,
    pub grid: Vec<f64>,
    pub truth: Vec<OracleValue>,
    pub metrics: Vec<EstimatorMetrics>,
    pub coverage: Option<f64>,
    pub coverage_se: Option<f64>,
    pub rejection_rate: Option<f64>,
    /// Median over replications and grid of `c_alpha * sigma_hat / sqrt(n)`.
    pub median_half_width: Option<f64>,
    pub oracle_max_se: f64,
    pub records: Vec<ReplicationRecord>,
}

impl SimReport {
    pub fn metric(&self, estimator: &str) -> Option<&EstimatorMetrics> {
        self.metrics.iter().find(|m| m.estimator == estimator)
    }

    /// Oracle error is below a twentieth of the median band half-width.
    pub fn oracle_is_precise(&self) -> Option<bool> {
        self.median_half_width.map(|w| self.oracle_max_se < w / 20.0)
    }

    /// Columns `estimator,bias,rmse`.
    pub fn write_metrics_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["dgp", "mode", "n", "reps", "estimator", "bias", "rmse"])?;
        for m in &self.metrics {
            w.write_record([
                self.dgp.clone(),
                self.mode.to_string(),
                self.n.to_string(),
                self.reps.to_string(),
                m.estimator.to_string(),
                m.bias.to_string(),
                m.rmse.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable summary.
    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dgp: {}", self.dgp)?;
        writeln!(w, "mode: {}", self.mode)?;
        writeln!(w, "n: {}  replications: {}  splits: {}  grid points: {}", self.n, self.reps, self.n_splits, self.grid.len())?;
        for m in &self.metrics {
            writeln!(w, "{:<10} integrated bias {:.4}  integrated rmse {:.4}", m.estimator, m.bias, m.rmse)?;
        }
        if let (Some(c), Some(se)) = (self.coverage, self.coverage_se) {
            writeln!(w, "uniform band coverage: {:.2}% (MC se {:.2}%)", 100.0 * c, 100.0 * se)?;
        }
        if let Some(r) = self.rejection_rate {
            writeln!(w, "no-effect rejection rate: {:.2}%", 100.0 * r)?;
        }
        write!(w, "oracle max MC se: {:.5}", self.oracle_max_se)?;
        match self.median_half_width {
            Some(hw) => writeln!(w, " (median band half-width {hw:.4}, ratio {:.4})", self.oracle_max_se / hw)?,
            None => writeln!(w)?,
        }
        Ok(())
    }
}

/// Aggregate replication records. Records are sorted by replication index
/// first, so the result does not depend on the order they arrive in.
pub fn summarize(config: &SimConfig, truth: &[OracleValue], mut records: Vec<ReplicationRecord>) -> Result<SimReport> {
    if records.is_empty() {
        return Err(SimulationError::InvalidConfig("no replications to summarize".into()));
    }
    records.sort_by_key(|r| r.rep);
    let g = config.grid.len();
    let j = records.len();
    let psi: Vec<f64> = truth.iter().map(|o| o.psi).collect();
    let matrix = |pick: fn(&ReplicationRecord) -> &Vec<f64>| -> Result<Array2<f64>> {
        let flat: Vec<f64> = records.iter().flat_map(|r| pick(r).iter().copied()).collect();
        Array2::from_shape_vec((j, g), flat).map_err(|e| SimulationError::DimensionMismatch(e.to_string()))
    };
    let mut metrics = Vec::with_capacity(3);
    for (name, pick) in [
        ("efficient", (|r| &r.efficient) as fn(&ReplicationRecord) -> &Vec<f64>),
        ("ipw", |r| &r.ipw),
        ("plugin", |r| &r.plugin),
    ] {
        let (bias, rmse) = integrated_metrics(matrix(pick)?.view(), &psi, config.n)?;
        metrics.push(EstimatorMetrics { estimator: name, bias, rmse });
    }

    let covered: Vec<bool> = records.iter().filter_map(|r| r.covered).collect();
    let (coverage, coverage_se) = if covered.len() == j {
        let p = covered.iter().filter(|&&c| c).count() as f64 / j as f64;
        (Some(p), Some((p * (1.0 - p) / j as f64).sqrt()))
    } else {
        (None, None)
    };
    let rejected: Vec<bool> = records.iter().filter_map(|r| r.rejected).collect();
    let rejection_rate = (rejected.len() == j).then(|| rejected.iter().filter(|&&r| r).count() as f64 / j as f64);
    let root_n = (config.n as f64).sqrt();
    let mut widths: Vec<f64> = records
        .iter()
        .filter_map(|r| r.c_alpha.map(|c| r.sigma_hat.iter().map(move |s| c * s / root_n)))
        .flatten()
        .collect();
    let median_half_width = (!widths.is_empty()).then(|| {
        widths.sort_by(f64::total_cmp);
        crate::inference::quantile_sorted(&widths, 0.5)
    });

    Ok(SimReport {
        dgp: config.dgp.clone(),
        mode: config.mode,
        n: config.n,
        reps: j,
        n_splits: config.splits(),
        grid: config.grid.values().to_vec(),
        truth: truth.to_vec(),
        metrics,
        coverage,
        coverage_se,
        rejection_rate,
        median_half_width,
        oracle_max_se: truth.iter().map(|o| o.mc_se).fold(0.0, f64::max),
        records,
    })
}

/// Truth, every replication and the aggregated report.
pub fn coverage_experiment(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let truth = truth_curve(config)?;
    let records = run_replications(config, &truth, 0..config.reps)?;
    summarize(config, &truth, records)
}

/// Columns `delta,psi_true,mc_se`.
pub fn write_truth_csv<W: Write>(truth: &[OracleValue], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["delta", "psi_true", "mc_se"])?;
    for o in truth {
        w.write_record([o.delta.to_string(), o.psi.to_string(), o.mc_se.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

const RECORD_HEADER: [&str; 11] =
    ["rep", "seed", "delta", "efficient", "ipw", "plugin", "sigma", "c_alpha", "p_value", "covered", "rejected"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per replication and grid point. Values are written in their
/// shortest round-trip form, so [`read_records_csv`] restores them exactly.
pub fn write_records_csv<W: Write>(records: &[ReplicationRecord], deltas: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        for (j, d) in deltas.iter().enumerate() {
            w.write_record([
                r.rep.to_string(),
                r.seed.to_string(),
                d.to_string(),
                r.efficient[j].to_string(),
                r.ipw[j].to_string(),
                r.plugin[j].to_string(),
                r.sigma_hat[j].to_string(),
                opt(r.c_alpha),
                opt(r.p_value),
                opt(r.covered),
                opt(r.rejected),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse<T: FromStr>(field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| SimulationError::Records(format!("bad {what} `{field}`")))
}

fn parse_opt<T: FromStr>(field: &str, what: &str) -> Result<Option<T>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse(field, what).map(Some)
    }
}

/// Inverse of [`write_records_csv`].
pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<ReplicationRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(RECORD_HEADER) {
        return Err(SimulationError::Records("unexpected header".into()));
    }
    let mut by_rep: BTreeMap<usize, ReplicationRecord> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let rep: usize = parse(&row[0], "rep")?;
        let rec = by_rep.entry(rep).or_insert_with(|| ReplicationRecord {
            rep,
            seed: 0,
            efficient: Vec::new(),
            ipw: Vec::new(),
            plugin: Vec::new(),
            sigma_hat: Vec::new(),
            c_alpha: None,
            p_value: None,
            covered: None,
            rejected: None,
        });
        rec.seed = parse(&row[1], "seed")?;
        rec.efficient.push(parse(&row[3], "efficient")?);
        rec.ipw.push(parse(&row[4], "ipw")?);
        rec.plugin.push(parse(&row[5], "plugin")?);
        rec.sigma_hat.push(parse(&row[6], "sigma")?);
        rec.c_alpha = parse_opt(&row[7], "c_alpha")?;
        rec.p_value = parse_opt(&row[8], "p_value")?;
        rec.covered = parse_opt(&row[9], "covered")?;
        rec.rejected = parse_opt(&row[10], "rejected")?;
    }
    Ok(by_rep.into_values().collect())
}
