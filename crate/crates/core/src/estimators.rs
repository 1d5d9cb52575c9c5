//! Point estimators of the incremental effect curve.
//!
//! The cross-fit efficient estimator works fold by fold. Propensities
//! `pi_t(H_t)` are fitted on the training units and predicted for every
//! unit. For each increment a backward sequence of pseudo-regressions runs
//! from `R_{T+1} = Y` down to `R_1`: regress `R_{t+1}` on `(H_t, A_t)`
//! among training units, predict at `A_t = 1` and `A_t = 0` for every unit,
//! and collapse the two predictions with the shifted propensity. The
//! held-out units then receive the influence value
//!
//! ```text
//! phi = W~_T * Y + sum_t W~_t * V_t * R_t
//! ```
//!
//! where `W~_t` is the running product of the incremental weights and `V_t`
//! the propensity-score correction weight. With a single fold the same
//! steps run on the full sample.
//!
//! The IPW estimator keeps only `W~_T * Y`; the plug-in estimator averages
//! the collapsed time-1 pseudo-outcome `R_1`. All three share the nuisance
//! fits when produced by [`estimate_all`].

use std::io::Write;
use std::sync::Arc;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{assign_folds, build_history_truncated, DatasetError, FoldAssignment, LongitudinalDataset};
use crate::intervention::{DeltaGrid, InterventionError};
use crate::learners::{Learner, LearnerError, Predictor, Task};
use crate::rng::{derive_seed, Stream};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error("fold {0} has no held-out units")]
    NoTestUnits(usize),
    #[error("{what} prediction {value} at time {t} is invalid")]
    InvalidPrediction { what: &'static str, t: usize, value: f64 },
    #[error("non-finite influence value for unit {unit} at delta {delta}")]
    NonFinite { unit: usize, delta: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

/// `(delta * a + 1 - a) / (delta * pihat + 1 - pihat)`. The denominator
/// lies between `min(delta, 1)` and `max(delta, 1)`.
#[inline]
pub fn ipw_weight(a: u8, pihat: f64, delta: f64) -> f64 {
    if delta == 1.0 {
        return 1.0;
    }
    let numerator = if a == 1 { delta } else { 1.0 };
    numerator / (delta * pihat + (1.0 - pihat))
}

/// `((1 - delta) / delta) * (a * (1 - pihat) - (1 - a) * delta * pihat)`;
/// zero at `delta = 1`.
#[inline]
pub fn v_weight(a: u8, pihat: f64, delta: f64) -> f64 {
    let a = f64::from(a);
    (1.0 - delta) * (a * (1.0 - pihat) - (1.0 - a) * delta * pihat) / delta
}

/// Average of `m1` and `m0` weighted by the shifted propensity.
#[inline]
pub fn pseudo_outcome(pihat: f64, m1: f64, m0: f64, delta: f64) -> f64 {
    let q = crate::intervention::shift_unchecked(pihat, delta);
    q * m1 + (1.0 - q) * m0
}

/// Running products `W~_1, ..., W~_T` for one unit.
pub fn cumulative_weights(a: &[u8], pihat: &[f64], delta: f64) -> Vec<f64> {
    let mut acc = 1.0;
    a.iter()
        .zip(pihat)
        .map(|(&at, &p)| {
            acc *= ipw_weight(at, p, delta);
            acc
        })
        .collect()
}

/// Uncentered influence value of one unit given its nuisance predictions
/// (`pihat`, `m1`, `m0` indexed by time).
pub fn unit_influence(a: &[u8], y: f64, pihat: &[f64], m1: &[f64], m0: &[f64], delta: f64) -> f64 {
    let w = cumulative_weights(a, pihat, delta);
    let mut phi = w[w.len() - 1] * y;
    for t in 0..a.len() {
        let r = pseudo_outcome(pihat[t], m1[t], m0[t], delta);
        phi += w[t] * v_weight(a[t], pihat[t], delta) * r;
    }
    phi
}

/// Per-unit IPW term `W~_T * Y`.
pub fn unit_ipw(a: &[u8], y: f64, pihat: &[f64], delta: f64) -> f64 {
    a.iter().zip(pihat).map(|(&at, &p)| ipw_weight(at, p, delta)).product::<f64>() * y
}

/// Estimator settings.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// Number of sample splits `K`; `1` fits and evaluates on the full sample.
    pub n_splits: usize,
    pub propensity: Arc<dyn Learner>,
    pub outcome: Arc<dyn Learner>,
    pub grid: DeltaGrid,
    pub seed: u64,
    /// History truncation for the nuisance features.
    pub max_lag: Option<usize>,
}

impl EstimatorConfig {
    pub fn new(propensity: Arc<dyn Learner>, outcome: Arc<dyn Learner>, grid: DeltaGrid) -> Self {
        Self { n_splits: 1, propensity, outcome, grid, seed: 0, max_lag: None }
    }

    pub fn with_splits(mut self, k: usize) -> Self {
        self.n_splits = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Pseudo-regression predictions of one fold at one increment, indexed
/// `[t - 1][unit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoRegression {
    pub m1: Vec<Vec<f64>>,
    pub m0: Vec<Vec<f64>>,
}

/// Fitted nuisances: predictions for every unit from models trained
/// without that fold.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFits {
    pub folds: FoldAssignment,
    /// `[fold - 1][t - 1][unit]`.
    pub propensity: Vec<Vec<Vec<f64>>>,
    /// `[fold - 1][delta index]`.
    pub pseudo: Vec<Vec<PseudoRegression>>,
}

impl NuisanceFits {
    /// Propensity predictions for `unit` from the models of its own fold.
    pub fn unit_propensity(&self, unit: usize) -> Vec<f64> {
        let k = self.folds.labels()[unit] - 1;
        self.propensity[k].iter().map(|p| p[unit]).collect()
    }
}

/// `n x |grid|` matrix of uncentered influence values.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    pub unit_ids: Vec<String>,
    pub deltas: Vec<f64>,
    pub values: Array2<f64>,
}

impl InfluenceMatrix {
    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.n_units() as f64;
        self.values.columns().into_iter().map(|c| c.sum() / n).collect()
    }

    /// Long-format export with columns `unit_id,delta,phi`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["unit_id", "delta", "phi"])?;
        for (i, id) in self.unit_ids.iter().enumerate() {
            for (j, d) in self.deltas.iter().enumerate() {
                w.write_record([id.clone(), d.to_string(), self.values[[i, j]].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// All three estimators from one set of nuisance fits.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub deltas: Vec<f64>,
    pub efficient: Vec<f64>,
    pub ipw: Vec<f64>,
    pub plugin: Vec<f64>,
    pub influence: InfluenceMatrix,
    pub nuisance: NuisanceFits,
}

/// Nuisance feature matrices shared by every fold.
struct Design {
    /// `H_t` for each time.
    history: Vec<Array2<f64>>,
    /// `(H_t, A_t)` with the observed, treated and untreated `A_t`.
    observed: Vec<Array2<f64>>,
    treated: Vec<Array2<f64>>,
    untreated: Vec<Array2<f64>>,
    treatment: Vec<Vec<f64>>,
}

impl Design {
    fn new(data: &LongitudinalDataset, max_lag: Option<usize>) -> Result<Self> {
        let n = data.n_units();
        let mut d = Design {
            history: Vec::new(),
            observed: Vec::new(),
            treated: Vec::new(),
            untreated: Vec::new(),
            treatment: Vec::new(),
        };
        for t in 1..=data.n_times() {
            let h = build_history_truncated(data, t, max_lag)?.values;
            let a: Vec<f64> = data.treatment(t).into_iter().map(f64::from).collect();
            let with = |col: Array2<f64>| concatenate(Axis(1), &[h.view(), col.view()]).expect("same rows");
            d.observed.push(with(Array2::from_shape_vec((n, 1), a.clone()).expect("n rows")));
            d.treated.push(with(Array2::ones((n, 1))));
            d.untreated.push(with(Array2::zeros((n, 1))));
            d.history.push(h);
            d.treatment.push(a);
        }
        Ok(d)
    }
}

fn fit_predict(
    learner: &dyn Learner,
    features: ArrayView2<'_, f64>,
    targets: &[f64],
    train: &[usize],
    task: Task,
    predict_on: &[ArrayView2<'_, f64>],
) -> Result<Vec<Vec<f64>>> {
    let x = features.select(Axis(0), train);
    let y: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
    let model: Box<dyn Predictor> = learner.fit(x.view(), &y, task)?;
    predict_on.iter().map(|m| Ok(model.predict(*m)?)).collect()
}

fn check_predictions(what: &'static str, t: usize, values: &[f64], unit_interval: bool) -> Result<()> {
    for &v in values {
        if !v.is_finite() || (unit_interval && !(0.0..=1.0).contains(&v)) {
            return Err(EstimatorError::InvalidPrediction { what, t, value: v });
        }
    }
    Ok(())
}

fn fold_propensities(
    design: &Design,
    learner: &dyn Learner,
    train: &[usize],
) -> Result<Vec<Vec<f64>>> {
    design
        .history
        .iter()
        .enumerate()
        .map(|(s, h)| {
            let mut pred = fit_predict(learner, h.view(), &design.treatment[s], train, Task::Probability, &[h.view()])?;
            let pi = pred.pop().expect("one prediction set");
            check_predictions("propensity", s + 1, &pi, true)?;
            Ok(pi)
        })
        .collect()
}

/// Backward pseudo-regressions for one increment. `last` holds the
/// increment-free time-`T` predictions `(m1, m0)`.
fn backward_pass(
    design: &Design,
    learner: &dyn Learner,
    train: &[usize],
    pi: &[Vec<f64>],
    last: &(Vec<f64>, Vec<f64>),
    delta: f64,
) -> Result<PseudoRegression> {
    let t_max = pi.len();
    let mut m1 = vec![Vec::new(); t_max];
    let mut m0 = vec![Vec::new(); t_max];
    m1[t_max - 1] = last.0.clone();
    m0[t_max - 1] = last.1.clone();
    for s in (0..t_max - 1).rev() {
        let next = s + 1;
        let r: Vec<f64> = (0..pi[next].len())
            .map(|i| pseudo_outcome(pi[next][i], m1[next][i], m0[next][i], delta))
            .collect();
        let mut pred = fit_predict(
            learner,
            design.observed[s].view(),
            &r,
            train,
            Task::Regression,
            &[design.treated[s].view(), design.untreated[s].view()],
        )?;
        m0[s] = pred.pop().expect("untreated");
        m1[s] = pred.pop().expect("treated");
        check_predictions("pseudo-regression", s + 1, &m1[s], false)?;
        check_predictions("pseudo-regression", s + 1, &m0[s], false)?;
    }
    Ok(PseudoRegression { m1, m0 })
}

/// Run the cross-fit estimator and report the efficient, IPW and plug-in
/// curves together with the influence matrix and nuisance predictions.
pub fn estimate_all(data: &LongitudinalDataset, config: &EstimatorConfig) -> Result<Estimates> {
    let n = data.n_units();
    let t_max = data.n_times();
    let k = config.n_splits;
    let folds = assign_folds(n, k, derive_seed(config.seed, Stream::Folds, 0))?;
    let design = Design::new(data, config.max_lag)?;
    let deltas = config.grid.values().to_vec();
    let g = deltas.len();
    let treatments = data.treatments();
    let y = data.outcomes();

    let mut influence = Array2::<f64>::zeros((n, g));
    let mut efficient = vec![0.0; g];
    let mut ipw = vec![0.0; g];
    let mut plugin = vec![0.0; g];
    let mut propensity = Vec::with_capacity(k);
    let mut pseudo = Vec::with_capacity(k);

    for fold in 1..=k {
        let train = folds.train_units(fold);
        let test = folds.test_units(fold);
        if test.is_empty() {
            return Err(EstimatorError::NoTestUnits(fold));
        }
        let pi = fold_propensities(&design, config.propensity.as_ref(), &train)?;

        let last_t = t_max - 1;
        let mut last = fit_predict(
            config.outcome.as_ref(),
            design.observed[last_t].view(),
            y,
            &train,
            Task::Regression,
            &[design.treated[last_t].view(), design.untreated[last_t].view()],
        )?;
        let last = {
            let m0 = last.pop().expect("untreated");
            let m1 = last.pop().expect("treated");
            check_predictions("pseudo-regression", t_max, &m1, false)?;
            check_predictions("pseudo-regression", t_max, &m0, false)?;
            (m1, m0)
        };

        let cells: Vec<(PseudoRegression, Vec<[f64; 3]>)> = deltas
            .par_iter()
            .map(|&delta| -> Result<_> {
                let m = backward_pass(&design, config.outcome.as_ref(), &train, &pi, &last, delta)?;
                let mut unit = Vec::with_capacity(test.len());
                let mut p = vec![0.0; t_max];
                let mut a = vec![0u8; t_max];
                let mut m1 = vec![0.0; t_max];
                let mut m0 = vec![0.0; t_max];
                for &i in &test {
                    for s in 0..t_max {
                        p[s] = pi[s][i];
                        a[s] = treatments[[i, s]];
                        m1[s] = m.m1[s][i];
                        m0[s] = m.m0[s][i];
                    }
                    let phi = unit_influence(&a, y[i], &p, &m1, &m0, delta);
                    if !phi.is_finite() {
                        return Err(EstimatorError::NonFinite { unit: i, delta });
                    }
                    unit.push([phi, unit_ipw(&a, y[i], &p, delta), pseudo_outcome(p[0], m1[0], m0[0], delta)]);
                }
                Ok((m, unit))
            })
            .collect::<Result<_>>()?;

        let mut fold_pseudo = Vec::with_capacity(g);
        for (j, (m, unit)) in cells.into_iter().enumerate() {
            let mut sums = [0.0; 3];
            for (&i, vals) in test.iter().zip(&unit) {
                influence[[i, j]] = vals[0];
                for c in 0..3 {
                    sums[c] += vals[c];
                }
            }
            efficient[j] += sums[0];
            ipw[j] += sums[1];
            plugin[j] += sums[2];
            fold_pseudo.push(m);
        }
        propensity.push(pi);
        pseudo.push(fold_pseudo);
    }
    for v in efficient.iter_mut().chain(ipw.iter_mut()).chain(plugin.iter_mut()) {
        *v /= n as f64;
    }
    Ok(Estimates {
        influence: InfluenceMatrix { unit_ids: data.ids().to_vec(), deltas: deltas.clone(), values: influence },
        deltas,
        efficient,
        ipw,
        plugin,
        nuisance: NuisanceFits { folds, propensity, pseudo },
    })
}

/// Efficient cross-fit estimate, its influence matrix and nuisance fits.
pub fn efficient_estimate(
    data: &LongitudinalDataset,
    config: &EstimatorConfig,
) -> Result<(Vec<f64>, InfluenceMatrix, NuisanceFits)> {
    let e = estimate_all(data, config)?;
    Ok((e.efficient, e.influence, e.nuisance))
}

/// IPW estimate `mean(W~_T * Y)`. Needs only the propensity models.
pub fn ipw_estimate(data: &LongitudinalDataset, config: &EstimatorConfig) -> Result<Vec<f64>> {
    let n = data.n_units();
    let k = config.n_splits;
    let folds = assign_folds(n, k, derive_seed(config.seed, Stream::Folds, 0))?;
    let design = Design::new(data, config.max_lag)?;
    let treatments = data.treatments();
    let y = data.outcomes();
    let mut out = vec![0.0; config.grid.len()];
    for fold in 1..=k {
        let test = folds.test_units(fold);
        if test.is_empty() {
            return Err(EstimatorError::NoTestUnits(fold));
        }
        let pi = fold_propensities(&design, config.propensity.as_ref(), &folds.train_units(fold))?;
        for (j, &delta) in config.grid.values().iter().enumerate() {
            let total: f64 = test
                .iter()
                .map(|&i| {
                    let a = treatments.row(i).to_vec();
                    let p: Vec<f64> = pi.iter().map(|col| col[i]).collect();
                    unit_ipw(&a, y[i], &p, delta)
                })
                .sum();
            out[j] += total;
        }
    }
    Ok(out.into_iter().map(|v| v / n as f64).collect())
}

/// Plug-in estimate: the average collapsed time-1 pseudo-outcome, with no
/// weighting correction.
pub fn plugin_estimate(data: &LongitudinalDataset, config: &EstimatorConfig) -> Result<Vec<f64>> {
    Ok(estimate_all(data, config)?.plugin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intervention::log_delta_grid;
    use crate::learners::{KnownFunction, LearnerKind, LearnerSpec};
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn weight_examples() {
        assert!((ipw_weight(1, 0.5, 2.0) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(ipw_weight(1, 0.83, 1.0), 1.0);
        assert_eq!(ipw_weight(0, 0.21, 1.0), 1.0);
        assert_eq!(ipw_weight(0, 0.0, 7.0), 1.0);
        assert!((v_weight(1, 0.5, 2.0) + 0.25).abs() < 1e-15);
        assert_eq!(v_weight(1, 0.3, 1.0), 0.0);
        assert_eq!(v_weight(0, 0.3, 1.0), 0.0);
        assert!((v_weight(0, 0.25, 0.5) + 0.125).abs() < 1e-15);
        assert_eq!(pseudo_outcome(0.5, 10.0, 0.0, 1.0), 5.0);
        assert_eq!(pseudo_outcome(1.0, 3.0, -8.0, 0.4), 3.0);
        assert!((pseudo_outcome(0.3, 4.5, 4.5, 2.7) - 4.5).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn cumulative_weights_are_bounded(
            delta in 0.05f64..20.0,
            path in proptest::collection::vec((0u8..2, prop_oneof![Just(0.0), Just(1.0), 0.0f64..1.0]), 1..6),
        ) {
            let a: Vec<u8> = path.iter().map(|p| p.0).collect();
            let pi: Vec<f64> = path.iter().map(|p| p.1).collect();
            let r = delta.max(1.0 / delta);
            for (t, w) in cumulative_weights(&a, &pi, delta).into_iter().enumerate() {
                let s = (t + 1) as i32;
                prop_assert!(w.is_finite());
                prop_assert!(w >= r.powi(-s) * (1.0 - 1e-12) && w <= r.powi(s) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn pseudo_outcome_is_convex_combination(pi in 0.0f64..=1.0, m1 in -50.0f64..50.0, m0 in -50.0f64..50.0, d in 0.01f64..100.0) {
            let r = pseudo_outcome(pi, m1, m0, d);
            prop_assert!(r >= m1.min(m0) - 1e-9 && r <= m1.max(m0) + 1e-9);
        }
    }

    fn toy(n: usize) -> LongitudinalDataset {
        let x1 = Array2::from_shape_fn((n, 1), |(i, _)| (i % 7) as f64 - 3.0);
        let x2 = Array2::from_shape_fn((n, 1), |(i, _)| ((i * 5) % 11) as f64 / 4.0);
        let a = Array2::from_shape_fn((n, 2), |(i, t)| ((i + 3 * t) % 3 == 0) as u8);
        let y = (0..n).map(|i| (i % 13) as f64 * 0.7 - 2.0).collect();
        LongitudinalDataset::new(vec![x1, x2], a, y).unwrap()
    }

    fn logistic_linear(grid: DeltaGrid) -> EstimatorConfig {
        EstimatorConfig::new(
            Arc::new(LearnerSpec::new(LearnerKind::Logistic)),
            Arc::new(LearnerSpec::new(LearnerKind::Linear)),
            grid,
        )
    }

    #[test]
    fn unit_delta_gives_outcome_mean() {
        let data = toy(60);
        let grid = DeltaGrid::new(vec![0.5, 1.0, 3.0]).unwrap();
        for k in [1, 2, 7] {
            let e = estimate_all(&data, &logistic_linear(grid.clone()).with_splits(k)).unwrap();
            let mean = data.outcome_mean();
            assert!((e.efficient[1] - mean).abs() < 1e-12);
            assert!((e.ipw[1] - mean).abs() < 1e-12);
            for i in 0..60 {
                assert_eq!(e.influence.values[[i, 1]], data.outcomes()[i]);
            }
        }
    }

    #[test]
    fn column_means_match_estimate() {
        let data = toy(61);
        let e = estimate_all(&data, &logistic_linear(log_delta_grid(0.2, 5.0, 6).unwrap()).with_splits(3)).unwrap();
        for (m, psi) in e.influence.column_means().iter().zip(&e.efficient) {
            assert!((m - psi).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_fit_predictions_ignore_own_fold() {
        // Propensity fits for fold k must not change when fold-k outcomes change.
        let data = toy(40);
        let cfg = logistic_linear(DeltaGrid::new(vec![2.0]).unwrap()).with_splits(2);
        let base = estimate_all(&data, &cfg).unwrap();
        let labels = base.nuisance.folds.labels().to_vec();
        let mut y = data.outcomes().to_vec();
        for i in 0..40 {
            if labels[i] == 1 {
                y[i] += 100.0;
            }
        }
        let covs = (1..=2).map(|t| data.covariates(t).to_owned()).collect();
        let edited = LongitudinalDataset::new(covs, data.treatments().to_owned(), y).unwrap();
        let again = estimate_all(&edited, &cfg).unwrap();
        assert_eq!(base.nuisance.pseudo[0], again.nuisance.pseudo[0]);
        assert_ne!(base.nuisance.pseudo[1], again.nuisance.pseudo[1]);
    }

    #[test]
    fn ipw_single_unit_by_hand() {
        let data = LongitudinalDataset::new(vec![array![[0.0]]], array![[1]], vec![5.0]).unwrap();
        let cfg = EstimatorConfig::new(
            Arc::new(KnownFunction::constant(0.5)),
            Arc::new(KnownFunction::constant(0.0)),
            DeltaGrid::new(vec![2.0]).unwrap(),
        );
        let psi = ipw_estimate(&data, &cfg).unwrap();
        assert!((psi[0] - 20.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn standalone_ipw_matches_shared_fit() {
        let data = toy(45);
        let cfg = logistic_linear(log_delta_grid(0.3, 3.0, 4).unwrap()).with_splits(2).with_seed(5);
        let all = estimate_all(&data, &cfg).unwrap();
        assert_eq!(ipw_estimate(&data, &cfg).unwrap(), all.ipw);
    }

    #[test]
    fn constant_outcome_plugin_is_constant() {
        let data = toy(30);
        let covs = (1..=2).map(|t| data.covariates(t).to_owned()).collect();
        let flat = LongitudinalDataset::new(covs, data.treatments().to_owned(), vec![4.25; 30]).unwrap();
        let cfg = logistic_linear(log_delta_grid(0.1, 10.0, 5).unwrap()).with_splits(2);
        for v in plugin_estimate(&flat, &cfg).unwrap() {
            assert!((v - 4.25).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_propensity_is_reported() {
        let data = toy(10);
        let cfg = EstimatorConfig::new(
            Arc::new(KnownFunction::constant(1.5)),
            Arc::new(KnownFunction::constant(0.0)),
            DeltaGrid::new(vec![2.0]).unwrap(),
        );
        assert!(matches!(estimate_all(&data, &cfg), Err(EstimatorError::InvalidPrediction { .. })));
        let too_many = logistic_linear(DeltaGrid::new(vec![2.0]).unwrap()).with_splits(11);
        assert!(matches!(estimate_all(&data, &too_many), Err(EstimatorError::Dataset(DatasetError::InvalidK { .. }))));
    }

    #[test]
    fn deterministic_bitwise() {
        let data = toy(50);
        let mut spec = LearnerSpec::new(LearnerKind::Forest);
        spec.params.n_trees = 5;
        let cfg = EstimatorConfig::new(Arc::new(spec.clone()), Arc::new(spec), log_delta_grid(0.5, 2.0, 3).unwrap())
            .with_splits(2)
            .with_seed(9);
        let a = estimate_all(&data, &cfg).unwrap();
        let b = estimate_all(&data, &cfg).unwrap();
        assert_eq!(a.influence, b.influence);
        assert_eq!(a.efficient, b.efficient);
    }

    #[test]
    fn influence_csv_layout() {
        let im = InfluenceMatrix {
            unit_ids: vec!["a".into(), "b".into()],
            deltas: vec![0.5, 2.0],
            values: array![[1.0, 2.0], [3.0, 4.5]],
        };
        let mut buf = Vec::new();
        im.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "unit_id,delta,phi\na,0.5,1\na,2,2\nb,0.5,3\nb,2,4.5\n");
    }
}
