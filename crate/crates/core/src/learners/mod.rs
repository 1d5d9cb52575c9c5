//! Supervised learners for the nuisance regressions.
//!
//! Everything that estimates a propensity score or a pseudo-regression goes
//! through the [`Learner`] trait. [`LearnerSpec`] covers the built-in
//! learners (linear and logistic regression, CART trees, random forests and
//! a discrete cross-validated selector over those); [`KnownFunction`] plugs
//! in a fixed function, which is how true nuisances are injected in tests
//! and simulations.

mod cv;
mod forest;
mod linear;
mod spec;
mod tree;

use std::fmt;
use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2};
use thiserror::Error;

pub use cv::{cv_select, default_library, CvSelection};
pub use forest::RandomForest;
pub use linear::{Interactions, LinearModel, LogisticFit};
pub use spec::{Hyperparameters, LearnerKind, LearnerSpec};
pub use tree::RegressionTree;

/// Smallest and largest probability a logistic model will emit.
pub const PROBABILITY_CLIP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("probability targets must lie in [0, 1]")]
    TargetOutOfRange,
    #[error("no candidate learners supplied")]
    EmptyCandidates,
    #[error("invalid cross-validation folds {folds} for {n} rows")]
    InvalidFolds { folds: usize, n: usize },
    #[error("cannot parse learner spec `{0}`")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LearnerError>;

/// What the fitted values mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Targets and predictions live in `[0, 1]`.
    Probability,
    /// Unbounded real-valued regression.
    Regression,
}

pub trait Predictor: Send + Sync {
    fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<f64>>;
}

pub trait Learner: Send + Sync + fmt::Debug {
    fn fit(&self, features: ArrayView2<'_, f64>, targets: &[f64], task: Task) -> Result<Box<dyn Predictor>>;
}

pub(crate) fn validate_training(features: ArrayView2<'_, f64>, targets: &[f64], task: Task) -> Result<()> {
    if targets.is_empty() {
        return Err(LearnerError::EmptyTrainingSet);
    }
    if features.nrows() != targets.len() {
        return Err(LearnerError::DimensionMismatch(format!(
            "{} feature rows vs {} targets",
            features.nrows(),
            targets.len()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFiniteInput("features"));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFiniteInput("targets"));
    }
    if task == Task::Probability && targets.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(LearnerError::TargetOutOfRange);
    }
    Ok(())
}

fn check_columns(features: ArrayView2<'_, f64>, expected: usize) -> Result<()> {
    if features.ncols() != expected {
        return Err(LearnerError::DimensionMismatch(format!(
            "model trained on {expected} columns, got {}",
            features.ncols()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFiniteInput("features"));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Model {
    Linear(LinearModel),
    Logistic(LogisticFit),
    Tree(RegressionTree),
    Forest(RandomForest),
}

/// A trained built-in learner.
#[derive(Debug, Clone)]
pub struct FittedModel {
    model: Model,
    n_features: usize,
    task: Task,
}

impl FittedModel {
    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_columns(features, self.n_features)?;
        let mut out = match &self.model {
            Model::Linear(m) => m.predict(features),
            Model::Logistic(m) => m.predict(features),
            Model::Tree(t) => t.predict(features),
            Model::Forest(f) => f.predict(features),
        };
        if self.task == Task::Probability {
            for v in &mut out {
                *v = v.clamp(0.0, 1.0);
            }
        }
        Ok(out)
    }

    /// Logistic fit diagnostics, when this is a logistic model.
    pub fn as_logistic(&self) -> Option<&LogisticFit> {
        match &self.model {
            Model::Logistic(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_forest(&self) -> Option<&RandomForest> {
        match &self.model {
            Model::Forest(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_tree(&self) -> Option<&RegressionTree> {
        match &self.model {
            Model::Tree(t) => Some(t),
            _ => None,
        }
    }
}

impl Predictor for FittedModel {
    fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        FittedModel::predict(self, features)
    }
}

/// Train the learner described by `spec`.
pub fn fit(spec: &LearnerSpec, features: ArrayView2<'_, f64>, targets: &[f64], task: Task) -> Result<FittedModel> {
    validate_training(features, targets, task)?;
    let p = &spec.params;
    let model = match spec.kind {
        LearnerKind::Linear => Model::Linear(LinearModel::fit(features, targets, p.interactions, p.ridge)),
        LearnerKind::Logistic => Model::Logistic(LogisticFit::fit(features, targets, p.interactions)),
        LearnerKind::Tree => Model::Tree(RegressionTree::fit(features, targets, p.max_depth, p.min_leaf)),
        LearnerKind::Forest => Model::Forest(RandomForest::fit(features, targets, p, spec.seed)),
        LearnerKind::CvEnsemble => {
            let library = default_library(spec, task);
            let chosen = cv_select(&library, features, targets, task, p.cv_folds, spec.seed)?;
            return fit(&chosen.spec, features, targets, task);
        }
    };
    Ok(FittedModel { model, n_features: features.ncols(), task })
}

pub fn predict(model: &FittedModel, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    model.predict(features)
}

impl Learner for LearnerSpec {
    fn fit(&self, features: ArrayView2<'_, f64>, targets: &[f64], task: Task) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(fit(self, features, targets, task)?))
    }
}

type RowFn = dyn Fn(ArrayView1<'_, f64>) -> f64 + Send + Sync;

/// A "learner" that ignores its training data and evaluates a fixed
/// function of each feature row.
#[derive(Clone)]
pub struct KnownFunction {
    label: String,
    f: Arc<RowFn>,
}

impl KnownFunction {
    pub fn new(label: impl Into<String>, f: impl Fn(ArrayView1<'_, f64>) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), move |_| c)
    }
}

impl fmt::Debug for KnownFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KnownFunction({})", self.label)
    }
}

impl Predictor for KnownFunction {
    fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(features.rows().into_iter().map(|r| (self.f)(r)).collect())
    }
}

impl Learner for KnownFunction {
    fn fit(&self, _features: ArrayView2<'_, f64>, _targets: &[f64], _task: Task) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn constant_target_predicts_constant() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 4.0);
        let y = vec![2.75; 40];
        for spec in ["linear", "linear:interactions=pairwise", "tree", "forest:n_trees=10", "cv-ensemble:n_trees=5"] {
            let spec: LearnerSpec = spec.parse().unwrap();
            let m = fit(&spec, x.view(), &y, Task::Regression).unwrap();
            for p in m.predict(x.view()).unwrap() {
                assert!((p - 2.75).abs() < 1e-9, "{spec}: {p}");
            }
        }
    }

    #[test]
    fn rejects_bad_training_input() {
        let spec = LearnerSpec::new(LearnerKind::Linear);
        let x = array![[1.0], [f64::NAN]];
        assert_eq!(
            fit(&spec, x.view(), &[0.0, 1.0], Task::Regression).unwrap_err(),
            LearnerError::NonFiniteInput("features")
        );
        let x = array![[1.0], [2.0]];
        assert!(matches!(fit(&spec, x.view(), &[0.0], Task::Regression), Err(LearnerError::DimensionMismatch(_))));
        let empty = Array2::<f64>::zeros((0, 1));
        assert_eq!(fit(&spec, empty.view(), &[], Task::Regression).unwrap_err(), LearnerError::EmptyTrainingSet);
        assert_eq!(
            fit(&spec, x.view(), &[0.0, 2.0], Task::Probability).unwrap_err(),
            LearnerError::TargetOutOfRange
        );
    }

    #[test]
    fn predict_checks_columns() {
        let spec = LearnerSpec::new(LearnerKind::Tree);
        let x = array![[1.0, 2.0], [2.0, 1.0]];
        let m = fit(&spec, x.view(), &[0.0, 1.0], Task::Regression).unwrap();
        assert!(matches!(m.predict(array![[1.0]].view()), Err(LearnerError::DimensionMismatch(_))));
    }

    #[test]
    fn probability_predictions_stay_in_unit_interval() {
        let x = Array2::from_shape_fn((30, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..30).map(|i| if i < 15 { 0.0 } else { 1.0 }).collect();
        let far = array![[-1e3], [1e3]];
        for spec in ["linear", "logistic", "tree", "forest:n_trees=5"] {
            let spec: LearnerSpec = spec.parse().unwrap();
            let m = fit(&spec, x.view(), &y, Task::Probability).unwrap();
            for p in m.predict(far.view()).unwrap() {
                assert!((0.0..=1.0).contains(&p), "{spec}: {p}");
            }
        }
    }

    #[test]
    fn known_function_ignores_training_data() {
        let f = KnownFunction::new("sum", |r| r.sum());
        let model = Learner::fit(&f, array![[0.0, 0.0]].view(), &[5.0], Task::Regression).unwrap();
        assert_eq!(model.predict(array![[1.0, 2.0], [3.0, 4.0]].view()).unwrap(), vec![3.0, 7.0]);
    }
}
