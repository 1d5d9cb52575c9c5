use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;

use super::{fit, Interactions, LearnerError, LearnerKind, LearnerSpec, Result, Task};
use crate::dataset::{assign_folds, FoldAssignment};
use crate::rng::{derive_seed, Stream};

/// Outcome of a discrete cross-validated selection.
#[derive(Debug, Clone)]
pub struct CvSelection {
    pub index: usize,
    pub spec: LearnerSpec,
    /// Pooled held-out mean squared error per candidate, in input order.
    pub cv_mse: Vec<f64>,
    pub folds: FoldAssignment,
}

/// Candidate library of the `cv-ensemble` learner: the parametric model
/// for the task with and without pairwise interactions, a regression tree
/// and a random forest. Tree and forest inherit `base`'s hyperparameters.
pub fn default_library(base: &LearnerSpec, task: Task) -> Vec<LearnerSpec> {
    let parametric = match task {
        Task::Probability => LearnerKind::Logistic,
        Task::Regression => LearnerKind::Linear,
    };
    let mut out = Vec::with_capacity(4);
    for inter in [Interactions::None, Interactions::Pairwise] {
        let mut s = base.clone();
        s.kind = parametric;
        s.params.interactions = inter;
        out.push(s);
    }
    for kind in [LearnerKind::Tree, LearnerKind::Forest] {
        let mut s = base.clone();
        s.kind = kind;
        out.push(s);
    }
    out
}

/// Pick the candidate with the smallest `folds`-fold cross-validated MSE.
/// Ties go to the earlier candidate.
pub fn cv_select(
    candidates: &[LearnerSpec],
    features: ArrayView2<'_, f64>,
    targets: &[f64],
    task: Task,
    folds: usize,
    seed: u64,
) -> Result<CvSelection> {
    if candidates.is_empty() {
        return Err(LearnerError::EmptyCandidates);
    }
    super::validate_training(features, targets, task)?;
    let n = targets.len();
    if folds < 2 || folds > n {
        return Err(LearnerError::InvalidFolds { folds, n });
    }
    let assignment = assign_folds(n, folds, derive_seed(seed, Stream::CrossValidation, 0))
        .map_err(|_| LearnerError::InvalidFolds { folds, n })?;

    let cells: Vec<(usize, usize)> = (0..candidates.len()).flat_map(|c| (1..=folds).map(move |k| (c, k))).collect();
    let sse: Vec<f64> = cells
        .par_iter()
        .map(|&(c, k)| -> Result<f64> {
            let train = assignment.train_units(k);
            let test = assignment.test_units(k);
            let y_train: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
            let model = fit(&candidates[c], features.select(Axis(0), &train).view(), &y_train, task)?;
            let pred = model.predict(features.select(Axis(0), &test).view())?;
            Ok(test.iter().zip(pred).map(|(&i, p)| (targets[i] - p).powi(2)).sum())
        })
        .collect::<Result<_>>()?;

    let cv_mse: Vec<f64> = sse.chunks(folds).map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut index = 0;
    for (c, &m) in cv_mse.iter().enumerate() {
        if m < cv_mse[index] {
            index = c;
        }
    }
    Ok(CvSelection { index, spec: candidates[index].clone(), cv_mse, folds: assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn linear_data(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 1), |_| rng.sample::<f64, _>(StandardNormal));
        let y = x.column(0).iter().map(|v| 2.0 * v + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        (x, y)
    }

    fn stump() -> LearnerSpec {
        let mut s = LearnerSpec::new(LearnerKind::Tree);
        s.params.max_depth = Some(1);
        s
    }

    /// Held-out MSE computed by hand from the reported fold labels.
    fn brute_force_mse(spec: &LearnerSpec, x: &Array2<f64>, y: &[f64], labels: &[usize], k: usize) -> f64 {
        let mut total = 0.0;
        for fold in 1..=k {
            let mut xt = Vec::new();
            let mut yt = Vec::new();
            for i in 0..y.len() {
                if labels[i] != fold {
                    xt.push(x[[i, 0]]);
                    yt.push(y[i]);
                }
            }
            let xt = Array2::from_shape_vec((yt.len(), 1), xt).unwrap();
            let m = fit(spec, xt.view(), &yt, Task::Regression).unwrap();
            for i in 0..y.len() {
                if labels[i] == fold {
                    let p = m.predict(x.slice(ndarray::s![i..i + 1, ..])).unwrap()[0];
                    total += (y[i] - p).powi(2);
                }
            }
        }
        total / y.len() as f64
    }

    #[test]
    fn linear_beats_stump_on_linear_signal() {
        let (x, y) = linear_data(200, 3);
        let candidates = vec![LearnerSpec::new(LearnerKind::Linear), stump()];
        let sel = cv_select(&candidates, x.view(), &y, Task::Regression, 5, 17).unwrap();
        assert_eq!(sel.index, 0);
        for (c, spec) in candidates.iter().enumerate() {
            let oracle = brute_force_mse(spec, &x, &y, sel.folds.labels(), 5);
            assert!((oracle - sel.cv_mse[c]).abs() < 1e-12 * oracle.max(1.0));
        }
        assert!(sel.cv_mse[0] < 0.15 && sel.cv_mse[1] > 0.5, "{:?}", sel.cv_mse);
    }

    #[test]
    fn single_candidate_and_determinism() {
        let (x, y) = linear_data(50, 1);
        let only = vec![stump()];
        assert_eq!(cv_select(&only, x.view(), &y, Task::Regression, 2, 0).unwrap().spec, stump());
        let lib = default_library(&LearnerSpec::new(LearnerKind::CvEnsemble).with_seed(4), Task::Regression);
        let a = cv_select(&lib[..3], x.view(), &y, Task::Regression, 5, 9).unwrap();
        let b = cv_select(&lib[..3], x.view(), &y, Task::Regression, 5, 9).unwrap();
        assert_eq!(a.index, b.index);
        assert_eq!(a.cv_mse, b.cv_mse);
    }

    #[test]
    fn ties_keep_list_order() {
        let (x, y) = linear_data(30, 2);
        let lin = LearnerSpec::new(LearnerKind::Linear);
        let sel = cv_select(&[lin.clone().with_seed(1), lin.with_seed(2)], x.view(), &y, Task::Regression, 3, 0).unwrap();
        assert_eq!(sel.index, 0);
    }

    #[test]
    fn errors() {
        let (x, y) = linear_data(10, 0);
        assert!(matches!(cv_select(&[], x.view(), &y, Task::Regression, 2, 0), Err(LearnerError::EmptyCandidates)));
        let lin = [LearnerSpec::new(LearnerKind::Linear)];
        assert!(matches!(cv_select(&lin, x.view(), &y, Task::Regression, 1, 0), Err(LearnerError::InvalidFolds { .. })));
    }

    #[test]
    fn library_shape() {
        let lib = default_library(&LearnerSpec::new(LearnerKind::CvEnsemble), Task::Probability);
        let kinds: Vec<_> = lib.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, vec![LearnerKind::Logistic, LearnerKind::Logistic, LearnerKind::Tree, LearnerKind::Forest]);
        assert_eq!(lib[1].params.interactions, Interactions::Pairwise);
    }
}
