use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;

use super::{Hyperparameters, RegressionTree};
use crate::rng::{rng_for, Stream};

/// Bagged CART trees with per-split feature subsampling. Tree `b` draws
/// from its own stream derived from `(seed, b)`, so the fitted forest does
/// not depend on how trees are scheduled across threads.
#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64], params: &Hyperparameters, seed: u64) -> Self {
        let n = y.len();
        let p = x.ncols();
        let mtry = params
            .max_features
            .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
            .min(p.max(1));
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng_for(seed, Stream::Forest, b as u64);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit_rows(x, y, rows, params.max_depth, params.min_leaf, Some((mtry, &mut rng)))
            })
            .collect();
        Self { trees }
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let k = self.trees.len() as f64;
        x.rows()
            .into_iter()
            .map(|r| self.trees.iter().map(|t| t.predict_row(|j| r[j])).sum::<f64>() / k)
            .collect()
    }
}
