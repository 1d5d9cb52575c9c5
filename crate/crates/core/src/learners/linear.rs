//! Linear least squares and logistic regression (IRLS) on standardized,
//! optionally interaction-expanded designs.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};

use super::{LearnerError, PROBABILITY_CLIP};

/// Ridge jitter on the logistic Hessian.
const HESSIAN_JITTER: f64 = 1e-8;
const MAX_IRLS_ITERATIONS: usize = 100;
const GRADIENT_TOLERANCE: f64 = 1e-8;

/// Product terms added to the raw features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interactions {
    None,
    /// Every product `x_i * x_j` with `i < j`.
    Pairwise,
    /// The last column times each other column. With `(H_t, A_t)` designs
    /// this is a treatment-by-history interaction model.
    LastColumn,
}

impl fmt::Display for Interactions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Pairwise => "pairwise",
            Self::LastColumn => "last",
        })
    }
}

impl FromStr for Interactions {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "pairwise" => Ok(Self::Pairwise),
            "last" | "treatment" => Ok(Self::LastColumn),
            _ => Err(LearnerError::Parse(format!("interactions={s}"))),
        }
    }
}

fn expand(x: ArrayView2<'_, f64>, interactions: Interactions) -> Array2<f64> {
    let p = x.ncols();
    let pairs: Vec<(usize, usize)> = match interactions {
        Interactions::None => Vec::new(),
        Interactions::Pairwise => (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect(),
        Interactions::LastColumn if p >= 2 => (0..p - 1).map(|i| (i, p - 1)).collect(),
        Interactions::LastColumn => Vec::new(),
    };
    let mut out = Array2::zeros((x.nrows(), p + pairs.len()));
    for (r, row) in x.rows().into_iter().enumerate() {
        for j in 0..p {
            out[[r, j]] = row[j];
        }
        for (k, &(i, j)) in pairs.iter().enumerate() {
            out[[r, p + k]] = row[i] * row[j];
        }
    }
    out
}

/// Column centering and scaling learned on the training design.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(z: &Array2<f64>) -> Self {
        let n = z.nrows() as f64;
        let mut mean = Vec::with_capacity(z.ncols());
        let mut scale = Vec::with_capacity(z.ncols());
        for col in z.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    fn apply(&self, z: &mut Array2<f64>) {
        for (j, mut col) in z.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
    }
}

fn solve_spd(mut a: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    let mut jitter = 0.0;
    loop {
        if let Some(chol) = a.clone().cholesky() {
            return chol.solve(&b);
        }
        // Only reached for numerically singular designs.
        let bump = if jitter == 0.0 { 1e-10 * (1.0 + a.diagonal().amax()) } else { jitter * 10.0 };
        for i in 0..a.nrows() {
            a[(i, i)] += bump - jitter;
        }
        jitter = bump;
    }
}

/// Least squares with an unpenalized intercept and a ridge penalty on the
/// standardized slopes.
#[derive(Debug, Clone)]
pub struct LinearModel {
    interactions: Interactions,
    standardizer: Standardizer,
    intercept: f64,
    slopes: Vec<f64>,
}

impl LinearModel {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64], interactions: Interactions, ridge: f64) -> Self {
        let mut z = expand(x, interactions);
        let standardizer = Standardizer::fit(&z);
        standardizer.apply(&mut z);
        let n = y.len();
        let q = z.ncols();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let slopes = if q == 0 {
            Vec::new()
        } else {
            let zm = DMatrix::from_row_iterator(n, q, z.iter().copied());
            let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
            let mut gram = zm.tr_mul(&zm);
            for i in 0..q {
                gram[(i, i)] += ridge;
            }
            solve_spd(gram, zm.tr_mul(&yc)).iter().copied().collect()
        };
        Self { interactions, standardizer, intercept: y_mean, slopes }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut z = expand(x, self.interactions);
        self.standardizer.apply(&mut z);
        z.rows()
            .into_iter()
            .map(|r| self.intercept + r.iter().zip(&self.slopes).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Coefficients on the original feature scale, intercept first.
    pub fn coefficients(&self) -> Vec<f64> {
        unstandardize(self.intercept, &self.slopes, &self.standardizer)
    }
}

fn unstandardize(intercept: f64, slopes: &[f64], s: &Standardizer) -> Vec<f64> {
    let mut b0 = intercept;
    let mut out = vec![0.0];
    for (j, &b) in slopes.iter().enumerate() {
        out.push(b / s.scale[j]);
        b0 -= b * s.mean[j] / s.scale[j];
    }
    out[0] = b0;
    out
}

fn expit(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression fitted by Newton/IRLS.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    interactions: Interactions,
    standardizer: Standardizer,
    /// Intercept first, then standardized slopes.
    beta: Vec<f64>,
    pub iterations: usize,
    /// Euclidean norm of the mean log-likelihood gradient at the last iterate.
    pub gradient_norm: f64,
    pub converged: bool,
}

impl LogisticFit {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64], interactions: Interactions) -> Self {
        let mut z = expand(x, interactions);
        let standardizer = Standardizer::fit(&z);
        standardizer.apply(&mut z);
        let n = y.len();
        let q = z.ncols() + 1;
        let design = DMatrix::from_fn(n, q, |i, j| if j == 0 { 1.0 } else { z[[i, j - 1]] });
        let target = DVector::from_column_slice(y);

        let y_mean = (target.sum() / n as f64).clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP);
        let mut beta = DVector::zeros(q);
        beta[0] = (y_mean / (1.0 - y_mean)).ln();

        let loglik = |b: &DVector<f64>| -> f64 {
            let eta = &design * b;
            eta.iter()
                .zip(target.iter())
                .map(|(&e, &t)| t * e - if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() })
                .sum::<f64>()
                / n as f64
        };

        let mut iterations = 0;
        let mut gradient_norm = f64::INFINITY;
        let mut converged = false;
        let mut current = loglik(&beta);
        while iterations < MAX_IRLS_ITERATIONS {
            let eta = &design * &beta;
            let prob = eta.map(expit);
            let resid = &target - &prob;
            let gradient = design.tr_mul(&resid) / n as f64;
            gradient_norm = gradient.norm();
            if gradient_norm <= GRADIENT_TOLERANCE {
                converged = true;
                break;
            }
            let weights = prob.map(|p| p * (1.0 - p));
            let mut weighted = design.clone();
            for (i, mut row) in weighted.row_iter_mut().enumerate() {
                row *= weights[i];
            }
            let mut hessian = design.tr_mul(&weighted) / n as f64;
            for i in 0..q {
                hessian[(i, i)] += HESSIAN_JITTER;
            }
            let step = solve_spd(hessian, gradient);
            iterations += 1;

            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let candidate = &beta + &step * scale;
                if candidate.iter().all(|v| v.is_finite()) {
                    let value = loglik(&candidate);
                    if value.is_finite() && value >= current - 1e-12 {
                        beta = candidate;
                        current = value;
                        accepted = true;
                        break;
                    }
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Self {
            interactions,
            standardizer,
            beta: beta.iter().copied().collect(),
            iterations,
            gradient_norm,
            converged,
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut z = expand(x, self.interactions);
        self.standardizer.apply(&mut z);
        z.rows()
            .into_iter()
            .map(|r| {
                let eta = self.beta[0] + r.iter().zip(&self.beta[1..]).map(|(a, b)| a * b).sum::<f64>();
                expit(eta).clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP)
            })
            .collect()
    }

    /// Coefficients on the original feature scale, intercept first.
    pub fn coefficients(&self) -> Vec<f64> {
        unstandardize(self.beta[0], &self.beta[1..], &self.standardizer)
    }
}
