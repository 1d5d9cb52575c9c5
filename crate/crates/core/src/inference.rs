//! Variance, pointwise intervals, multiplier-bootstrap uniform bands and
//! the test of no incremental effect.

use std::io::Write;

use ndarray::{Array2, Axis};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::estimators::InfluenceMatrix;
use crate::rng::{rng_for, Stream};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("variance needs at least two units, got {0}")]
    TooFewUnits(usize),
    #[error("estimated standard deviation is zero (or not finite) at delta {0}")]
    ZeroVariance(f64),
    #[error("bootstrap replications must be positive")]
    InvalidB,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, InferenceError>;

/// Replications processed together in one matrix product.
const BOOTSTRAP_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Multipliers {
    #[default]
    Rademacher,
    Gaussian,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(InferenceError::InvalidAlpha(alpha))
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `sigma_hat^2(delta) = mean_i (phi_i - psi_hat)^2` for every column.
pub fn variance_hat(influence: &InfluenceMatrix, psi_hat: &[f64]) -> Result<Vec<f64>> {
    let n = influence.n_units();
    if n < 2 {
        return Err(InferenceError::TooFewUnits(n));
    }
    if psi_hat.len() != influence.values.ncols() {
        return Err(InferenceError::DimensionMismatch(format!(
            "{} estimates for {} columns",
            psi_hat.len(),
            influence.values.ncols()
        )));
    }
    Ok(influence
        .values
        .columns()
        .into_iter()
        .zip(psi_hat)
        .map(|(col, &m)| col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64)
        .collect())
}

/// `psi_hat +- z_{1 - alpha/2} * sigma_hat / sqrt(n)`.
pub fn pointwise_ci(psi_hat: &[f64], sigma_hat: &[f64], n: usize, alpha: f64) -> Result<Vec<(f64, f64)>> {
    check_alpha(alpha)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok(band(psi_hat, sigma_hat, n, z))
}

fn band(psi_hat: &[f64], sigma_hat: &[f64], n: usize, multiplier: f64) -> Vec<(f64, f64)> {
    let root_n = (n as f64).sqrt();
    psi_hat
        .iter()
        .zip(sigma_hat)
        .map(|(&p, &s)| {
            let half = multiplier * s / root_n;
            (p - half, p + half)
        })
        .collect()
}

/// Type-7 sample quantile (linear interpolation between order statistics)
/// of ascending `sorted` values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    /// Supremum statistic of each replication, in replication order.
    pub sup_draws: Vec<f64>,
    sorted: Vec<f64>,
}

impl BootstrapDraws {
    /// `1 - alpha` quantile of the supremum draws.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        quantile_sorted(&self.sorted, 1.0 - alpha)
    }

    /// Fraction of draws at or above `c`.
    pub fn tail_fraction(&self, c: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v < c);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }
}

/// Draws of `sup_delta |sqrt(n) * mean_i xi_i (phi_i - psi_hat) / sigma_hat|`.
/// Replication `b` draws its multipliers from a stream derived from
/// `(seed, b)`.
pub fn bootstrap_sup_draws(
    influence: &InfluenceMatrix,
    psi_hat: &[f64],
    sigma_hat: &[f64],
    reps: usize,
    seed: u64,
    multipliers: Multipliers,
) -> Result<BootstrapDraws> {
    if reps == 0 {
        return Err(InferenceError::InvalidB);
    }
    let (n, g) = influence.values.dim();
    if psi_hat.len() != g || sigma_hat.len() != g {
        return Err(InferenceError::DimensionMismatch("estimates and influence columns differ".into()));
    }
    for (j, &s) in sigma_hat.iter().enumerate() {
        if !(s.is_finite() && s > 0.0) {
            return Err(InferenceError::ZeroVariance(influence.deltas[j]));
        }
    }
    let mut standardized = influence.values.clone();
    for (j, mut col) in standardized.axis_iter_mut(Axis(1)).enumerate() {
        let (m, s) = (psi_hat[j], sigma_hat[j]);
        col.mapv_inplace(|v| (v - m) / s);
    }
    let root_n = (n as f64).sqrt();
    let blocks = reps.div_ceil(BOOTSTRAP_BLOCK);
    let sup_draws: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|block| {
            let start = block * BOOTSTRAP_BLOCK;
            let rows = BOOTSTRAP_BLOCK.min(reps - start);
            let mut xi = Array2::<f64>::zeros((rows, n));
            for (r, mut row) in xi.rows_mut().into_iter().enumerate() {
                let mut rng = rng_for(seed, Stream::Bootstrap, (start + r) as u64);
                match multipliers {
                    Multipliers::Rademacher => {
                        let mut bits = 0u64;
                        for (i, v) in row.iter_mut().enumerate() {
                            if i % 64 == 0 {
                                bits = rng.next_u64();
                            }
                            *v = if bits & 1 == 1 { 1.0 } else { -1.0 };
                            bits >>= 1;
                        }
                    }
                    Multipliers::Gaussian => row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
                }
            }
            let sums = xi.dot(&standardized);
            sums.rows()
                .into_iter()
                .map(|r| r.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) / root_n)
                .collect::<Vec<_>>()
        })
        .collect();
    let mut sorted = sup_draws.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapDraws { sup_draws, sorted })
}

/// Critical value `c_alpha` and the underlying supremum draws.
pub fn multiplier_bootstrap(
    influence: &InfluenceMatrix,
    psi_hat: &[f64],
    sigma_hat: &[f64],
    reps: usize,
    alpha: f64,
    seed: u64,
    multipliers: Multipliers,
) -> Result<(f64, BootstrapDraws)> {
    check_alpha(alpha)?;
    let draws = bootstrap_sup_draws(influence, psi_hat, sigma_hat, reps, seed, multipliers)?;
    Ok((draws.critical_value(alpha), draws))
}

/// Smallest band multiplier `c >= 0` at which a horizontal line fits
/// inside `psi_hat +- c * sigma_hat / sqrt(n)`. Infinite when no band
/// width admits one.
pub fn flat_line_multiplier(psi_hat: &[f64], sigma_hat: &[f64], n: usize) -> f64 {
    let root_n = (n as f64).sqrt();
    let mut c_star = 0.0f64;
    for (j, (&pj, &sj)) in psi_hat.iter().zip(sigma_hat).enumerate() {
        for (&pk, &sk) in psi_hat[j + 1..].iter().zip(&sigma_hat[j + 1..]) {
            let gap = (pj - pk).abs();
            if gap == 0.0 {
                continue;
            }
            let width = (sj + sk) / root_n;
            if width == 0.0 {
                return f64::INFINITY;
            }
            c_star = c_star.max(gap / width);
        }
    }
    c_star
}

/// p-value for `H0: psi(delta)` constant over the grid: the largest level
/// at which the uniform band still contains a horizontal line, computed as
/// the share of bootstrap suprema at or above [`flat_line_multiplier`].
pub fn no_effect_pvalue(psi_hat: &[f64], sigma_hat: &[f64], n: usize, draws: &BootstrapDraws) -> f64 {
    let c_star = flat_line_multiplier(psi_hat, sigma_hat, n);
    if c_star.is_infinite() {
        return 0.0;
    }
    draws.tail_fraction(c_star)
}

/// Estimated curve with both bands and the no-effect test.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectCurve {
    pub deltas: Vec<f64>,
    pub psi_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub pointwise: Vec<(f64, f64)>,
    pub uniform: Vec<(f64, f64)>,
    pub c_alpha: f64,
    pub p_value_no_effect: f64,
    pub alpha: f64,
    pub n: usize,
    pub bootstrap_reps: usize,
    pub seed: u64,
}

impl EffectCurve {
    /// Does the uniform band contain `truth` at every grid point?
    pub fn covers(&self, truth: &[f64]) -> bool {
        self.uniform.iter().zip(truth).all(|(&(lo, hi), &v)| lo <= v && v <= hi)
    }

    /// Columns `delta,est,se,pt_lo,pt_hi,unif_lo,unif_hi`; `se` is
    /// `sigma_hat / sqrt(n)`.
    pub fn write_curve_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["delta", "est", "se", "pt_lo", "pt_hi", "unif_lo", "unif_hi"])?;
        let root_n = (self.n as f64).sqrt();
        for j in 0..self.deltas.len() {
            w.write_record(
                [
                    self.deltas[j],
                    self.psi_hat[j],
                    self.sigma_hat[j] / root_n,
                    self.pointwise[j].0,
                    self.pointwise[j].1,
                    self.uniform[j].0,
                    self.uniform[j].1,
                ]
                .map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `alpha,c_alpha,p_value,n,B,seed`.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["alpha", "c_alpha", "p_value", "n", "B", "seed"])?;
        w.write_record([
            self.alpha.to_string(),
            self.c_alpha.to_string(),
            self.p_value_no_effect.to_string(),
            self.n.to_string(),
            self.bootstrap_reps.to_string(),
            self.seed.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Variance, both bands and the no-effect p-value from an influence matrix
/// and its point estimates.
pub fn effect_curve(
    influence: &InfluenceMatrix,
    psi_hat: &[f64],
    alpha: f64,
    reps: usize,
    seed: u64,
    multipliers: Multipliers,
) -> Result<EffectCurve> {
    let n = influence.n_units();
    let sigma_hat: Vec<f64> = variance_hat(influence, psi_hat)?.into_iter().map(f64::sqrt).collect();
    let pointwise = pointwise_ci(psi_hat, &sigma_hat, n, alpha)?;
    let (c_alpha, draws) = multiplier_bootstrap(influence, psi_hat, &sigma_hat, reps, alpha, seed, multipliers)?;
    let uniform = band(psi_hat, &sigma_hat, n, c_alpha);
    let p_value_no_effect = no_effect_pvalue(psi_hat, &sigma_hat, n, &draws);
    Ok(EffectCurve {
        deltas: influence.deltas.clone(),
        psi_hat: psi_hat.to_vec(),
        sigma_hat,
        pointwise,
        uniform,
        c_alpha,
        p_value_no_effect,
        alpha,
        n,
        bootstrap_reps: reps,
        seed,
    })
}
