//! The incremental shift of propensity scores, increment grids, and
//! Monte Carlo ground truth for simulated data-generating processes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::LongitudinalDataset;
use crate::rng::{rng_for, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterventionError {
    #[error("increment must be a finite positive number, got {0}")]
    DeltaNonPositive(f64),
    #[error("propensity score {0} is outside [0, 1]")]
    PiOutOfRange(f64),
    #[error("invalid grid bounds: {0}")]
    InvalidBounds(String),
    #[error("increment {delta} lies outside the configured range [{lo}, {hi}]")]
    DeltaOutOfBounds { delta: f64, lo: f64, hi: f64 },
    #[error("grid values must be strictly increasing")]
    UnsortedGrid,
}

pub type Result<T> = std::result::Result<T, InterventionError>;

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.0 {
        Ok(())
    } else {
        Err(InterventionError::DeltaNonPositive(delta))
    }
}

/// Propensity after multiplying the odds of treatment by `delta`:
/// `delta * pi / (delta * pi + 1 - pi)`. Scores of exactly 0 or 1 stay put.
pub fn shift_propensity(pi: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(0.0..=1.0).contains(&pi) {
        return Err(InterventionError::PiOutOfRange(pi));
    }
    Ok(shift_unchecked(pi, delta))
}

#[inline]
pub(crate) fn shift_unchecked(pi: f64, delta: f64) -> f64 {
    if delta == 1.0 {
        pi
    } else {
        delta * pi / (delta * pi + (1.0 - pi))
    }
}

/// Strictly increasing, strictly positive increments within `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaGrid {
    values: Vec<f64>,
    bounds: (f64, f64),
}

impl DeltaGrid {
    /// Grid whose bounds are its own endpoints.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let (lo, hi) = match (values.first(), values.last()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => return Err(InterventionError::InvalidBounds("empty grid".into())),
        };
        Self::with_bounds(values, (lo, hi))
    }

    /// Grid restricted to a declared range; values outside it are rejected
    /// rather than extrapolated.
    pub fn with_bounds(values: Vec<f64>, bounds: (f64, f64)) -> Result<Self> {
        let (lo, hi) = bounds;
        check_delta(lo).and(check_delta(hi)).map_err(|_| {
            InterventionError::InvalidBounds(format!("bounds ({lo}, {hi}) must be finite and positive"))
        })?;
        if lo > hi {
            return Err(InterventionError::InvalidBounds(format!("lower bound {lo} exceeds upper bound {hi}")));
        }
        if values.is_empty() {
            return Err(InterventionError::InvalidBounds("empty grid".into()));
        }
        for &d in &values {
            check_delta(d)?;
            if d < lo || d > hi {
                return Err(InterventionError::DeltaOutOfBounds { delta: d, lo, hi });
            }
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(InterventionError::UnsortedGrid);
        }
        Ok(Self { values, bounds })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of `delta` in the grid, or an error when it is out of range.
    pub fn position(&self, delta: f64) -> Result<Option<usize>> {
        let (lo, hi) = self.bounds;
        if !(lo..=hi).contains(&delta) {
            return Err(InterventionError::DeltaOutOfBounds { delta, lo, hi });
        }
        Ok(self.values.iter().position(|&d| d == delta))
    }
}

/// `points` increments equally spaced on the log scale, endpoints included.
/// A point within rounding error of 1 is set to exactly 1, so symmetric
/// grids contain the observational regime.
pub fn log_delta_grid(min: f64, max: f64, points: usize) -> Result<DeltaGrid> {
    if !(min.is_finite() && max.is_finite() && min > 0.0 && min <= max) {
        return Err(InterventionError::InvalidBounds(format!("need 0 < min <= max, got ({min}, {max})")));
    }
    match points {
        0 => Err(InterventionError::InvalidBounds("at least one point is required".into())),
        1 if min == max => DeltaGrid::new(vec![min]),
        1 => Err(InterventionError::InvalidBounds("a single point needs min == max".into())),
        _ if min == max => Err(InterventionError::InvalidBounds("several points need min < max".into())),
        _ => {
            let (a, b) = (min.ln(), max.ln());
            let step = (b - a) / (points - 1) as f64;
            let mut values: Vec<f64> = (0..points)
                .map(|k| a + step * k as f64)
                .map(|l| if l.abs() <= 1e-12 * (b - a) { 1.0 } else { l.exp() })
                .collect();
            values[0] = min;
            values[points - 1] = max;
            DeltaGrid::new(values)
        }
    }
}

/// A simulated longitudinal data-generating process. Time indices are
/// 1-based; `x` and `a` slices hold everything drawn so far, oldest first.
pub trait Dgp: Send + Sync {
    fn name(&self) -> &str;
    fn n_times(&self) -> usize;
    fn sample_covariates(&self, t: usize, x: &[Vec<f64>], a: &[u8], rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// `P(A_t = 1 | H_t)`; `x` has length `t`, `a` length `t - 1`.
    fn propensity(&self, t: usize, x: &[Vec<f64>], a: &[u8]) -> f64;
    /// `E(Y | H_T, A_T)`; `x` and `a` both have length `T`.
    fn outcome_mean(&self, x: &[Vec<f64>], a: &[u8]) -> f64;
    fn outcome_sd(&self) -> f64;
    /// Covariates an analyst sees at time `t`; identity unless the process
    /// reports transformed covariates.
    fn observe(&self, _t: usize, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// Draw an observational dataset of `n` units.
pub fn simulate_dataset(dgp: &dyn Dgp, n: usize, seed: u64) -> LongitudinalDataset {
    let t_max = dgp.n_times();
    let mut rng = rng_for(seed, Stream::Simulation, 0);
    let mut blocks: Vec<Vec<f64>> = vec![Vec::new(); t_max];
    let mut dims = vec![0; t_max];
    let mut treatments = ndarray::Array2::<u8>::zeros((n, t_max));
    let mut outcomes = Vec::with_capacity(n);
    for i in 0..n {
        let mut x: Vec<Vec<f64>> = Vec::with_capacity(t_max);
        let mut a: Vec<u8> = Vec::with_capacity(t_max);
        for t in 1..=t_max {
            let xt = dgp.sample_covariates(t, &x, &a, &mut rng);
            x.push(xt);
            let pi = dgp.propensity(t, &x, &a);
            let at = u8::from(rng.random::<f64>() < pi);
            a.push(at);
            treatments[[i, t - 1]] = at;
            let seen = dgp.observe(t, &x[t - 1]);
            dims[t - 1] = seen.len();
            blocks[t - 1].extend(seen);
        }
        let noise: f64 = rng.sample(rand_distr::StandardNormal);
        outcomes.push(dgp.outcome_mean(&x, &a) + dgp.outcome_sd() * noise);
    }
    let covariates = blocks
        .into_iter()
        .zip(dims)
        .map(|(b, p)| ndarray::Array2::from_shape_vec((n, p), b).expect("fixed dimension per time"))
        .collect();
    LongitudinalDataset::new(covariates, treatments, outcomes).expect("simulated data satisfies the invariants")
}

/// Monte Carlo estimate of `psi(delta)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub delta: f64,
    pub psi: f64,
    pub mc_se: f64,
    pub n_mc: usize,
}

const ORACLE_CHUNK: usize = 1 << 15;

/// Running mean and centred sum of squares, merged in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if self.n == 0.0 {
            return other;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Self { n, mean: self.mean + d * other.n / n, m2: self.m2 + other.m2 + d * d * self.n * other.n / n }
    }

    fn finish(self, delta: f64) -> OracleValue {
        let var = if self.n > 1.0 { self.m2 / (self.n - 1.0) } else { 0.0 };
        OracleValue { delta, psi: self.mean, mc_se: (var / self.n).sqrt(), n_mc: self.n as usize }
    }
}

/// One Monte Carlo draw of the g-formula integrand. Single-timepoint
/// processes average analytically over the shifted treatment; longer ones
/// draw `A_t ~ Bernoulli(q_t)` forward and average the last step
/// analytically.
fn integrand(dgp: &dyn Dgp, deltas: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let t_max = dgp.n_times();
    if t_max == 1 {
        let x = vec![dgp.sample_covariates(1, &[], &[], rng)];
        let pi = dgp.propensity(1, &x, &[]);
        let m1 = dgp.outcome_mean(&x, &[1]);
        let m0 = dgp.outcome_mean(&x, &[0]);
        for (o, &d) in out.iter_mut().zip(deltas) {
            let q = shift_unchecked(pi, d);
            *o = q * m1 + (1.0 - q) * m0;
        }
        return;
    }
    // Covariate draws are shared across increments through a common stream
    // per increment; uniforms for treatment draws are shared too.
    let base = rng.random::<u64>();
    for (o, &d) in out.iter_mut().zip(deltas) {
        let mut local = rng_for(base, Stream::Oracle, 0);
        let mut x: Vec<Vec<f64>> = Vec::with_capacity(t_max);
        let mut a: Vec<u8> = Vec::with_capacity(t_max);
        let mut value = 0.0;
        for t in 1..=t_max {
            let xt = dgp.sample_covariates(t, &x, &a, &mut local);
            x.push(xt);
            let q = shift_unchecked(dgp.propensity(t, &x, &a), d);
            let u: f64 = local.random();
            if t == t_max {
                a.push(1);
                let m1 = dgp.outcome_mean(&x, &a);
                a[t - 1] = 0;
                let m0 = dgp.outcome_mean(&x, &a);
                value = q * m1 + (1.0 - q) * m0;
            } else {
                a.push(u8::from(u < q));
            }
        }
        *o = value;
    }
}

/// Ground truth `psi(delta)` for every grid value, using the same draws
/// for every increment. Chunks of draws use their own derived streams, so
/// the result depends only on `(dgp, deltas, n_mc, seed)`.
pub fn oracle_curve(dgp: &dyn Dgp, deltas: &[f64], n_mc: usize, seed: u64) -> Result<Vec<OracleValue>> {
    for &d in deltas {
        check_delta(d)?;
    }
    let n_mc = n_mc.max(1);
    let chunks = n_mc.div_ceil(ORACLE_CHUNK);
    let partial: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(seed, Stream::Oracle, c as u64);
            let len = ORACLE_CHUNK.min(n_mc - c * ORACLE_CHUNK);
            let mut acc = vec![Moments::default(); deltas.len()];
            let mut buf = vec![0.0; deltas.len()];
            for _ in 0..len {
                integrand(dgp, deltas, &mut rng, &mut buf);
                for (m, &v) in acc.iter_mut().zip(&buf) {
                    m.push(v);
                }
            }
            acc
        })
        .collect();
    Ok(deltas
        .iter()
        .enumerate()
        .map(|(j, &d)| partial.iter().map(|p| p[j]).fold(Moments::default(), Moments::merge).finish(d))
        .collect())
}

/// Ground truth at a single increment.
pub fn oracle_psi(dgp: &dyn Dgp, delta: f64, n_mc: usize, seed: u64) -> Result<OracleValue> {
    Ok(oracle_curve(dgp, &[delta], n_mc, seed)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shift_examples() {
        assert!((shift_propensity(0.5, 1.5).unwrap() - 0.6).abs() < 1e-15);
        assert!((shift_propensity(0.25, 1.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((shift_propensity(0.05, 1.5).unwrap() - 0.0732).abs() < 5e-5);
        assert_eq!(shift_propensity(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(shift_propensity(1.0, 0.2).unwrap(), 1.0);
        assert_eq!(shift_propensity(0.37, 1.0).unwrap(), 0.37);
        assert_eq!(shift_propensity(0.5, 0.0), Err(InterventionError::DeltaNonPositive(0.0)));
        assert!(shift_propensity(0.5, f64::INFINITY).is_err());
        assert_eq!(shift_propensity(1.5, 2.0), Err(InterventionError::PiOutOfRange(1.5)));
    }

    proptest! {
        #[test]
        fn shift_multiplies_odds(pi in 0.001f64..0.999, d1 in 0.01f64..100.0, d2 in 0.01f64..100.0) {
            let q = shift_propensity(pi, d1).unwrap();
            let odds = |p: f64| p / (1.0 - p);
            prop_assert!((odds(q) / odds(pi) / d1 - 1.0).abs() < 1e-9);
            let twice = shift_propensity(q, d2).unwrap();
            prop_assert!((twice - shift_propensity(pi, d1 * d2).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn shift_is_increasing(pi in 0.001f64..0.99, d in 0.01f64..50.0, bump in 1e-3f64..1.0) {
            prop_assert!(shift_propensity(pi, d * (1.0 + bump)).unwrap() > shift_propensity(pi, d).unwrap());
            prop_assert!(shift_propensity(pi + 0.009 * bump, d).unwrap() > shift_propensity(pi, d).unwrap());
        }
    }

    #[test]
    fn log_grid_examples() {
        assert_eq!(log_delta_grid(2.0, 2.0, 1).unwrap().values(), &[2.0]);
        let g = log_delta_grid(1.0, 4.0, 3).unwrap();
        assert_eq!(g.values()[0], 1.0);
        assert!((g.values()[1] - 2.0).abs() < 1e-15);
        assert_eq!(g.values()[2], 4.0);
        let wide = log_delta_grid((-2.3f64).exp(), 2.3f64.exp(), 100).unwrap();
        assert_eq!(wide.len(), 100);
        let ratios: Vec<f64> = wide.values().windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-12));
        assert!(log_delta_grid(0.0, 1.0, 3).is_err());
        assert!(log_delta_grid(2.0, 1.0, 3).is_err());
        assert!(log_delta_grid(1.0, 2.0, 0).is_err());
        assert!(log_delta_grid(1.0, 2.0, 1).is_err());
        assert_eq!(log_delta_grid(0.2, 5.0, 101).unwrap().values()[50], 1.0);
        assert_eq!(log_delta_grid(0.5, 2.0, 3).unwrap().values()[1], 1.0);
    }

    #[test]
    fn grid_validation() {
        assert_eq!(DeltaGrid::new(vec![1.0, 1.0]), Err(InterventionError::UnsortedGrid));
        assert!(DeltaGrid::new(vec![-1.0]).is_err());
        assert!(matches!(
            DeltaGrid::with_bounds(vec![0.5, 20.0], (0.1, 10.0)),
            Err(InterventionError::DeltaOutOfBounds { .. })
        ));
        let g = DeltaGrid::with_bounds(vec![0.5, 2.0], (0.1, 10.0)).unwrap();
        assert_eq!(g.position(2.0).unwrap(), Some(1));
        assert_eq!(g.position(3.0).unwrap(), None);
        assert!(g.position(11.0).is_err());
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let values: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.5 + 200.0).collect();
        let mut whole = Moments::default();
        values.iter().for_each(|&v| whole.push(v));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        values[..333].iter().for_each(|&v| a.push(v));
        values[333..].iter().for_each(|&v| b.push(v));
        let merged = a.merge(b);
        assert!((merged.mean - whole.mean).abs() < 1e-10);
        assert!((merged.m2 - whole.m2).abs() < 1e-6);
    }
}
