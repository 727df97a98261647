//! Credit-weighted expert aggregation.
//!
//! Each action carries a running regret: how much better it has done than
//! the aggregate prediction, optionally discounted so old performance fades.
//! Weights follow a parameter-free rule: actions at or below zero regret get
//! weight zero, and positive-regret actions get weight proportional to
//! `(R/c) * exp(R^2 / 2c)`, where the scale `c > 0` is chosen so that the
//! mean of `exp(R_+^2 / 2c)` over all actions equals Euler's number. That
//! normalization equation has a unique root because the mean is strictly
//! decreasing in `c`; [`HedgeConfig::solve_potential`] finds it by bisection
//! in log space so large exponents never overflow.
//!
//! [`quantile_regret`] reports the aggregate's cumulative loss against the
//! k-th best action, the standard diagnostic for this family of algorithms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-action running regrets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretVector {
    pub regrets: Vec<f64>,
}

impl RegretVector {
    pub fn new(regrets: Vec<f64>) -> Self {
        Self { regrets }
    }

    pub fn len(&self) -> usize {
        self.regrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regrets.is_empty()
    }
}

/// Normalized per-action weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
}

impl WeightVector {
    /// Uniform distribution over `n` actions.
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }
}

/// Inputs for the quantile-regret diagnostic.
#[derive(Debug, Clone)]
pub struct RegretDiagnostics {
    /// Per-action cumulative losses.
    pub cumulative_losses: Vec<f64>,
    /// The aggregate's cumulative loss.
    pub algorithm_loss: f64,
    /// Quantile in (0, 1]; the benchmark is the ceil(quantile * N)-th
    /// smallest cumulative loss.
    pub quantile: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum HedgeError {
    #[error("regret vector is empty")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("all regrets nonpositive: normalization equation has no root")]
    AllNonPositive,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("quantile {0} outside (0, 1]")]
    InvalidQuantile(f64),
}

/// Weighting-rule parameters.
///
/// `discount` is the per-round fade factor alpha in
/// `R_t = (1 - alpha) R_{t-1} + (l_A - l_i)`; `alpha = 0` accumulates
/// regret without discounting. `solver_tolerance` bounds the relative
/// residual of the normalization equation at the returned scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeConfig {
    pub discount: f64,
    pub solver_tolerance: f64,
}

impl HedgeConfig {
    pub const DEFAULT_TOLERANCE: f64 = 1e-10;

    pub fn new(discount: f64, solver_tolerance: f64) -> Result<Self, HedgeError> {
        if !(0.0..=1.0).contains(&discount) {
            return Err(HedgeError::InvalidConfig(format!(
                "discount {discount} outside [0, 1]"
            )));
        }
        if !(solver_tolerance > 0.0) {
            return Err(HedgeError::InvalidConfig(format!(
                "solver tolerance {solver_tolerance} must be positive"
            )));
        }
        Ok(Self {
            discount,
            solver_tolerance,
        })
    }

    /// Undiscounted accounting with the default solver tolerance.
    pub fn undiscounted() -> Self {
        Self {
            discount: 0.0,
            solver_tolerance: Self::DEFAULT_TOLERANCE,
        }
    }

    /// Solves `(1/N) sum_i exp(clamp(R_i)^2 / 2c) = e` for `c > 0`.
    ///
    /// Requires at least one positive regret; otherwise the left side is
    /// below `e` for every `c` and there is no root.
    pub fn solve_potential(&self, regrets: &RegretVector) -> Result<f64, HedgeError> {
        let half_squares = positive_half_squares(&regrets.regrets)?;
        let s_max = half_squares.iter().cloned().fold(0.0f64, f64::max);
        if s_max <= 0.0 {
            return Err(HedgeError::AllNonPositive);
        }
        Ok(bisect_scale(&half_squares, s_max, self.solver_tolerance))
    }

    /// The weight rule: zero on nonpositive regrets, otherwise proportional
    /// to `(R/c) exp(R^2 / 2c)` at the solved scale. Falls back to uniform
    /// weights when every regret is nonpositive.
    pub fn compute_weights(&self, regrets: &RegretVector) -> Result<WeightVector, HedgeError> {
        let half_squares = positive_half_squares(&regrets.regrets)?;
        let s_max = half_squares.iter().cloned().fold(0.0f64, f64::max);
        if s_max <= 0.0 {
            return Ok(WeightVector::uniform(regrets.len()));
        }
        let c = bisect_scale(&half_squares, s_max, self.solver_tolerance);
        // Shared exponent shift: the largest exponent becomes 0, so exp never
        // overflows and the normalization cancels the shift.
        let shift = s_max / c;
        let mut weights: Vec<f64> = regrets
            .regrets
            .iter()
            .zip(&half_squares)
            .map(|(&r, &s)| {
                if r > 0.0 {
                    (r / c) * (s / c - shift).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(WeightVector { weights })
    }

    /// One accounting round: returns the discounted regret update
    /// `R'_i = (1 - alpha) R_i + (l_A - l_i)` and the aggregate loss
    /// `l_A = sum_i w_i l_i` computed with the supplied (previous-round)
    /// weights.
    pub fn update_regrets(
        &self,
        regrets: &RegretVector,
        losses: &[f64],
        weights: &WeightVector,
    ) -> Result<(RegretVector, f64), HedgeError> {
        let n = regrets.len();
        if n == 0 {
            return Err(HedgeError::Empty);
        }
        if losses.len() != n {
            return Err(HedgeError::LengthMismatch {
                left: n,
                right: losses.len(),
            });
        }
        if weights.weights.len() != n {
            return Err(HedgeError::LengthMismatch {
                left: n,
                right: weights.weights.len(),
            });
        }
        if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
            return Err(HedgeError::NonFinite(i));
        }
        let algorithm_loss: f64 = weights
            .weights
            .iter()
            .zip(losses)
            .map(|(w, l)| w * l)
            .sum();
        let keep = 1.0 - self.discount;
        let updated: Vec<f64> = regrets
            .regrets
            .iter()
            .zip(losses)
            .map(|(&r, &l)| keep * r + (algorithm_loss - l))
            .collect();
        Ok((RegretVector::new(updated), algorithm_loss))
    }
}

/// Aggregate loss minus the k-th smallest cumulative action loss, with
/// `k = ceil(quantile * N)`.
pub fn quantile_regret(diag: &RegretDiagnostics) -> Result<f64, HedgeError> {
    let n = diag.cumulative_losses.len();
    if n == 0 {
        return Err(HedgeError::Empty);
    }
    if !(diag.quantile > 0.0 && diag.quantile <= 1.0) {
        return Err(HedgeError::InvalidQuantile(diag.quantile));
    }
    if let Some(i) = diag.cumulative_losses.iter().position(|l| !l.is_finite()) {
        return Err(HedgeError::NonFinite(i));
    }
    let mut sorted = diag.cumulative_losses.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
    let k = ((diag.quantile * n as f64).ceil() as usize).clamp(1, n);
    Ok(diag.algorithm_loss - sorted[k - 1])
}

/// `clamp(R_i)^2 / 2` per action, validating finiteness.
fn positive_half_squares(regrets: &[f64]) -> Result<Vec<f64>, HedgeError> {
    if regrets.is_empty() {
        return Err(HedgeError::Empty);
    }
    if let Some(i) = regrets.iter().position(|r| !r.is_finite()) {
        return Err(HedgeError::NonFinite(i));
    }
    Ok(regrets.iter().map(|&r| r.max(0.0).powi(2) / 2.0).collect())
}

/// `ln((1/N) sum_i exp(s_i / c))` with the usual max-shift; `+inf` when the
/// shifted exponent itself overflows (tiny `c`), which bisection treats as
/// "potential too large".
fn log_mean_exp(half_squares: &[f64], c: f64) -> f64 {
    let m = half_squares
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &s| acc.max(s / c));
    if !m.is_finite() {
        return f64::INFINITY;
    }
    let sum: f64 = half_squares.iter().map(|&s| (s / c - m).exp()).sum();
    m + sum.ln() - (half_squares.len() as f64).ln()
}

/// Bisection for the normalization scale. `g(c) = ln(mean exp) - 1` is
/// strictly decreasing with `g(0+) = +inf` and `g(inf) < 0`, and
/// `c = s_max` has `g <= 0` (equality exactly when all positive regrets
/// tie), so it seeds the upper bracket.
fn bisect_scale(half_squares: &[f64], s_max: f64, tolerance: f64) -> f64 {
    let residual = |c: f64| (log_mean_exp(half_squares, c) - 1.0).exp_m1();

    let mut hi = s_max;
    // Mathematically g(s_max) <= 0; expand defensively against rounding.
    while residual(hi) > tolerance {
        hi *= 2.0;
    }
    if residual(hi).abs() <= tolerance {
        // Covers the all-equal case exactly: c = r^2 / 2.
        return hi;
    }
    let mut lo = hi / 2.0;
    while residual(lo) <= 0.0 {
        hi = lo;
        lo /= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if r.abs() <= tolerance {
            return mid;
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}
