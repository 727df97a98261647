//! Generative-model comparators: an exact grid filter and a bootstrap
//! particle filter.
//!
//! Both assume the nominal measurement model: each cell of a frame is the
//! square pulse at the hypothesized position plus `N(0, sigma_o^2)` noise,
//! independent across cells, and the position itself takes `N(0, sigma_d^2)`
//! steps. The grid filter maintains the exact posterior over integer cells;
//! the particle filter approximates it with a weighted population and
//! systematic resampling. An optional mixture likelihood (narrow plus
//! ten-times-wider component) is available for robustness experiments.
//!
//! Frame likelihoods are evaluated two ways that must agree: a direct
//! per-cell sum ([`log_likelihood`]), and a per-frame score table that
//! turns each hypothesis into one prefix-sum lookup, which is what makes
//! scanning all 1001 hypotheses per step affordable. Only the pulse's
//! window depends on the hypothesis, so a hypothesis's log-likelihood is a
//! frame-wide background term plus the windowed sum of per-cell gains.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::Grid;
use crate::simulator::{pulse, MeasurementFrame};

/// Which per-cell noise density the filters assume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LikelihoodModel {
    /// `N(0, sigma_o^2)` per cell: the model the benchmark filters use.
    Nominal,
    /// `(1 - rho) N(0, sigma_o^2) + rho N(0, (10 sigma_o)^2)` per cell.
    Mixture { outlier_fraction: f64 },
}

/// Shared parameters of both filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesConfig {
    pub transition_std: f64,
    pub observation_std: f64,
    pub pulse_halfwidth: i64,
    pub likelihood: LikelihoodModel,
}

#[derive(Debug, Error, PartialEq)]
pub enum BayesError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("frame has {frame} values but grid has {grid} cells")]
    FrameMismatch { frame: usize, grid: usize },
    #[error("posterior has {posterior} entries but grid has {grid} cells")]
    PosteriorMismatch { posterior: usize, grid: usize },
    #[error("posterior mass vanished during update")]
    MassVanished,
    #[error("non-finite input: {0}")]
    NonFinite(String),
}

impl BayesConfig {
    pub fn new(
        transition_std: f64,
        observation_std: f64,
        pulse_halfwidth: i64,
    ) -> Result<Self, BayesError> {
        if !(transition_std > 0.0) || !transition_std.is_finite() {
            return Err(BayesError::InvalidConfig(format!(
                "transition std {transition_std} must be positive and finite"
            )));
        }
        if !(observation_std > 0.0) || !observation_std.is_finite() {
            return Err(BayesError::InvalidConfig(format!(
                "observation std {observation_std} must be positive and finite"
            )));
        }
        if pulse_halfwidth < 0 {
            return Err(BayesError::InvalidConfig(format!(
                "pulse halfwidth {pulse_halfwidth} must be nonnegative"
            )));
        }
        Ok(Self {
            transition_std,
            observation_std,
            pulse_halfwidth,
            likelihood: LikelihoodModel::Nominal,
        })
    }

    /// Switches to the two-component mixture density.
    pub fn with_mixture(mut self, outlier_fraction: f64) -> Result<Self, BayesError> {
        if !(outlier_fraction > 0.0 && outlier_fraction < 1.0) {
            return Err(BayesError::InvalidConfig(format!(
                "mixture outlier fraction {outlier_fraction} outside (0, 1)"
            )));
        }
        self.likelihood = LikelihoodModel::Mixture { outlier_fraction };
        Ok(self)
    }
}

/// Exact posterior over the grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    pub probabilities: Vec<f64>,
}

impl GridPosterior {
    /// All mass on one cell.
    pub fn point_mass(grid: &Grid, cell: i64) -> Self {
        let mut probabilities = vec![0.0; grid.len()];
        probabilities[grid.index(cell)] = 1.0;
        Self { probabilities }
    }

    pub fn uniform(grid: &Grid) -> Self {
        Self {
            probabilities: vec![1.0 / grid.len() as f64; grid.len()],
        }
    }
}

/// Weighted particle population.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub states: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    /// All particles at one state with uniform weights.
    pub fn at(state: f64, count: usize) -> Self {
        Self {
            states: vec![state; count],
            weights: vec![1.0 / count as f64; count],
        }
    }
}

fn ln_normal_density(residual: f64, std: f64) -> f64 {
    -0.5 * (std::f64::consts::TAU * std * std).ln() - residual * residual / (2.0 * std * std)
}

/// Log-density of one cell's measurement given the signal value `h`.
fn cell_log_density(residual: f64, cfg: &BayesConfig) -> f64 {
    match cfg.likelihood {
        LikelihoodModel::Nominal => ln_normal_density(residual, cfg.observation_std),
        LikelihoodModel::Mixture { outlier_fraction } => {
            let narrow =
                (1.0 - outlier_fraction).ln() + ln_normal_density(residual, cfg.observation_std);
            let wide =
                outlier_fraction.ln() + ln_normal_density(residual, 10.0 * cfg.observation_std);
            let m = narrow.max(wide);
            m + ((narrow - m).exp() + (wide - m).exp()).ln()
        }
    }
}

/// Joint log-likelihood of a frame under hypothesis position `z`, summed
/// directly cell by cell. `z` may be real-valued; integer grid hypotheses
/// are the special case the grid filter scans.
pub fn log_likelihood(
    frame: &MeasurementFrame,
    hypothesis: f64,
    cfg: &BayesConfig,
    grid: &Grid,
) -> Result<f64, BayesError> {
    if frame.values.len() != grid.len() {
        return Err(BayesError::FrameMismatch {
            frame: frame.values.len(),
            grid: grid.len(),
        });
    }
    if !hypothesis.is_finite() {
        return Err(BayesError::NonFinite(format!("hypothesis {hypothesis}")));
    }
    let mut total = 0.0;
    for (cell, &m) in grid.cells().zip(&frame.values) {
        let h = pulse(cell, hypothesis, cfg.pulse_halfwidth);
        total += cell_log_density(m - h, cfg);
    }
    Ok(total)
}

/// Per-frame score table: background term plus prefix sums of the per-cell
/// gain of "in pulse" over "background", making each hypothesis's joint
/// log-likelihood a constant plus one prefix difference.
struct FrameScores {
    total_background: f64,
    gain_prefix: Vec<f64>,
}

impl FrameScores {
    fn build(frame: &MeasurementFrame, cfg: &BayesConfig, grid: &Grid) -> Result<Self, BayesError> {
        if frame.values.len() != grid.len() {
            return Err(BayesError::FrameMismatch {
                frame: frame.values.len(),
                grid: grid.len(),
            });
        }
        let mut total_background = 0.0;
        let mut gain_prefix = Vec::with_capacity(frame.values.len() + 1);
        gain_prefix.push(0.0);
        let mut acc = 0.0;
        for &m in &frame.values {
            let f0 = cell_log_density(m, cfg);
            let f1 = cell_log_density(m - 1.0, cfg);
            total_background += f0;
            acc += f1 - f0;
            gain_prefix.push(acc);
        }
        Ok(Self {
            total_background,
            gain_prefix,
        })
    }

    fn log_likelihood(&self, hypothesis: f64, halfwidth: i64, grid: &Grid) -> f64 {
        let w = halfwidth as f64;
        let first = ((hypothesis - w).ceil() as i64).max(grid.lo);
        let last = ((hypothesis + w).floor() as i64).min(grid.hi);
        if first > last {
            return self.total_background;
        }
        let lo = grid.index(first);
        let hi = grid.index(last);
        self.total_background + self.gain_prefix[hi + 1] - self.gain_prefix[lo]
    }
}

/// Transition step: discrete convolution with a Gaussian kernel of standard
/// deviation `transition_std` cells, truncated at `ceil(6 * std)` and
/// renormalized, so mass that would leave the grid is redistributed.
pub fn bayes_predict(post: &GridPosterior, transition_std: f64) -> GridPosterior {
    assert!(
        transition_std > 0.0 && transition_std.is_finite(),
        "transition std must be positive"
    );
    let n = post.probabilities.len();
    let radius = (6.0 * transition_std).ceil() as i64;
    let var = transition_std * transition_std;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|j| (-(j * j) as f64 / (2.0 * var)).exp())
        .collect();
    let kernel_total: f64 = kernel.iter().sum();

    let mut out = vec![0.0; n];
    for (i, &p) in post.probabilities.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (k, &kw) in kernel.iter().enumerate() {
            let j = i as i64 + (k as i64 - radius);
            if j >= 0 && (j as usize) < n {
                out[j as usize] += p * kw / kernel_total;
            }
        }
    }
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    GridPosterior { probabilities: out }
}

/// Measurement step: reweights each cell by its frame likelihood, shifting
/// exponents by the largest log-likelihood on the posterior's support so a
/// concentrated posterior never underflows just because better-scoring
/// cells exist elsewhere.
pub fn bayes_update(
    post: &GridPosterior,
    frame: &MeasurementFrame,
    cfg: &BayesConfig,
    grid: &Grid,
) -> Result<GridPosterior, BayesError> {
    if post.probabilities.len() != grid.len() {
        return Err(BayesError::PosteriorMismatch {
            posterior: post.probabilities.len(),
            grid: grid.len(),
        });
    }
    let scores = FrameScores::build(frame, cfg, grid)?;
    let log_liks: Vec<f64> = grid
        .cells()
        .map(|z| scores.log_likelihood(z as f64, cfg.pulse_halfwidth, grid))
        .collect();
    let shift = post
        .probabilities
        .iter()
        .zip(&log_liks)
        .filter(|(&p, _)| p > 0.0)
        .map(|(_, &ll)| ll)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(BayesError::MassVanished);
    }
    let mut out: Vec<f64> = post
        .probabilities
        .iter()
        .zip(&log_liks)
        .map(|(&p, &ll)| if p > 0.0 { p * (ll - shift).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(BayesError::MassVanished);
    }
    for p in &mut out {
        *p /= total;
    }
    Ok(GridPosterior { probabilities: out })
}

/// Posterior mean position.
pub fn bayes_estimate(post: &GridPosterior, grid: &Grid) -> f64 {
    grid.cells()
        .zip(&post.probabilities)
        .map(|(z, &p)| z as f64 * p)
        .sum()
}

/// The grid filter's full recursion with the benchmark's initialization:
/// all mass on the known starting cell, measurement update at the first
/// step, predict-then-update afterwards.
pub struct BayesFilter {
    pub posterior: GridPosterior,
    cfg: BayesConfig,
    grid: Grid,
    started: bool,
}

impl BayesFilter {
    pub fn new(cfg: BayesConfig, grid: Grid, start_cell: i64) -> Self {
        Self {
            posterior: GridPosterior::point_mass(&grid, start_cell),
            cfg,
            grid,
            started: false,
        }
    }

    /// Consumes one frame and returns the posterior-mean estimate.
    pub fn step(&mut self, frame: &MeasurementFrame) -> Result<f64, BayesError> {
        if self.started {
            self.posterior = bayes_predict(&self.posterior, self.cfg.transition_std);
        }
        self.started = true;
        self.posterior = bayes_update(&self.posterior, frame, &self.cfg, &self.grid)?;
        Ok(bayes_estimate(&self.posterior, &self.grid))
    }
}

/// What one particle-filter step produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfOutcome {
    pub estimate: f64,
    /// True when every particle's likelihood weight degenerated and the
    /// step fell back to uniform weights.
    pub degenerate: bool,
}

/// One bootstrap-filter round: propagate every particle through the
/// transition model (clamped to the grid span), weight by the frame
/// likelihood with a max-shift, estimate by the weighted mean, then
/// systematically resample back to uniform weights.
pub fn pf_step(
    ps: &mut ParticleSet,
    frame: &MeasurementFrame,
    cfg: &BayesConfig,
    grid: &Grid,
    rng: &mut ChaCha12Rng,
) -> Result<PfOutcome, BayesError> {
    if ps.states.is_empty() {
        return Err(BayesError::InvalidConfig("empty particle set".into()));
    }
    let lo = grid.lo as f64;
    let hi = grid.hi as f64;
    for x in &mut ps.states {
        let z: f64 = rng.sample(StandardNormal);
        *x = (*x + cfg.transition_std * z).clamp(lo, hi);
    }
    let scores = FrameScores::build(frame, cfg, grid)?;
    let log_liks: Vec<f64> = ps
        .states
        .iter()
        .map(|&x| scores.log_likelihood(x, cfg.pulse_halfwidth, grid))
        .collect();
    let shift = log_liks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut degenerate = false;
    let raw: Vec<f64> = log_liks.iter().map(|&ll| (ll - shift).exp()).collect();
    let total: f64 = raw.iter().sum();
    if shift.is_finite() && total > 0.0 && total.is_finite() {
        for (w, r) in ps.weights.iter_mut().zip(&raw) {
            *w = r / total;
        }
    } else {
        degenerate = true;
        let uniform = 1.0 / ps.states.len() as f64;
        for w in &mut ps.weights {
            *w = uniform;
        }
    }
    let estimate: f64 = ps
        .states
        .iter()
        .zip(&ps.weights)
        .map(|(&x, &w)| x * w)
        .sum();
    let picks = systematic_resample(&ps.weights, rng);
    ps.states = picks.iter().map(|&i| ps.states[i]).collect();
    let uniform = 1.0 / ps.states.len() as f64;
    for w in &mut ps.weights {
        *w = uniform;
    }
    Ok(PfOutcome {
        estimate,
        degenerate,
    })
}

/// Stratified index selection: one uniform offset in `[0, 1/N)` advanced by
/// `1/N` per pick, walked along the cumulative weights (with the final
/// cumulative forced to 1), so every index's multiplicity is within one of
/// `N * w_i`.
pub fn systematic_resample(weights: &[f64], rng: &mut ChaCha12Rng) -> Vec<usize> {
    let n = weights.len();
    let step = 1.0 / n as f64;
    let offset: f64 = rng.gen::<f64>() * step;
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cumulative.push(acc);
    }
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0;
    }
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    for k in 0..n {
        let point = offset + k as f64 * step;
        while cumulative[i] < point {
            i += 1;
        }
        out.push(i);
    }
    out
}
