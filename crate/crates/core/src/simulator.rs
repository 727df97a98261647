//! Synthetic world generation for the tracking benchmark.
//!
//! A scenario is a true position path on `[-500, 500]` plus, per time step,
//! a measurement frame: a square pulse of halfwidth `W` centered on the true
//! position, corrupted by independent per-cell noise drawn from the mixture
//! `(1 - rho) N(0, sigma_o^2) + rho N(0, (10 sigma_o)^2)`. The `rho` mass is
//! the outlier component: ten times the nominal scale.
//!
//! Paths either stay at the origin or follow a piecewise-constant velocity,
//! redrawn uniformly from `[-1, 1]` every `K` transitions, reflecting at the
//! domain walls. Either way speed never exceeds 1 cell per step.
//!
//! Generation is deterministic given `(seed, trial)`: the path and every
//! frame draw from their own named substreams (see [`crate::rng`]), with the
//! frame at step `t` keyed by `t` itself. Regenerating one frame in
//! isolation reproduces it bit-for-bit without touching the others.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::Grid;
use crate::rng::{substream, STREAM_NOISE, STREAM_PATH};

/// How the true position evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathMode {
    /// Stays at the origin.
    Stationary,
    /// Constant velocity in `[-1, 1]`, redrawn every `segment_length`
    /// transitions, reflecting at the domain walls.
    PiecewiseVelocity { segment_length: usize },
}

/// Scenario parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub sigma_o: f64,
    /// Probability a noise draw comes from the wide (10x) component.
    pub outlier_fraction: f64,
    pub pulse_halfwidth: i64,
    pub horizon: usize,
    pub grid: Grid,
    pub path_mode: PathMode,
    pub seed: u64,
}

impl SimConfig {
    /// The benchmark scenario: grid `{-500..500}`, `W = 50`, `T = 200`,
    /// moving target with 40-step velocity segments.
    pub fn reference(sigma_o: f64, outlier_fraction: f64, seed: u64) -> Result<Self, SimError> {
        Self::new(
            sigma_o,
            outlier_fraction,
            50,
            200,
            Grid::reference(),
            PathMode::PiecewiseVelocity { segment_length: 40 },
            seed,
        )
    }

    pub fn new(
        sigma_o: f64,
        outlier_fraction: f64,
        pulse_halfwidth: i64,
        horizon: usize,
        grid: Grid,
        path_mode: PathMode,
        seed: u64,
    ) -> Result<Self, SimError> {
        if !(sigma_o > 0.0) || !sigma_o.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "sigma_o {sigma_o} must be positive and finite"
            )));
        }
        if !(0.0..=1.0).contains(&outlier_fraction) {
            return Err(SimError::InvalidConfig(format!(
                "outlier fraction {outlier_fraction} outside [0, 1]"
            )));
        }
        if pulse_halfwidth < 0 {
            return Err(SimError::InvalidConfig(format!(
                "pulse halfwidth {pulse_halfwidth} must be nonnegative"
            )));
        }
        if horizon == 0 {
            return Err(SimError::InvalidConfig("horizon must be at least 1".into()));
        }
        if let PathMode::PiecewiseVelocity { segment_length } = path_mode {
            if segment_length == 0 {
                return Err(SimError::InvalidConfig(
                    "segment length must be at least 1".into(),
                ));
            }
        }
        Ok(Self {
            sigma_o,
            outlier_fraction,
            pulse_halfwidth,
            horizon,
            grid,
            path_mode,
            seed,
        })
    }
}

/// One time step's measurements, one value per grid cell in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFrame {
    pub values: Vec<f64>,
    pub t: usize,
}

/// The true positions `z_1..z_T` (stored at indices `0..T`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePath {
    pub states: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Square pulse indicator: 1 when `|x - z| <= W`, else 0.
pub fn pulse(x: i64, z: f64, halfwidth: i64) -> f64 {
    if (x as f64 - z).abs() <= halfwidth as f64 {
        1.0
    } else {
        0.0
    }
}

/// One mixture-noise draw.
pub fn sample_noise(sigma_o: f64, outlier_fraction: f64, rng: &mut ChaCha12Rng) -> f64 {
    let scale = if rng.gen_bool(outlier_fraction) {
        10.0 * sigma_o
    } else {
        sigma_o
    };
    let std_normal: f64 = rng.sample(StandardNormal);
    scale * std_normal
}

/// One measurement frame at true position `z`, cells filled in ascending
/// grid order so the noise layout is reproducible.
pub fn gen_frame(z: f64, t: usize, cfg: &SimConfig, rng: &mut ChaCha12Rng) -> MeasurementFrame {
    let values = cfg
        .grid
        .cells()
        .map(|x| pulse(x, z, cfg.pulse_halfwidth) + sample_noise(cfg.sigma_o, cfg.outlier_fraction, rng))
        .collect();
    MeasurementFrame { values, t }
}

/// Reflects `p` into `[lo, hi]`; the flag reports whether the direction of
/// travel flipped (odd number of wall bounces).
pub fn reflect(p: f64, lo: f64, hi: f64) -> (f64, bool) {
    debug_assert!(hi > lo);
    let mut p = p;
    let mut flipped = false;
    while p < lo || p > hi {
        if p > hi {
            p = 2.0 * hi - p;
        } else {
            p = 2.0 * lo - p;
        }
        flipped = !flipped;
    }
    (p, flipped)
}

/// Generates the true path for `(cfg.seed, trial)`. Starts at 0, never
/// moves faster than one cell per step, and stays inside the grid bounds.
pub fn gen_true_path(cfg: &SimConfig, trial: u64) -> TruePath {
    let mut rng = substream(cfg.seed, &[trial, STREAM_PATH]);
    let lo = cfg.grid.lo as f64;
    let hi = cfg.grid.hi as f64;
    let mut states = Vec::with_capacity(cfg.horizon);
    states.push(0.0);
    match cfg.path_mode {
        PathMode::Stationary => {
            states.resize(cfg.horizon, 0.0);
        }
        PathMode::PiecewiseVelocity { segment_length } => {
            let mut velocity = 0.0;
            for transition in 0..cfg.horizon.saturating_sub(1) {
                if transition % segment_length == 0 {
                    velocity = rng.gen_range(-1.0..=1.0);
                }
                let (next, flipped) = reflect(states[transition] + velocity, lo, hi);
                if flipped {
                    velocity = -velocity;
                }
                states.push(next);
            }
        }
    }
    TruePath { states }
}

/// Generates the path and all `T` frames for `(cfg.seed, trial)`. The frame
/// at step `t` draws from a substream keyed by `t`, so
/// [`regen_frame`] can rebuild any single frame bit-for-bit.
pub fn simulate(cfg: &SimConfig, trial: u64) -> (TruePath, Vec<MeasurementFrame>) {
    let path = gen_true_path(cfg, trial);
    let frames = path
        .states
        .iter()
        .enumerate()
        .map(|(t, &z)| {
            let mut rng = substream(cfg.seed, &[trial, STREAM_NOISE, t as u64]);
            gen_frame(z, t, cfg, &mut rng)
        })
        .collect();
    (path, frames)
}

/// Rebuilds the single frame at step `t` of a trial.
pub fn regen_frame(cfg: &SimConfig, trial: u64, t: usize, z: f64) -> MeasurementFrame {
    let mut rng = substream(cfg.seed, &[trial, STREAM_NOISE, t as u64]);
    gen_frame(z, t, cfg, &mut rng)
}
