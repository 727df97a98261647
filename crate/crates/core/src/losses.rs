//! Windowed clipped observation loss.
//!
//! A candidate position is scored against a measurement frame by summing the
//! frame values inside a window of halfwidth `W` around the position and
//! negating the result, so brighter windows cost less. Raw values are first
//! clipped to `[-sigma_o, 1 + sigma_o]`: the signal itself lives in `[0, 1]`
//! plus noise of scale `sigma_o`, and clipping caps how much any single
//! outlier cell can sway the score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::MeasurementFrame;

/// Integer cell range `{lo, lo+1, ..., hi}` that measurements live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: i64,
    pub hi: i64,
}

impl Grid {
    pub fn new(lo: i64, hi: i64) -> Result<Self, LossError> {
        if lo > hi {
            return Err(LossError::InvalidConfig(format!(
                "grid lo {lo} exceeds hi {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The benchmark grid `{-500, ..., 500}`.
    pub fn reference() -> Self {
        Self { lo: -500, hi: 500 }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cells(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    /// Index of `cell` into a frame's value vector.
    pub fn index(&self, cell: i64) -> usize {
        debug_assert!(cell >= self.lo && cell <= self.hi);
        (cell - self.lo) as usize
    }
}

/// Parameters of the clipped-window score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Window halfwidth `W` in cells; the window spans `2W + 1` cells when
    /// interior to the grid.
    pub pulse_halfwidth: i64,
    /// Nominal noise scale `sigma_o`; also sets the clip range.
    pub noise_scale: f64,
}

impl LossConfig {
    pub fn new(pulse_halfwidth: i64, noise_scale: f64) -> Result<Self, LossError> {
        if pulse_halfwidth < 0 {
            return Err(LossError::InvalidConfig(format!(
                "pulse halfwidth {pulse_halfwidth} must be nonnegative"
            )));
        }
        if !(noise_scale > 0.0) || !noise_scale.is_finite() {
            return Err(LossError::InvalidConfig(format!(
                "noise scale {noise_scale} must be positive and finite"
            )));
        }
        Ok(Self {
            pulse_halfwidth,
            noise_scale,
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("frame has {frame} values but grid has {grid} cells")]
    FrameMismatch { frame: usize, grid: usize },
    #[error("non-finite state {0}")]
    NonFiniteState(f64),
}

/// Clamps a raw measurement to `[-sigma_o, 1 + sigma_o]`.
pub fn clip(y: f64, sigma_o: f64) -> f64 {
    y.max(-sigma_o).min(1.0 + sigma_o)
}

/// Negated sum of clipped frame values over the window
/// `{g in G : |g - x| <= W}`. The position may be real-valued; the window
/// is intersected with the grid, so near-edge positions see fewer cells.
pub fn observation_loss(
    x: f64,
    frame: &MeasurementFrame,
    cfg: &LossConfig,
    grid: &Grid,
) -> Result<f64, LossError> {
    if frame.values.len() != grid.len() {
        return Err(LossError::FrameMismatch {
            frame: frame.values.len(),
            grid: grid.len(),
        });
    }
    if !x.is_finite() {
        return Err(LossError::NonFiniteState(x));
    }
    let w = cfg.pulse_halfwidth as f64;
    let first = (x - w).ceil() as i64;
    let last = (x + w).floor() as i64;
    let first = first.max(grid.lo);
    let last = last.min(grid.hi);
    let mut sum = 0.0;
    for cell in first..=last {
        sum += clip(frame.values[grid.index(cell)], cfg.noise_scale);
    }
    Ok(-sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::MeasurementFrame;
    use proptest::prelude::*;

    fn frame_from(values: Vec<f64>) -> MeasurementFrame {
        MeasurementFrame { values, t: 0 }
    }

    fn pulse_frame(grid: &Grid, z: f64, w: i64) -> MeasurementFrame {
        frame_from(
            grid.cells()
                .map(|g| if (g as f64 - z).abs() <= w as f64 { 1.0 } else { 0.0 })
                .collect(),
        )
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(5.0, 1.0), 2.0);
        assert_eq!(clip(-3.0, 1.0), -1.0);
        assert_eq!(clip(0.3, 1.0), 0.3);
        assert_eq!(clip(-1.0, 1.0), -1.0);
        assert_eq!(clip(2.0, 1.0), 2.0);
    }

    #[test]
    fn zero_frame_zero_loss() {
        let grid = Grid::reference();
        let cfg = LossConfig::new(50, 1.0).unwrap();
        let frame = frame_from(vec![0.0; grid.len()]);
        assert_eq!(observation_loss(0.0, &frame, &cfg, &grid).unwrap(), 0.0);
        assert_eq!(observation_loss(-433.7, &frame, &cfg, &grid).unwrap(), 0.0);
    }

    #[test]
    fn matched_pulse_scores_full_window() {
        let grid = Grid::reference();
        let cfg = LossConfig::new(50, 1.0).unwrap();
        let frame = pulse_frame(&grid, 120.0, 50);
        assert_eq!(observation_loss(120.0, &frame, &cfg, &grid).unwrap(), -101.0);
    }

    #[test]
    fn disjoint_window_scores_zero() {
        let grid = Grid::reference();
        let cfg = LossConfig::new(50, 1.0).unwrap();
        let frame = pulse_frame(&grid, 0.0, 50);
        assert_eq!(observation_loss(130.0, &frame, &cfg, &grid).unwrap(), 0.0);
    }

    #[test]
    fn edge_window_is_truncated() {
        let grid = Grid::reference();
        let cfg = LossConfig::new(50, 1.0).unwrap();
        let frame = frame_from(vec![1.0; grid.len()]);
        // At the left edge only cells -500..=-450 fall in the window.
        assert_eq!(observation_loss(-500.0, &frame, &cfg, &grid).unwrap(), -51.0);
        assert_eq!(observation_loss(0.0, &frame, &cfg, &grid).unwrap(), -101.0);
    }

    #[test]
    fn real_valued_window_bounds() {
        let grid = Grid::new(-5, 5).unwrap();
        let cfg = LossConfig::new(1, 1.0).unwrap();
        let frame = frame_from(vec![1.0; grid.len()]);
        // x = 0.5, W = 1: cells {0, 1} are within distance 1.
        assert_eq!(observation_loss(0.5, &frame, &cfg, &grid).unwrap(), -2.0);
        // x = 1.0: cells {0, 1, 2}.
        assert_eq!(observation_loss(1.0, &frame, &cfg, &grid).unwrap(), -3.0);
    }

    #[test]
    fn mismatched_frame_rejected() {
        let grid = Grid::reference();
        let cfg = LossConfig::new(50, 1.0).unwrap();
        let frame = frame_from(vec![0.0; 5]);
        assert_eq!(
            observation_loss(0.0, &frame, &cfg, &grid),
            Err(LossError::FrameMismatch {
                frame: 5,
                grid: 1001
            })
        );
    }

    proptest! {
        #[test]
        fn loss_stays_in_bounds(
            x in -520.0f64..520.0,
            sigma in 0.5f64..8.0,
            raw in proptest::collection::vec(-100.0f64..100.0, 101),
        ) {
            let grid = Grid::new(-50, 50).unwrap();
            let cfg = LossConfig::new(10, sigma).unwrap();
            let frame = frame_from(raw);
            let loss = observation_loss(x, &frame, &cfg, &grid).unwrap();
            let cells = (2 * cfg.pulse_halfwidth + 1) as f64;
            prop_assert!(loss <= cells * sigma + 1e-12);
            prop_assert!(loss >= -cells * (1.0 + sigma) - 1e-12);
        }

        #[test]
        fn integer_shift_equivariance(
            x in -30.0f64..30.0,
            d in -40i64..40,
            raw in proptest::collection::vec(-2.0f64..3.0, 61),
        ) {
            // Values indexed by distance from x so both windows stay interior.
            let grid = Grid::new(-120, 120).unwrap();
            let cfg = LossConfig::new(10, 1.0).unwrap();
            let base: Vec<f64> = grid.cells()
                .map(|g| {
                    let k = g - (-30);
                    if (0..61).contains(&k) { raw[k as usize] } else { 0.0 }
                })
                .collect();
            let shifted: Vec<f64> = grid.cells()
                .map(|g| {
                    let k = (g - d) - (-30);
                    if (0..61).contains(&k) { raw[k as usize] } else { 0.0 }
                })
                .collect();
            let l0 = observation_loss(x, &frame_from(base), &cfg, &grid).unwrap();
            let l1 = observation_loss(x + d as f64, &frame_from(shifted), &cfg, &grid).unwrap();
            prop_assert!((l0 - l1).abs() <= 1e-9);
        }

        #[test]
        fn unclipped_gain_is_linear(
            x in -20.0f64..20.0,
            delta in 0.01f64..0.4,
            cell_offset in -10i64..=10,
        ) {
            let grid = Grid::new(-60, 60).unwrap();
            let cfg = LossConfig::new(10, 1.0).unwrap();
            let mut values = vec![0.2f64; grid.len()];
            let cell = (x.round() as i64 + cell_offset).clamp(-60, 60);
            let before = observation_loss(x, &frame_from(values.clone()), &cfg, &grid).unwrap();
            values[grid.index(cell)] += delta;
            let after = observation_loss(x, &frame_from(values), &cfg, &grid).unwrap();
            let in_window = (cell as f64 - x).abs() <= 10.0;
            if in_window {
                prop_assert!((before - after - delta).abs() <= 1e-12);
            } else {
                prop_assert_eq!(before, after);
            }
        }
    }
}
