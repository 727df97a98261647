//! Benchmark orchestration and reporting.
//!
//! A sweep crosses noise levels, outlier fractions, and estimators over
//! seeded trials. Within one trial index every estimator consumes the
//! identical true path and measurement frames, so comparisons are paired;
//! distinct trials, and the estimators' own internal draws, come from
//! independent named streams. Trials run in parallel and results are
//! re-sorted into a canonical order before rendering, so concurrency never
//! changes output bytes.
//!
//! Reporting conventions: per-trial CSV values are written with Rust's
//! shortest round-trip float formatting, summary CSV values with six
//! significant digits, and the summary JSON with full precision. Sample
//! standard deviations use the n-1 denominator, defined as 0 for a single
//! trial. A trial whose estimator fails numerically is flagged in its
//! status column and excluded from aggregates, never silently dropped.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{pf_step, BayesConfig, BayesFilter, ParticleSet};
use crate::hedge_core::{quantile_regret, HedgeConfig, HedgeError, RegretDiagnostics, RegretVector};
use crate::losses::{Grid, LossConfig};
use crate::rng::{substream, STREAM_PARTICLE, STREAM_REGRET, STREAM_TRACKER};
use crate::simulator::{simulate, MeasurementFrame, PathMode, SimConfig, TruePath};
use crate::tracker::{identity_dynamics, TrackerConfig, TrackerState};

/// The three estimators under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmId {
    Nh,
    Bayes,
    Pf,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 3] = [AlgorithmId::Nh, AlgorithmId::Bayes, AlgorithmId::Pf];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmId::Nh => "nh",
            AlgorithmId::Bayes => "bayes",
            AlgorithmId::Pf => "pf",
        }
    }
}

impl std::fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AlgorithmId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "nh" => Ok(AlgorithmId::Nh),
            "bayes" => Ok(AlgorithmId::Bayes),
            "pf" => Ok(AlgorithmId::Pf),
            other => Err(format!("unknown algorithm {other:?}; expected nh, bayes, or pf")),
        }
    }
}

/// Everything a sweep needs: the parameter cross product plus the fixed
/// estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub algorithms: Vec<AlgorithmId>,
    pub sigma_o: Vec<f64>,
    pub rho: Vec<f64>,
    pub trials: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Tracker population size.
    pub n_actions: usize,
    /// Tracker regret discount.
    pub discount: f64,
    /// Tracker child-perturbation variance.
    pub resample_spread: f64,
    /// Filter transition standard deviation.
    pub transition_std: f64,
    pub n_particles: usize,
    pub pulse_halfwidth: i64,
    pub grid: Grid,
    pub path_mode: PathMode,
    /// Score the grid filter with the outlier-aware mixture density
    /// (at each cell's outlier fraction) instead of the nominal Gaussian.
    pub bayes_mixture: bool,
}

impl ExperimentSpec {
    /// The benchmark defaults: both noise levels, the six outlier
    /// fractions, 100 trials of 200 steps, and the standard estimator
    /// settings.
    pub fn reference(seed: u64) -> Self {
        Self {
            algorithms: AlgorithmId::ALL.to_vec(),
            sigma_o: vec![1.0, 8.0],
            rho: vec![0.0, 0.01, 0.05, 0.1, 0.15, 0.2],
            trials: 100,
            horizon: 200,
            seed,
            n_actions: 100,
            discount: 0.02,
            resample_spread: 400.0,
            transition_std: 2.0,
            n_particles: 100,
            pulse_halfwidth: 50,
            grid: Grid::reference(),
            path_mode: PathMode::PiecewiseVelocity { segment_length: 40 },
            bayes_mixture: false,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.algorithms.is_empty() {
            return Err(BenchError::InvalidSpec("no algorithms selected".into()));
        }
        if self.sigma_o.is_empty() || self.rho.is_empty() {
            return Err(BenchError::InvalidSpec("empty parameter list".into()));
        }
        if self.sigma_o.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(BenchError::InvalidSpec(
                "sigma_o values must be positive and finite".into(),
            ));
        }
        if self.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(BenchError::InvalidSpec("rho values must lie in [0, 1]".into()));
        }
        if self.trials == 0 {
            return Err(BenchError::InvalidSpec("need at least one trial".into()));
        }
        if self.horizon == 0 {
            return Err(BenchError::InvalidSpec("need a positive horizon".into()));
        }
        if self.n_particles == 0 {
            return Err(BenchError::InvalidSpec("need at least one particle".into()));
        }
        self.tracker_config().validate().map_err(|e| {
            BenchError::InvalidSpec(format!("tracker settings: {e}"))
        })?;
        BayesConfig::new(self.transition_std, self.sigma_o[0], self.pulse_halfwidth)
            .map_err(|e| BenchError::InvalidSpec(format!("filter settings: {e}")))?;
        Ok(())
    }

    fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            n_actions: self.n_actions,
            discount: self.discount,
            resample_spread: vec![self.resample_spread],
            state_space: vec![(self.grid.lo as f64, self.grid.hi as f64)],
            dynamics: identity_dynamics,
            solver_tolerance: HedgeConfig::DEFAULT_TOLERANCE,
        }
    }

    fn sim_config(&self, sigma_o: f64, rho: f64) -> Result<SimConfig, BenchError> {
        SimConfig::new(
            sigma_o,
            rho,
            self.pulse_halfwidth,
            self.horizon,
            self.grid,
            self.path_mode,
            self.seed,
        )
        .map_err(|e| BenchError::InvalidSpec(e.to_string()))
    }
}

/// One estimator's outcome on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: AlgorithmId,
    pub sigma_o: f64,
    pub rho: f64,
    pub trial: usize,
    /// NaN when the trial failed.
    pub rmse: f64,
    /// "ok", or a short failure reason.
    pub status: String,
    /// Steps where the particle filter's weights degenerated to uniform;
    /// always 0 for the other estimators.
    pub degenerate_steps: usize,
    pub predictions: Option<Vec<f64>>,
}

impl RunResult {
    pub fn failed(&self) -> bool {
        self.status != "ok"
    }
}

/// Aggregate over one (algorithm, sigma_o, rho) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: AlgorithmId,
    pub sigma_o: f64,
    pub rho: f64,
    pub trials: usize,
    pub failures: usize,
    /// Mean RMSE over non-failed trials; absent when every trial failed.
    pub mean_rmse: Option<f64>,
    /// Sample standard deviation (n-1 denominator, 0 when n = 1).
    pub std_rmse: Option<f64>,
}

/// A full sweep's per-trial results and aggregates, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub results: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Hedge(#[from] HedgeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Root-mean-squared error between predictions and the true path.
pub fn rmse(predicted: &[f64], truth: &[f64]) -> Result<f64, BenchError> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(BenchError::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let sum_sq: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, z)| (p - z) * (p - z))
        .sum();
    Ok((sum_sq / predicted.len() as f64).sqrt())
}

fn run_nh(
    spec: &ExperimentSpec,
    sigma_o: f64,
    trial: u64,
    frames: &[MeasurementFrame],
) -> Result<Vec<f64>, String> {
    let cfg = spec.tracker_config();
    let loss_cfg = LossConfig::new(spec.pulse_halfwidth, sigma_o).map_err(|e| e.to_string())?;
    let mut rng = substream(spec.seed, &[trial, STREAM_TRACKER]);
    let mut st = TrackerState::init(&cfg, &mut rng).map_err(|e| e.to_string())?;
    frames
        .iter()
        .map(|frame| {
            st.step_frame(&cfg, frame, &loss_cfg, &spec.grid, &mut rng)
                .map(|est| est[0])
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn run_bayes(
    spec: &ExperimentSpec,
    sigma_o: f64,
    rho: f64,
    start: f64,
    frames: &[MeasurementFrame],
) -> Result<Vec<f64>, String> {
    let mut cfg = BayesConfig::new(spec.transition_std, sigma_o, spec.pulse_halfwidth)
        .map_err(|e| e.to_string())?;
    if spec.bayes_mixture && rho > 0.0 {
        cfg = cfg.with_mixture(rho).map_err(|e| e.to_string())?;
    }
    let mut filter = BayesFilter::new(cfg, spec.grid, start.round() as i64);
    frames
        .iter()
        .map(|frame| filter.step(frame).map_err(|e| e.to_string()))
        .collect()
}

fn run_pf(
    spec: &ExperimentSpec,
    sigma_o: f64,
    trial: u64,
    start: f64,
    frames: &[MeasurementFrame],
) -> Result<(Vec<f64>, usize), String> {
    let cfg = BayesConfig::new(spec.transition_std, sigma_o, spec.pulse_halfwidth)
        .map_err(|e| e.to_string())?;
    let mut ps = ParticleSet::at(start, spec.n_particles);
    let mut rng = substream(spec.seed, &[trial, STREAM_PARTICLE]);
    let mut predictions = Vec::with_capacity(frames.len());
    let mut degenerate = 0usize;
    for frame in frames {
        let outcome = pf_step(&mut ps, frame, &cfg, &spec.grid, &mut rng)
            .map_err(|e| e.to_string())?;
        if outcome.degenerate {
            degenerate += 1;
        }
        predictions.push(outcome.estimate);
    }
    Ok((predictions, degenerate))
}

fn run_algo(
    algo: AlgorithmId,
    spec: &ExperimentSpec,
    sigma_o: f64,
    rho: f64,
    trial: usize,
    path: &TruePath,
    frames: &[MeasurementFrame],
    record_predictions: bool,
) -> RunResult {
    let start = path.states[0];
    let outcome = match algo {
        AlgorithmId::Nh => run_nh(spec, sigma_o, trial as u64, frames).map(|p| (p, 0)),
        AlgorithmId::Bayes => {
            run_bayes(spec, sigma_o, rho, start, frames).map(|p| (p, 0))
        }
        AlgorithmId::Pf => run_pf(spec, sigma_o, trial as u64, start, frames),
    };
    match outcome {
        Ok((predictions, degenerate_steps)) => {
            let err = rmse(&predictions, &path.states)
                .expect("predictions cover the horizon");
            RunResult {
                algorithm: algo,
                sigma_o,
                rho,
                trial,
                rmse: err,
                status: "ok".into(),
                degenerate_steps,
                predictions: record_predictions.then_some(predictions),
            }
        }
        Err(reason) => RunResult {
            algorithm: algo,
            sigma_o,
            rho,
            trial,
            rmse: f64::NAN,
            status: format!("failed: {}", reason.replace([',', '\n'], ";")),
            degenerate_steps: 0,
            predictions: None,
        },
    }
}

/// Runs one estimator on one seeded trial. The same `(seed, trial)` pair
/// always regenerates the same path and frames, whichever estimator runs.
pub fn run_trial(
    algo: AlgorithmId,
    sigma_o: f64,
    rho: f64,
    trial: usize,
    spec: &ExperimentSpec,
    record_predictions: bool,
) -> Result<RunResult, BenchError> {
    spec.validate()?;
    let sim = spec.sim_config(sigma_o, rho)?;
    let (path, frames) = simulate(&sim, trial as u64);
    Ok(run_algo(
        algo,
        spec,
        sigma_o,
        rho,
        trial,
        &path,
        &frames,
        record_predictions,
    ))
}

/// Runs every selected estimator on one trial's shared path and frames,
/// with per-step predictions recorded. Returns the truth alongside.
pub fn run_trajectory_trial(
    spec: &ExperimentSpec,
    sigma_o: f64,
    rho: f64,
    trial: usize,
) -> Result<(TruePath, Vec<RunResult>), BenchError> {
    spec.validate()?;
    let sim = spec.sim_config(sigma_o, rho)?;
    let (path, frames) = simulate(&sim, trial as u64);
    let results = spec
        .algorithms
        .iter()
        .map(|&algo| run_algo(algo, spec, sigma_o, rho, trial, &path, &frames, true))
        .collect();
    Ok((path, results))
}

/// The full sweep: every (sigma_o, rho, trial) cell, each estimator on the
/// cell's shared frames. Trials fan out across threads; output order is
/// (algorithm, sigma_o, rho, trial) regardless of scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, BenchError> {
    spec.validate()?;
    let mut cells = Vec::new();
    for (s_idx, &sigma_o) in spec.sigma_o.iter().enumerate() {
        for (r_idx, &rho) in spec.rho.iter().enumerate() {
            for trial in 0..spec.trials {
                cells.push((s_idx, sigma_o, r_idx, rho, trial));
            }
        }
    }
    let mut keyed: Vec<((usize, usize, usize, usize), RunResult)> = cells
        .par_iter()
        .map(|&(s_idx, sigma_o, r_idx, rho, trial)| {
            let sim = spec
                .sim_config(sigma_o, rho)
                .expect("spec validated");
            let (path, frames) = simulate(&sim, trial as u64);
            spec.algorithms
                .iter()
                .enumerate()
                .map(|(a_idx, &algo)| {
                    let result =
                        run_algo(algo, spec, sigma_o, rho, trial, &path, &frames, false);
                    ((a_idx, s_idx, r_idx, trial), result)
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    keyed.sort_by_key(|(key, _)| *key);
    let results: Vec<RunResult> = keyed.into_iter().map(|(_, r)| r).collect();
    let summary = summarize(spec, &results);
    Ok(ExperimentOutput { results, summary })
}

/// Per-cell aggregates in the order induced by the spec's lists.
pub fn summarize(spec: &ExperimentSpec, results: &[RunResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &algo in &spec.algorithms {
        for &sigma_o in &spec.sigma_o {
            for &rho in &spec.rho {
                let cell: Vec<&RunResult> = results
                    .iter()
                    .filter(|r| r.algorithm == algo && r.sigma_o == sigma_o && r.rho == rho)
                    .collect();
                if cell.is_empty() {
                    continue;
                }
                let ok: Vec<f64> = cell
                    .iter()
                    .filter(|r| !r.failed())
                    .map(|r| r.rmse)
                    .collect();
                let failures = cell.len() - ok.len();
                let (mean, std) = mean_and_sample_std(&ok);
                rows.push(SummaryRow {
                    algorithm: algo,
                    sigma_o,
                    rho,
                    trials: cell.len(),
                    failures,
                    mean_rmse: mean,
                    std_rmse: std,
                });
            }
        }
    }
    rows
}

/// Two-pass mean and n-1 sample standard deviation; `(None, None)` for an
/// empty slice, std 0 for a single value.
fn mean_and_sample_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// Formats with six significant digits for the summary CSV.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Per-trial CSV: full-precision round-trip floats, one row per result.
pub fn render_trial_csv(results: &[RunResult]) -> String {
    let mut out = String::from("algorithm,sigma_o,rho,trial,rmse,degenerate_steps,status\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.algorithm, r.sigma_o, r.rho, r.trial, r.rmse, r.degenerate_steps, r.status
        );
    }
    out
}

/// Summary CSV: six significant digits.
pub fn render_summary_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from("algorithm,sigma_o,rho,trials,failures,mean_rmse,std_rmse\n");
    for row in summary {
        let mean = row.mean_rmse.map_or("NaN".to_string(), format_sig6);
        let std = row.std_rmse.map_or("NaN".to_string(), format_sig6);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.algorithm, row.sigma_o, row.rho, row.trials, row.failures, mean, std
        );
    }
    out
}

/// Summary JSON: full precision, for machine consumption.
pub fn render_summary_json(summary: &[SummaryRow]) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

/// Trajectory CSV for one trial: truth plus each estimator's per-step
/// prediction (empty cell for estimators that were not run or failed).
pub fn render_trajectory_csv(path: &TruePath, results: &[RunResult]) -> String {
    let pick = |algo: AlgorithmId| -> Option<&Vec<f64>> {
        results
            .iter()
            .find(|r| r.algorithm == algo)
            .and_then(|r| r.predictions.as_ref())
    };
    let nh = pick(AlgorithmId::Nh);
    let bayes = pick(AlgorithmId::Bayes);
    let pf = pick(AlgorithmId::Pf);
    let cell = |preds: Option<&Vec<f64>>, t: usize| -> String {
        preds
            .and_then(|p| p.get(t))
            .map_or(String::new(), |v| v.to_string())
    };
    let mut out = String::from("t,z_true,pred_nh,pred_bayes,pred_pf\n");
    for (t, z) in path.states.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t + 1,
            z,
            cell(nh, t),
            cell(bayes, t),
            cell(pf, t)
        );
    }
    out
}

/// Frame-replay CSV: one row per step, one column per grid cell.
pub fn render_frames_csv(cfg: &SimConfig, trial: u64) -> String {
    let (_, frames) = simulate(cfg, trial);
    let mut out = String::from("t");
    for cell in cfg.grid.cells() {
        let _ = write!(out, ",M({cell})");
    }
    out.push('\n');
    for (t, frame) in frames.iter().enumerate() {
        let _ = write!(out, "{}", t + 1);
        for v in &frame.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes `content` to `path`, creating parent directories.
pub fn write_file(path: &Path, content: &str) -> Result<(), BenchError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// Quantile-regret trajectory of the weighting rule on i.i.d. coin-flip
/// losses, recorded at a few checkpoints per seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretCurve {
    pub n_actions: usize,
    pub horizon: usize,
    pub checkpoints: Vec<usize>,
    /// `per_seed[s][k]` is the quantile regret at `checkpoints[k]` for seed
    /// index `s`.
    pub per_seed: Vec<Vec<f64>>,
    /// Mean over seeds per checkpoint.
    pub means: Vec<f64>,
}

/// Runs the undiscounted weighting rule on `n_actions` experts whose
/// per-step losses are independent fair coin flips, and reports the regret
/// to the best action (quantile `1/N`) at `horizon/16`, `horizon/4`, and
/// `horizon`.
pub fn regret_bench(
    n_actions: usize,
    horizon: usize,
    seeds: usize,
    base_seed: u64,
) -> Result<RegretCurve, BenchError> {
    if n_actions < 2 {
        return Err(BenchError::InvalidSpec("need at least two actions".into()));
    }
    if horizon == 0 || seeds == 0 {
        return Err(BenchError::InvalidSpec(
            "horizon and seed count must be positive".into(),
        ));
    }
    let mut checkpoints = vec![
        (horizon / 16).max(1),
        (horizon / 4).max(1),
        horizon,
    ];
    checkpoints.dedup();
    let hedge = HedgeConfig::undiscounted();
    let quantile = 1.0 / n_actions as f64;
    let mut per_seed = Vec::with_capacity(seeds);
    for s in 0..seeds {
        let mut rng = substream(base_seed, &[s as u64, STREAM_REGRET]);
        let mut regrets = RegretVector::new(vec![0.0; n_actions]);
        let mut weights = hedge.compute_weights(&regrets)?;
        let mut cumulative = vec![0.0f64; n_actions];
        let mut algorithm_loss = 0.0f64;
        let mut row = Vec::with_capacity(checkpoints.len());
        let mut losses = vec![0.0f64; n_actions];
        for t in 1..=horizon {
            for l in &mut losses {
                *l = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            }
            let (next, step_loss) = hedge.update_regrets(&regrets, &losses, &weights)?;
            regrets = next;
            weights = hedge.compute_weights(&regrets)?;
            for (c, l) in cumulative.iter_mut().zip(&losses) {
                *c += l;
            }
            algorithm_loss += step_loss;
            if checkpoints.contains(&t) {
                row.push(quantile_regret(&RegretDiagnostics {
                    cumulative_losses: cumulative.clone(),
                    algorithm_loss,
                    quantile,
                })?);
            }
        }
        per_seed.push(row);
    }
    let means = (0..checkpoints.len())
        .map(|k| per_seed.iter().map(|row| row[k]).sum::<f64>() / seeds as f64)
        .collect();
    Ok(RegretCurve {
        n_actions,
        horizon,
        checkpoints,
        per_seed,
        means,
    })
}

/// Regret-curve CSV: one row per (seed, checkpoint), then mean rows.
pub fn render_regret_csv(curve: &RegretCurve) -> String {
    let mut out = String::from("seed,t,quantile_regret\n");
    for (s, row) in curve.per_seed.iter().enumerate() {
        for (k, value) in row.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", s, curve.checkpoints[k], value);
        }
    }
    for (k, mean) in curve.means.iter().enumerate() {
        let _ = writeln!(out, "mean,{},{}", curve.checkpoints[k], mean);
    }
    out
}
