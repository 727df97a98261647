//! Benchmark command line.
//!
//! Subcommands: `sweep` runs the full RMSE comparison and writes per-trial
//! CSV, summary CSV, and summary JSON; `trial` runs the estimators on one
//! seeded trial and can dump the per-step trajectory; `regret-bench` runs
//! the weighting rule's quantile-regret growth check; `dump-frames` replays
//! one trial's measurement frames to CSV.
//!
//! Any flag can also be supplied through `--config FILE` as flat
//! `key=value` lines (the key is the flag name without the leading dashes).
//! Explicit flags win over the file. Exit codes: 0 on success, 1 on usage
//! or I/O errors, 2 when at least one trial failed numerically.

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use hedgetrack::bench::{
    regret_bench, render_frames_csv, render_regret_csv, render_summary_csv, render_summary_json,
    render_trajectory_csv, render_trial_csv, run_experiment, run_trajectory_trial, write_file,
    AlgorithmId, ExperimentSpec,
};
use hedgetrack::losses::Grid;
use hedgetrack::simulator::{PathMode, SimConfig};

#[derive(Parser)]
#[command(name = "hedgetrack", version, about = "Tracking estimator benchmark")]
struct Cli {
    /// Flat key=value settings file; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full RMSE sweep and write CSV/JSON reports.
    Sweep(SweepArgs),
    /// Run the estimators on one seeded trial.
    Trial(TrialArgs),
    /// Measure quantile-regret growth on coin-flip losses.
    RegretBench(RegretArgs),
    /// Regenerate one trial's measurement frames as CSV.
    DumpFrames(FramesArgs),
}

/// Flags shared by every simulation-backed subcommand.
#[derive(Args)]
struct TuningArgs {
    /// Steps per trial.
    #[arg(long = "t")]
    horizon: Option<usize>,
    /// Base seed for all streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Tracker population size.
    #[arg(long = "n-actions")]
    n_actions: Option<usize>,
    /// Tracker regret discount.
    #[arg(long)]
    discount: Option<f64>,
    /// Tracker child-perturbation variance.
    #[arg(long)]
    spread: Option<f64>,
    /// Filter transition standard deviation.
    #[arg(long = "sigma-d")]
    sigma_d: Option<f64>,
    /// Particle count for the particle filter.
    #[arg(long)]
    particles: Option<usize>,
    /// Pulse halfwidth in grid cells.
    #[arg(long = "w")]
    halfwidth: Option<i64>,
    /// Path mode: moving or stationary.
    #[arg(long = "path-mode")]
    path_mode: Option<String>,
    /// Steps between velocity redraws in moving mode.
    #[arg(long = "segment-length")]
    segment_length: Option<usize>,
    /// Score the grid filter with the outlier-aware mixture likelihood.
    #[arg(long = "bayes-mixture")]
    bayes_mixture: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated subset of nh,bayes,pf.
    #[arg(long)]
    algos: Option<String>,
    /// Comma-separated noise levels.
    #[arg(long = "sigma-o")]
    sigma_o: Option<String>,
    /// Comma-separated outlier fractions.
    #[arg(long)]
    rho: Option<String>,
    /// Trials per parameter cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory for trials.csv, summary.csv, summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args)]
struct TrialArgs {
    /// Comma-separated estimators to run (default: all).
    #[arg(long)]
    algo: Option<String>,
    /// Noise level for this trial.
    #[arg(long = "sigma-o")]
    sigma_o: Option<f64>,
    /// Outlier fraction for this trial.
    #[arg(long)]
    rho: Option<f64>,
    /// Trial index.
    #[arg(long)]
    trial: Option<usize>,
    /// Write t,z_true,pred_nh,pred_bayes,pred_pf rows here.
    #[arg(long = "dump-trajectory")]
    dump_trajectory: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args)]
struct RegretArgs {
    /// Number of actions.
    #[arg(long)]
    n: Option<usize>,
    /// Horizon.
    #[arg(long = "t")]
    horizon: Option<usize>,
    /// Number of independent seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FramesArgs {
    /// Noise level for this trial.
    #[arg(long = "sigma-o")]
    sigma_o: Option<f64>,
    /// Outlier fraction for this trial.
    #[arg(long)]
    rho: Option<f64>,
    /// Trial index.
    #[arg(long)]
    trial: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningArgs,
}

/// Parsed key=value settings file with flag-name keys.
struct ConfigFile {
    entries: HashMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "algos",
    "sigma-o",
    "rho",
    "trials",
    "t",
    "seed",
    "out",
    "n-actions",
    "discount",
    "spread",
    "sigma-d",
    "particles",
    "w",
    "path-mode",
    "segment-length",
    "bayes-mixture",
    "algo",
    "trial",
    "dump-trajectory",
    "n",
    "seeds",
];

impl ConfigFile {
    fn empty() -> Self {
        Self {
            entries: HashMap::new(),
        }
    }

    fn load(path: &PathBuf) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut entries = HashMap::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                format!("config line {}: expected key=value, got {line:?}", line_no + 1)
            })?;
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(format!("config line {}: unknown key {key:?}", line_no + 1));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(Self { entries })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| format!("config key {key}: cannot parse {raw:?}: {e}")),
        }
    }
}

/// Flag value if given, else config value, else the default.
fn pick<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str, default: T) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => Ok(cfg.get(key)?.unwrap_or(default)),
    }
}

/// Flag value if given, else config value.
fn pick_opt<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

fn parse_f64_list(raw: &str, what: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad {what} value {s:?}: {e}"))
        })
        .collect()
}

fn parse_algos(raw: &str) -> Result<Vec<AlgorithmId>, String> {
    raw.split(',').map(|s| s.trim().parse::<AlgorithmId>()).collect()
}

fn parse_path_mode(mode: &str, segment_length: usize) -> Result<PathMode, String> {
    match mode {
        "moving" => Ok(PathMode::PiecewiseVelocity { segment_length }),
        "stationary" => Ok(PathMode::Stationary),
        other => Err(format!(
            "unknown path mode {other:?}; expected moving or stationary"
        )),
    }
}

/// Builds a spec from the shared tuning flags, leaving the sweep axes at
/// their defaults for the single-trial subcommands.
fn resolve_tuning(tuning: &TuningArgs, cfg: &ConfigFile) -> Result<ExperimentSpec, String> {
    let mut spec = ExperimentSpec::reference(0);
    spec.horizon = pick(tuning.horizon, cfg, "t", spec.horizon)?;
    spec.seed = pick(tuning.seed, cfg, "seed", spec.seed)?;
    spec.n_actions = pick(tuning.n_actions, cfg, "n-actions", spec.n_actions)?;
    spec.discount = pick(tuning.discount, cfg, "discount", spec.discount)?;
    spec.resample_spread = pick(tuning.spread, cfg, "spread", spec.resample_spread)?;
    spec.transition_std = pick(tuning.sigma_d, cfg, "sigma-d", spec.transition_std)?;
    spec.n_particles = pick(tuning.particles, cfg, "particles", spec.n_particles)?;
    spec.pulse_halfwidth = pick(tuning.halfwidth, cfg, "w", spec.pulse_halfwidth)?;
    spec.grid = Grid::reference();
    let segment_length = pick(tuning.segment_length, cfg, "segment-length", 40)?;
    let mode_raw = pick(tuning.path_mode.clone(), cfg, "path-mode", "moving".into())?;
    spec.path_mode = parse_path_mode(&mode_raw, segment_length)?;
    spec.bayes_mixture = if tuning.bayes_mixture {
        true
    } else {
        cfg.get::<bool>("bayes-mixture")?.unwrap_or(false)
    };
    Ok(spec)
}

fn cmd_sweep(args: &SweepArgs, cfg: &ConfigFile) -> Result<bool, String> {
    let mut spec = resolve_tuning(&args.tuning, cfg)?;
    let algos_raw = pick(args.algos.clone(), cfg, "algos", "nh,bayes,pf".into())?;
    let sigma_raw = pick(args.sigma_o.clone(), cfg, "sigma-o", "1,8".into())?;
    let rho_raw = pick(
        args.rho.clone(),
        cfg,
        "rho",
        "0,0.01,0.05,0.1,0.15,0.2".into(),
    )?;
    spec.algorithms = parse_algos(&algos_raw)?;
    spec.sigma_o = parse_f64_list(&sigma_raw, "sigma-o")?;
    spec.rho = parse_f64_list(&rho_raw, "rho")?;
    spec.trials = pick(args.trials, cfg, "trials", spec.trials)?;
    let out_dir = pick(args.out.clone(), cfg, "out", PathBuf::from("hedgetrack-out"))?;

    let output = run_experiment(&spec).map_err(|e| e.to_string())?;
    write_file(&out_dir.join("trials.csv"), &render_trial_csv(&output.results))
        .map_err(|e| e.to_string())?;
    let summary_csv = render_summary_csv(&output.summary);
    write_file(&out_dir.join("summary.csv"), &summary_csv).map_err(|e| e.to_string())?;
    write_file(
        &out_dir.join("summary.json"),
        &render_summary_json(&output.summary),
    )
    .map_err(|e| e.to_string())?;
    print!("{summary_csv}");
    let failures: usize = output.summary.iter().map(|row| row.failures).sum();
    if failures > 0 {
        eprintln!("warning: {failures} trial(s) failed numerically; see trials.csv");
    }
    Ok(failures > 0)
}

fn cmd_trial(args: &TrialArgs, cfg: &ConfigFile) -> Result<bool, String> {
    let mut spec = resolve_tuning(&args.tuning, cfg)?;
    let algo_raw = pick(args.algo.clone(), cfg, "algo", "nh,bayes,pf".into())?;
    spec.algorithms = parse_algos(&algo_raw)?;
    let sigma_o = pick(args.sigma_o, cfg, "sigma-o", 1.0)?;
    let rho = pick(args.rho, cfg, "rho", 0.0)?;
    let trial = pick(args.trial, cfg, "trial", 0)?;
    let (path, results) =
        run_trajectory_trial(&spec, sigma_o, rho, trial).map_err(|e| e.to_string())?;
    println!("algorithm,sigma_o,rho,trial,rmse,status");
    for r in &results {
        println!(
            "{},{},{},{},{},{}",
            r.algorithm, r.sigma_o, r.rho, r.trial, r.rmse, r.status
        );
    }
    if let Some(dump_path) = pick_opt(args.dump_trajectory.clone(), cfg, "dump-trajectory")? {
        write_file(&dump_path, &render_trajectory_csv(&path, &results))
            .map_err(|e| e.to_string())?;
    }
    Ok(results.iter().any(|r| r.failed()))
}

fn cmd_regret(args: &RegretArgs, cfg: &ConfigFile) -> Result<bool, String> {
    let n = pick(args.n, cfg, "n", 10)?;
    let horizon = pick(args.horizon, cfg, "t", 10_000)?;
    let seeds = pick(args.seeds, cfg, "seeds", 20)?;
    let seed = pick(args.seed, cfg, "seed", 0)?;
    let curve = regret_bench(n, horizon, seeds, seed).map_err(|e| e.to_string())?;
    let csv = render_regret_csv(&curve);
    if let Some(out) = pick_opt(args.out.clone(), cfg, "out")? {
        write_file(&out, &csv).map_err(|e| e.to_string())?;
    }
    for (k, t) in curve.checkpoints.iter().enumerate() {
        println!("mean quantile regret at t={t}: {}", curve.means[k]);
    }
    let len = curve.checkpoints.len();
    if len >= 2 && curve.means[len - 2] != 0.0 {
        println!(
            "growth ratio (t={} over t={}): {}",
            curve.checkpoints[len - 1],
            curve.checkpoints[len - 2],
            curve.means[len - 1] / curve.means[len - 2]
        );
    }
    Ok(false)
}

fn cmd_dump_frames(args: &FramesArgs, cfg: &ConfigFile) -> Result<bool, String> {
    let spec = resolve_tuning(&args.tuning, cfg)?;
    let sigma_o = pick(args.sigma_o, cfg, "sigma-o", 1.0)?;
    let rho = pick(args.rho, cfg, "rho", 0.0)?;
    let trial = pick(args.trial, cfg, "trial", 0)?;
    let out = pick_opt(args.out.clone(), cfg, "out")?
        .ok_or_else(|| "dump-frames requires --out".to_string())?;
    let sim = SimConfig::new(
        sigma_o,
        rho,
        spec.pulse_halfwidth,
        spec.horizon,
        spec.grid,
        spec.path_mode,
        spec.seed,
    )
    .map_err(|e| e.to_string())?;
    write_file(&out, &render_frames_csv(&sim, trial as u64)).map_err(|e| e.to_string())?;
    Ok(false)
}

fn run(cli: Cli) -> Result<bool, String> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::empty(),
    };
    match &cli.command {
        Command::Sweep(args) => cmd_sweep(args, &cfg),
        Command::Trial(args) => cmd_trial(args, &cfg),
        Command::RegretBench(args) => cmd_regret(args, &cfg),
        Command::DumpFrames(args) => cmd_dump_frames(args, &cfg),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let kind = err.kind();
            let _ = err.print();
            let code = if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                0
            } else {
                1
            };
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(false) => {}
        Ok(true) => std::process::exit(2),
        Err(message) => {
            eprintln!("error: {message}");
            std::process::exit(1);
        }
    }
}
