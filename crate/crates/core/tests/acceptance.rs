//! Release checklist for the whole benchmark: weight-rule analytics,
//! filter and tracker invariants, simulator statistics, regret growth,
//! and the full-scale sweep's accuracy bands and orderings.
//!
//! Each test prints one `PASS:` line (visible with `--nocapture`) or
//! panics with a `FAIL:` line carrying the measured numbers. The sweep
//! behind the band checks runs once and is shared across tests.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use hedgetrack::baselines::{
    bayes_predict, bayes_update, systematic_resample, BayesConfig, GridPosterior,
};
use hedgetrack::bench::{
    regret_bench, render_summary_csv, render_trial_csv, run_experiment, run_trial, AlgorithmId,
    ExperimentOutput, ExperimentSpec,
};
use hedgetrack::hedge_core::{HedgeConfig, RegretVector};
use hedgetrack::losses::{Grid, LossConfig};
use hedgetrack::rng::{substream, STREAM_TRACKER};
use hedgetrack::simulator::{simulate, MeasurementFrame, SimConfig};
use hedgetrack::tracker::{TrackerConfig, TrackerState};

const SWEEP_SEED: u64 = 7;

fn pass(line: &str) {
    println!("PASS: {line}");
}

fn the_sweep() -> &'static (ExperimentSpec, ExperimentOutput) {
    static SWEEP: OnceLock<(ExperimentSpec, ExperimentOutput)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let spec = ExperimentSpec::reference(SWEEP_SEED);
        let output = run_experiment(&spec).expect("reference sweep runs");
        (spec, output)
    })
}

/// Mean RMSE for one summary cell; panics if the cell is missing or failed.
fn cell_mean(algo: AlgorithmId, sigma_o: f64, rho: f64) -> f64 {
    let (_, output) = the_sweep();
    let row = output
        .summary
        .iter()
        .find(|r| {
            r.algorithm == algo
                && (r.sigma_o - sigma_o).abs() < 1e-9
                && (r.rho - rho).abs() < 1e-9
        })
        .unwrap_or_else(|| panic!("no summary cell for {algo} sigma_o={sigma_o} rho={rho}"));
    assert_eq!(row.failures, 0, "failed trials in {algo} sigma_o={sigma_o} rho={rho}");
    row.mean_rmse
        .unwrap_or_else(|| panic!("no mean for {algo} sigma_o={sigma_o} rho={rho}"))
}

#[test]
fn weight_rule_properties_on_random_regrets() {
    let cfg = HedgeConfig::undiscounted();
    let mut rng = substream(1001, &[0]);
    let mut worst_residual = 0.0f64;
    for case in 0..1000u64 {
        let n = rng.gen_range(2..=64);
        let scale = 10f64.powf(rng.gen_range(-2.0..3.0));
        let mut regrets: Vec<f64> = (0..n)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                x * scale
            })
            .collect();
        if !regrets.iter().any(|&r| r > 0.0) {
            regrets[0] = scale;
        }
        let rv = RegretVector::new(regrets.clone());
        let c = cfg.solve_potential(&rv).unwrap();
        let mean_exp: f64 = regrets
            .iter()
            .map(|&r| (r.max(0.0).powi(2) / (2.0 * c)).exp())
            .sum::<f64>()
            / n as f64;
        let residual = (mean_exp - std::f64::consts::E).abs();
        assert!(
            residual <= 1e-9 * std::f64::consts::E,
            "FAIL: potential residual {residual:.3e} on case {case}"
        );
        worst_residual = worst_residual.max(residual);

        let w = cfg.compute_weights(&rv).unwrap().weights;
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12, "FAIL: weight sum {total}");
        for (i, &wi) in w.iter().enumerate() {
            assert_eq!(
                wi == 0.0,
                regrets[i] <= 0.0,
                "FAIL: support rule broken at regret {}",
                regrets[i]
            );
        }
        for i in 0..n {
            for j in 0..n {
                if regrets[i].max(0.0) > regrets[j].max(0.0) {
                    assert!(
                        w[i] >= w[j] - 1e-12,
                        "FAIL: weight not monotone: R {} -> w {} vs R {} -> w {}",
                        regrets[i], w[i], regrets[j], w[j]
                    );
                }
            }
        }

        let lambda = 10f64.powf(rng.gen_range(-3.0..3.0));
        let scaled = RegretVector::new(regrets.iter().map(|&r| lambda * r).collect());
        let w2 = cfg.compute_weights(&scaled).unwrap().weights;
        for (a, b) in w.iter().zip(&w2) {
            assert!(
                (a - b).abs() <= 1e-9,
                "FAIL: scale invariance broken at lambda {lambda}: {a} vs {b}"
            );
        }
    }
    pass(&format!(
        "weight rule on 1000 random regret vectors; worst potential residual {worst_residual:.3e}"
    ));
}

#[test]
fn potential_scale_closed_forms() {
    let cfg = HedgeConfig::undiscounted();
    for &n in &[1usize, 2, 3, 10, 100, 1000] {
        for &r in &[0.5f64, 1.0, 2.0, 17.25, 300.0] {
            let c = cfg.solve_potential(&RegretVector::new(vec![r; n])).unwrap();
            let expect = r * r / 2.0;
            assert!(
                (c - expect).abs() <= 1e-12 * expect,
                "FAIL: equal regrets n={n} r={r}: c={c} expected {expect}"
            );
        }
    }
    let c = cfg.solve_potential(&RegretVector::new(vec![2.0, 0.0])).unwrap();
    let expect = 2.0 / (2.0 * std::f64::consts::E - 1.0).ln();
    assert!(
        (c - expect).abs() <= 1e-9,
        "FAIL: one-live-action potential: c={c} expected {expect}"
    );
    pass(&format!("closed-form potential scales; [2,0] gives c={c:.15}"));
}

#[test]
fn grid_posterior_normalization_and_resampling() {
    let grid = Grid::reference();
    let sim = SimConfig::reference(1.0, 0.1, 303).unwrap();
    let (_, frames) = simulate(&sim, 0);
    let cfg = BayesConfig::new(2.0, 1.0, sim.pulse_halfwidth).unwrap();
    let mut post = GridPosterior::point_mass(&grid, 0);
    for cycle in 0..10_000usize {
        post = bayes_predict(&post, cfg.transition_std);
        post = bayes_update(&post, &frames[cycle % frames.len()], &cfg, &grid).unwrap();
        let total: f64 = post.probabilities.iter().sum();
        assert!(
            (total - 1.0).abs() <= 1e-9,
            "FAIL: posterior mass {total} after cycle {cycle}"
        );
        assert!(
            post.probabilities.iter().all(|&p| p >= 0.0),
            "FAIL: negative posterior entry after cycle {cycle}"
        );
    }

    // A frame that scores every hypothesis identically must leave the
    // posterior untouched (zero-width pulse, constant measurements).
    let flat_cfg = BayesConfig::new(2.0, 1.0, 0).unwrap();
    let flat = MeasurementFrame {
        values: vec![0.25; grid.len()],
        t: 0,
    };
    let before = post.clone();
    let after = bayes_update(&post, &flat, &flat_cfg, &grid).unwrap();
    for (a, b) in before.probabilities.iter().zip(&after.probabilities) {
        assert!((a - b).abs() <= 1e-12, "FAIL: flat update moved mass: {a} vs {b}");
    }

    let mut rng = substream(304, &[0]);
    for _ in 0..100 {
        let raw: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let picks = systematic_resample(&weights, &mut rng);
        let mut counts = vec![0usize; weights.len()];
        for &i in &picks {
            counts[i] += 1;
        }
        for (i, &count) in counts.iter().enumerate() {
            let expected = 100.0 * weights[i];
            assert!(
                (count as f64 - expected).abs() < 1.0,
                "FAIL: resample multiplicity {count} vs expected {expected}"
            );
        }
    }
    pass("grid posterior normalized through 10000 cycles; flat update is identity; resampling multiplicities within 1");
}

#[test]
fn tracker_population_containment_determinism() {
    let cfg = TrackerConfig::reference();
    let sim = SimConfig::reference(1.0, 0.1, 404).unwrap();
    let (_, frames) = simulate(&sim, 0);
    let loss_cfg = LossConfig::new(sim.pulse_halfwidth, sim.sigma_o).unwrap();

    let run = || {
        let mut rng = substream(404, &[0, STREAM_TRACKER]);
        let mut st = TrackerState::init(&cfg, &mut rng).unwrap();
        let mut estimates = Vec::new();
        for frame in &frames {
            let est = st
                .step_frame(&cfg, frame, &loss_cfg, &sim.grid, &mut rng)
                .unwrap();
            assert_eq!(st.actions.len(), cfg.n_actions, "FAIL: population changed size");
            let (lo, hi) = cfg.state_space[0];
            for action in &st.actions {
                assert!(
                    action.state[0] >= lo && action.state[0] <= hi,
                    "FAIL: action left the box: {}",
                    action.state[0]
                );
            }
            assert!(
                est[0] >= lo && est[0] <= hi,
                "FAIL: estimate left the box: {}",
                est[0]
            );
            estimates.push(est[0]);
        }
        estimates
    };
    let first = run();
    let second = run();
    assert!(
        first.iter().zip(&second).all(|(a, b)| a.to_bits() == b.to_bits()),
        "FAIL: tracker estimates not bit-identical across reruns"
    );
    pass("tracker keeps population size, containment, and bit-exact determinism over 200 steps");
}

#[test]
fn simulator_mixture_variance_and_path_bounds() {
    // Background cells (no pulse overlap) carry pure mixture noise with
    // variance (1-rho) sigma^2 + rho (10 sigma)^2 = 20.8 at rho 0.2.
    let sim = SimConfig::reference(1.0, 0.2, 505).unwrap();
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut count = 0usize;
    for trial in 0..7u64 {
        let (path, frames) = simulate(&sim, trial);
        for (t, frame) in frames.iter().enumerate() {
            let z = path.states[t];
            for (i, cell) in sim.grid.cells().enumerate() {
                if (cell as f64 - z).abs() > (sim.pulse_halfwidth as f64) + 1.0 {
                    let v = frame.values[i];
                    sum += v;
                    sum_sq += v * v;
                    count += 1;
                }
            }
        }
    }
    assert!(count >= 1_000_000, "FAIL: too few background samples: {count}");
    let mean = sum / count as f64;
    let var = sum_sq / count as f64 - mean * mean;
    assert!(
        (var - 20.8).abs() <= 0.02 * 20.8,
        "FAIL: mixture variance {var:.4} outside 20.8 +/- 2% over {count} draws"
    );

    for trial in 0..50u64 {
        let (path, _) = simulate(&SimConfig::reference(1.0, 0.0, 506).unwrap(), trial);
        assert_eq!(path.states[0], 0.0, "FAIL: path does not start at zero");
        for pair in path.states.windows(2) {
            assert!(
                (pair[1] - pair[0]).abs() <= 1.0 + 1e-12,
                "FAIL: speed bound broken: {} -> {}",
                pair[0], pair[1]
            );
            assert!(pair[1].abs() <= 500.0, "FAIL: path left the interval: {}", pair[1]);
        }
    }
    pass(&format!(
        "mixture variance {var:.4} over {count} background draws; speed and start checks on 50 paths"
    ));
}

#[test]
fn quantile_regret_growth_is_sublinear() {
    let curve = regret_bench(10, 10_000, 20, 606).unwrap();
    let len = curve.checkpoints.len();
    let quarter = curve.means[len - 2];
    let full = curve.means[len - 1];
    assert!(
        quarter > 0.0 && full > 0.0,
        "FAIL: nonpositive mean quantile regret: {quarter} / {full}"
    );
    let ratio = full / quarter;
    assert!(
        ratio <= 2.6,
        "FAIL: regret grew by {ratio:.3} from t={} to t={} (sqrt growth predicts 2.0)",
        curve.checkpoints[len - 2],
        curve.checkpoints[len - 1]
    );
    pass(&format!(
        "quantile regret ratio {ratio:.3} between t={} and t={}",
        curve.checkpoints[len - 2],
        curve.checkpoints[len - 1]
    ));
}

#[test]
fn low_noise_clean_accuracy_bands() {
    let bayes = cell_mean(AlgorithmId::Bayes, 1.0, 0.0);
    let nh = cell_mean(AlgorithmId::Nh, 1.0, 0.0);
    assert!(
        (0.8..=2.0).contains(&bayes),
        "FAIL: clean low-noise grid filter RMSE {bayes:.3} outside [0.8, 2.0]"
    );
    assert!(
        (2.0..=5.0).contains(&nh),
        "FAIL: clean low-noise tracker RMSE {nh:.3} outside [2.0, 5.0]"
    );
    assert!(
        bayes < nh,
        "FAIL: grid filter ({bayes:.3}) should beat the tracker ({nh:.3}) with a correct model"
    );
    pass(&format!("clean low noise: grid filter {bayes:.3}, tracker {nh:.3}"));
}

#[test]
fn outlier_robustness_crossover() {
    let mut failures = Vec::new();
    let nh_ratio = cell_mean(AlgorithmId::Nh, 1.0, 0.2) / cell_mean(AlgorithmId::Nh, 1.0, 0.0);
    if nh_ratio > 1.5 {
        failures.push(format!("tracker degraded {nh_ratio:.2}x at rho 0.2 (limit 1.5x)"));
    }
    let bayes_ratio =
        cell_mean(AlgorithmId::Bayes, 1.0, 0.2) / cell_mean(AlgorithmId::Bayes, 1.0, 0.0);
    if bayes_ratio < 4.0 {
        failures.push(format!(
            "grid filter degraded only {bayes_ratio:.2}x at rho 0.2 (expected >= 4x)"
        ));
    }
    for &sigma in &[1.0, 8.0] {
        for &rho in &[0.1, 0.15, 0.2] {
            let nh = cell_mean(AlgorithmId::Nh, sigma, rho);
            let bayes = cell_mean(AlgorithmId::Bayes, sigma, rho);
            if nh >= bayes {
                failures.push(format!(
                    "tracker {nh:.2} not below grid filter {bayes:.2} at sigma_o={sigma} rho={rho}"
                ));
            }
        }
    }
    assert!(
        failures.is_empty(),
        "FAIL: robustness crossover: {}",
        failures.join("; ")
    );
    pass(&format!(
        "robustness crossover: tracker ratio {nh_ratio:.2}x, grid filter ratio {bayes_ratio:.2}x, tracker ahead under outliers"
    ));
}

#[test]
fn particle_filter_collapse_under_outliers() {
    let mut failures = Vec::new();
    for &sigma in &[1.0, 8.0] {
        for &rho in &[0.05, 0.1, 0.15, 0.2] {
            let pf = cell_mean(AlgorithmId::Pf, sigma, rho);
            if pf < 50.0 {
                failures.push(format!("{pf:.1} at sigma_o={sigma} rho={rho}"));
            }
        }
    }
    assert!(
        failures.is_empty(),
        "FAIL: particle filter kept tracking under outliers (expected collapse to RMSE >= 50): {}",
        failures.join(", ")
    );
    pass("particle filter collapses (RMSE >= 50) in every outlier cell");
}

#[test]
fn high_noise_clean_parity() {
    let nh = cell_mean(AlgorithmId::Nh, 8.0, 0.0);
    let bayes = cell_mean(AlgorithmId::Bayes, 8.0, 0.0);
    let ratio = (nh / bayes).max(bayes / nh);
    assert!(
        ratio <= 1.5,
        "FAIL: clean high noise: tracker {nh:.2} vs grid filter {bayes:.2} differ {ratio:.2}x (limit 1.5x)"
    );
    pass(&format!(
        "clean high noise parity: tracker {nh:.2}, grid filter {bayes:.2} ({ratio:.2}x)"
    ));
}

#[test]
fn matched_model_bayes_is_not_worse() {
    for &sigma in &[1.0, 8.0] {
        let bayes = cell_mean(AlgorithmId::Bayes, sigma, 0.0);
        let nh = cell_mean(AlgorithmId::Nh, sigma, 0.0);
        assert!(
            bayes <= nh,
            "FAIL: with a matched model the grid filter ({bayes:.2}) should not trail the tracker ({nh:.2}) at sigma_o={sigma}"
        );
    }
    pass("matched-model grid filter is never worse than the tracker at rho 0");
}

#[test]
fn full_sweep_is_byte_deterministic() {
    let (spec, output) = the_sweep();
    let repeat = run_experiment(spec).expect("repeat sweep runs");
    assert_eq!(
        render_trial_csv(&output.results),
        render_trial_csv(&repeat.results),
        "FAIL: per-trial CSV differs between identical sweeps"
    );
    assert_eq!(
        render_summary_csv(&output.summary),
        render_summary_csv(&repeat.summary),
        "FAIL: summary CSV differs between identical sweeps"
    );
    pass("repeated full sweep renders byte-identical reports");
}

#[test]
fn single_trial_smoke_for_every_estimator() {
    // Not one of the headline checks; guards the acceptance wiring itself.
    let mut spec = ExperimentSpec::reference(707);
    spec.horizon = 30;
    for algo in AlgorithmId::ALL {
        let result = run_trial(algo, 1.0, 0.05, 0, &spec, false).unwrap();
        assert!(!result.failed(), "{algo} failed: {}", result.status);
    }
    pass("all three estimators run a short trial cleanly");
}
