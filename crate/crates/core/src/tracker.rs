//! Population tracker driven by the credit-weighting rule.
//!
//! The tracker maintains `N` candidate positions ("actions"). Each round it
//! scores every action against the incoming measurement frame, updates
//! discounted regrets, deletes every action whose regret has fallen to zero
//! or below, and refills the deleted slots with children of the surviving
//! (high-credit) actions: a child's state is a Gaussian perturbation of its
//! parent's, and its regret restarts from the parent's previous-round regret
//! charged with the child's own fresh loss. Weights over the refreshed
//! population come from [`crate::hedge_core`], the estimate is the weighted
//! mean state, and finally the dynamics map advances every action one step.
//!
//! Deletion-plus-resampling is what lets the population chase a moving
//! target: stale candidates lose credit, die, and are reborn near whatever
//! currently explains the measurements.
//!
//! States are real vectors of any fixed dimension; the benchmark uses
//! dimension 1. The loss is supplied per step as a closure so the tracker
//! is independent of any particular measurement model; `step_frame` wires
//! in the clipped-window observation loss for the 1-d benchmark.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::hedge_core::{HedgeConfig, HedgeError, RegretVector, WeightVector};
use crate::losses::{observation_loss, Grid, LossConfig, LossError};
use crate::simulator::MeasurementFrame;

/// State-advance map applied to every action at the end of a step.
pub type Dynamics = fn(&mut [f64]);

/// The identity map: actions persist where they are.
pub fn identity_dynamics(_state: &mut [f64]) {}

/// One candidate predictor: a state plus its running discounted regret.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub state: Vec<f64>,
    pub regret: f64,
}

/// Tracker parameters.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    /// Population size `N`.
    pub n_actions: usize,
    /// Regret discount `alpha` in (0, 1).
    pub discount: f64,
    /// Per-dimension variances of the child perturbation (diagonal
    /// covariance).
    pub resample_spread: Vec<f64>,
    /// Per-dimension `(lo, hi)` bounds actions live in.
    pub state_space: Vec<(f64, f64)>,
    pub dynamics: Dynamics,
    pub solver_tolerance: f64,
}

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Hedge(#[from] HedgeError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

impl TrackerConfig {
    /// Benchmark parameters: `N = 100`, `alpha = 0.02`, spread 400 over the
    /// 1-d box `[-500, 500]`, identity dynamics.
    pub fn reference() -> Self {
        Self {
            n_actions: 100,
            discount: 0.02,
            resample_spread: vec![400.0],
            state_space: vec![(-500.0, 500.0)],
            dynamics: identity_dynamics,
            solver_tolerance: HedgeConfig::DEFAULT_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<(), TrackerError> {
        if self.n_actions == 0 {
            return Err(TrackerError::InvalidConfig("need at least one action".into()));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(TrackerError::InvalidConfig(format!(
                "discount {} outside (0, 1)",
                self.discount
            )));
        }
        if self.state_space.is_empty() {
            return Err(TrackerError::InvalidConfig("state space is empty".into()));
        }
        if self.resample_spread.len() != self.state_space.len() {
            return Err(TrackerError::InvalidConfig(format!(
                "spread dimension {} does not match state dimension {}",
                self.resample_spread.len(),
                self.state_space.len()
            )));
        }
        if self.resample_spread.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(TrackerError::InvalidConfig(
                "spread variances must be positive and finite".into(),
            ));
        }
        for &(lo, hi) in &self.state_space {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(TrackerError::InvalidConfig(format!(
                    "degenerate state-space bounds ({lo}, {hi})"
                )));
            }
        }
        if !(self.solver_tolerance > 0.0) {
            return Err(TrackerError::InvalidConfig(
                "solver tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    fn hedge(&self) -> HedgeConfig {
        HedgeConfig {
            discount: self.discount,
            solver_tolerance: self.solver_tolerance,
        }
    }
}

/// The tracker's evolving population.
#[derive(Debug, Clone)]
pub struct TrackerState {
    pub actions: Vec<Action>,
    pub weights: WeightVector,
    pub t: usize,
}

impl TrackerState {
    /// Fresh population: states i.i.d. uniform over the state-space box,
    /// zero regrets, uniform weights.
    pub fn init(cfg: &TrackerConfig, rng: &mut ChaCha12Rng) -> Result<Self, TrackerError> {
        cfg.validate()?;
        let actions = (0..cfg.n_actions)
            .map(|_| {
                let state = cfg
                    .state_space
                    .iter()
                    .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                    .collect();
                Action { state, regret: 0.0 }
            })
            .collect();
        Ok(Self {
            actions,
            weights: WeightVector::uniform(cfg.n_actions),
            t: 0,
        })
    }

    /// One full round against an arbitrary loss. Returns the estimate: the
    /// weight-averaged state after deletion and resampling but before the
    /// dynamics update. `loss` may be called more than once per state
    /// (children are scored on creation) and must be deterministic.
    pub fn step(
        &mut self,
        cfg: &TrackerConfig,
        loss: &mut dyn FnMut(&[f64]) -> f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<f64>, TrackerError> {
        let hedge = cfg.hedge();
        let losses: Vec<f64> = self.actions.iter().map(|a| loss(&a.state)).collect();
        let prev_regrets: Vec<f64> = self.actions.iter().map(|a| a.regret).collect();

        let (updated, algorithm_loss) = hedge.update_regrets(
            &RegretVector::new(prev_regrets.clone()),
            &losses,
            &self.weights,
        )?;
        for (action, regret) in self.actions.iter_mut().zip(updated.regrets) {
            action.regret = regret;
        }

        let deleted: Vec<usize> = (0..self.actions.len())
            .filter(|&i| self.actions[i].regret <= 0.0)
            .collect();
        let replacements = resample(
            &deleted,
            &self.actions,
            &prev_regrets,
            &self.weights,
            algorithm_loss,
            cfg,
            loss,
            rng,
        );
        for (&slot, replacement) in deleted.iter().zip(replacements) {
            self.actions[slot] = replacement;
        }

        let regrets = RegretVector::new(self.actions.iter().map(|a| a.regret).collect());
        self.weights = hedge.compute_weights(&regrets)?;
        let est = estimate(&self.actions, &self.weights);

        for action in &mut self.actions {
            (cfg.dynamics)(&mut action.state);
        }
        self.t += 1;
        Ok(est)
    }

    /// [`Self::step`] specialized to the 1-d clipped-window observation
    /// loss against a measurement frame.
    pub fn step_frame(
        &mut self,
        cfg: &TrackerConfig,
        frame: &MeasurementFrame,
        loss_cfg: &LossConfig,
        grid: &Grid,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<f64>, TrackerError> {
        if frame.values.len() != grid.len() {
            return Err(LossError::FrameMismatch {
                frame: frame.values.len(),
                grid: grid.len(),
            }
            .into());
        }
        let mut loss = |state: &[f64]| {
            observation_loss(state[0], frame, loss_cfg, grid).expect("frame length checked")
        };
        self.step(cfg, &mut loss, rng)
    }
}

/// Replacements for the deleted slots, in slot order.
///
/// Parents are drawn with replacement from the posterior-credit pool: the
/// previous-round weights restricted to actions whose updated regret is
/// still positive (uniform over everything when no action survived, uniform
/// over survivors when the surviving prev-weight mass is zero). Each child
/// perturbs its parent's state by independent per-dimension Gaussians,
/// clamps to the state-space box, and restarts its regret from the parent's
/// previous-round regret charged with the child's own loss. Per child the
/// draw order is: parent selector, then one normal per dimension.
#[allow(clippy::too_many_arguments)]
pub fn resample(
    deleted: &[usize],
    actions: &[Action],
    prev_regrets: &[f64],
    prev_weights: &WeightVector,
    algorithm_loss: f64,
    cfg: &TrackerConfig,
    loss: &mut dyn FnMut(&[f64]) -> f64,
    rng: &mut ChaCha12Rng,
) -> Vec<Action> {
    let n = actions.len();
    let survivors: Vec<usize> = (0..n).filter(|&i| actions[i].regret > 0.0).collect();
    let (pool, pool_weights): (Vec<usize>, Vec<f64>) = if survivors.is_empty() {
        ((0..n).collect(), vec![1.0 / n as f64; n])
    } else {
        let mass: f64 = survivors.iter().map(|&i| prev_weights.weights[i]).sum();
        if mass > 0.0 {
            let w = survivors
                .iter()
                .map(|&i| prev_weights.weights[i] / mass)
                .collect();
            (survivors, w)
        } else {
            let uniform = vec![1.0 / survivors.len() as f64; survivors.len()];
            (survivors, uniform)
        }
    };
    let mut cumulative = Vec::with_capacity(pool_weights.len());
    let mut acc = 0.0;
    for w in &pool_weights {
        acc += w;
        cumulative.push(acc);
    }
    *cumulative.last_mut().expect("pool nonempty") = 1.0;

    let keep = 1.0 - cfg.discount;
    deleted
        .iter()
        .map(|_| {
            let u: f64 = rng.gen();
            let k = cumulative.partition_point(|&c| c <= u);
            let parent = pool[k.min(pool.len() - 1)];
            let state: Vec<f64> = actions[parent]
                .state
                .iter()
                .zip(&cfg.resample_spread)
                .zip(&cfg.state_space)
                .map(|((&x, &var), &(lo, hi))| {
                    let z: f64 = rng.sample(StandardNormal);
                    (x + var.sqrt() * z).clamp(lo, hi)
                })
                .collect();
            let regret = keep * prev_regrets[parent] + (algorithm_loss - loss(&state));
            Action { state, regret }
        })
        .collect()
}

/// Weighted mean state.
pub fn estimate(actions: &[Action], weights: &WeightVector) -> Vec<f64> {
    let dim = actions.first().map_or(0, |a| a.state.len());
    let mut out = vec![0.0; dim];
    for (action, &w) in actions.iter().zip(&weights.weights) {
        for (o, &x) in out.iter_mut().zip(&action.state) {
            *o += w * x;
        }
    }
    out
}
