//! Online tracking of a moving target under heavy-tailed measurement noise.
//!
//! The crate bundles three estimators that consume the same stream of
//! measurement frames:
//!
//! * [`tracker`]: an expert-weighting tracker that maintains a population of
//!   candidate positions, scores them with a clipped observation loss, and
//!   resurrects low-credit candidates near high-credit ones each round.
//! * [`baselines::bayes`]: an exact grid filter matched to the nominal
//!   (outlier-free) noise model.
//! * [`baselines::particle`]: a bootstrap particle filter with systematic
//!   resampling, matched to the same nominal model.
//!
//! [`hedge_core`] holds the weighting rule shared by the tracker,
//! [`simulator`] generates target paths and measurement frames, and
//! [`bench`] orchestrates multi-trial comparisons and CSV reporting.
//!
//! All randomness flows through [`rng`], which derives independent named
//! streams from a single experiment seed so that any trial, frame, or
//! estimator run can be reproduced in isolation.

pub mod baselines;
pub mod bench;
pub mod hedge_core;
pub mod losses;
pub mod rng;
pub mod simulator;
pub mod tracker;
