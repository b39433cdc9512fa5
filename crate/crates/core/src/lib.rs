//! Online conformal prediction for time series that switch between regimes.
//!
//! The central type is [`CptcEngine`]: it keeps one nonconformity-score pool
//! and one adaptive miscoverage target per discrete state, builds a
//! state-specific band for every state a state predictor considers possible,
//! and aggregates those bands into a single prediction set. After the target
//! is revealed only the sampled state's target and pool move, so each state
//! runs its own adaptive conformal loop.
//!
//! ```
//! use cptc::{CptcConfig, CptcEngine, StateDistribution, StateLinearForecaster};
//!
//! // two regimes around 0 and 10
//! let forecaster = StateLinearForecaster::new(vec![vec![0.0], vec![0.0]], vec![0.0, 10.0])?;
//! let mut engine = CptcEngine::new(CptcConfig::new(2, 0.1, 0.005))?;
//! for i in 0..40 {
//!     let z = i % 2;
//!     let y = 10.0 * z as f64 + 0.01 * i as f64;
//!     engine.warm_start_one(&[0.0], y, &StateDistribution::point_mass(2, z)?, &forecaster)?;
//! }
//! let p = engine.predict(&[0.0], &StateDistribution::point_mass(2, 1)?, &forecaster)?;
//! assert!(p.set.contains(10.1) && !p.set.contains(0.0));
//! # Ok::<(), cptc::Error>(())
//! ```
//!
//! Besides the engine the crate provides the interval algebra ([`set`]),
//! the conformal quantile ([`scores`]), the two aggregation rules
//! ([`aggregate`]), state predictors ([`statepred`]), per-state linear
//! forecasters ([`forecast`]), the online CP and ACI baselines
//! ([`baselines`]), synthetic data ([`datagen`]), metrics ([`metrics`]) and
//! an experiment runner ([`harness`]).

#![forbid(unsafe_code)]

pub mod aggregate;
pub mod baselines;
pub mod cptc;
pub mod datagen;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod metrics;
pub mod scores;
pub mod set;
pub mod statepred;
pub mod types;

pub use aggregate::{levelset_aggregate, union_aggregate, Aggregation};
pub use baselines::{AciEngine, Baseline, OnlineCpEngine};
pub use cptc::{CptcConfig, CptcEngine, CptcPrediction, StateSampling, StepRecord, WarmStartMode};
pub use error::{Error, Result};
pub use forecast::{Forecaster, StateLinearForecaster};
pub use scores::{conformal_quantile, nonconformity, ScorePool, Threshold};
pub use set::{Interval, PredictionSet};
pub use statepred::{StatePredictor, StatePredictorKind};
pub use types::{Observation, StateDistribution};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/prediction-sets.md")]
    mod prediction_sets {}
    #[doc = include_str!("../../../book/src/scores.md")]
    mod scores {}
    #[doc = include_str!("../../../book/src/online-calibration.md")]
    mod online_calibration {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/aggregation.md")]
    mod aggregation {}
    #[doc = include_str!("../../../book/src/state-predictors.md")]
    mod state_predictors {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
