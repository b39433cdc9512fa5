//! The state-aware online conformal engine.
//!
//! Each discrete state `z` owns a pool of nonconformity scores and a raw
//! miscoverage iterate `alpha_z`. At every step the engine
//!
//! 1. builds a band `Γ_z = [ŷ_z - q_z, ŷ_z + q_z]` for each state with
//!    positive probability, where `ŷ_z = f(x, z)` and `q_z` is the conformal
//!    quantile of pool `z` at level `clip(1 - alpha_z, 0, 1)`;
//! 2. aggregates the `Γ_z` into one set using the state distribution;
//! 3. after `y` is revealed, samples a state `ẑ`, moves only `alpha_ẑ` by
//!    `gamma * (alpha - err)` and adds `|y - f(x, ẑ)|` to pool `ẑ`.
//!
//! The iterates are never clamped. An iterate at or above 1 yields an empty
//! state band, one at or below 0 the whole line.

use std::num::NonZeroUsize;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::Aggregation;
use crate::error::{Error, Result};
use crate::forecast::Forecaster;
use crate::scores::{interval_from_threshold, nonconformity, ScorePool, Threshold};
use crate::set::PredictionSet;
use crate::statepred::StatePredictor;
use crate::types::{Observation, StateDistribution};

/// How the state whose target is updated gets chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSampling {
    /// Draw from the state distribution with the engine's seeded generator.
    #[default]
    Random,
    /// Always take the most probable state.
    Argmax,
}

/// Where warm-start scores go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStartMode {
    /// Into the pool of a state sampled for each warm point.
    #[default]
    PerState,
    /// Into every pool.
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CptcConfig {
    pub n_states: usize,
    /// Target miscoverage.
    pub alpha: f64,
    /// Step size of the miscoverage update.
    pub gamma: f64,
    pub aggregation: Aggregation,
    pub sampling: StateSampling,
    pub warm_start: WarmStartMode,
    /// Sliding-window size for every pool; unbounded when `None`.
    pub pool_capacity: Option<NonZeroUsize>,
    pub seed: u64,
}

impl CptcConfig {
    pub fn new(n_states: usize, alpha: f64, gamma: f64) -> Self {
        Self {
            n_states,
            alpha,
            gamma,
            aggregation: Aggregation::Union,
            sampling: StateSampling::Random,
            warm_start: WarmStartMode::PerState,
            pool_capacity: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::config("n_states", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", format!("{} is outside (0, 1)", self.alpha)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::config("gamma", format!("{} must be positive", self.gamma)));
        }
        if let Aggregation::LevelSet { resolution } = self.aggregation {
            if !(resolution.is_finite() && resolution > 0.0) {
                return Err(Error::config(
                    "aggregation.resolution",
                    format!("{resolution} must be positive"),
                ));
            }
        }
        Ok(())
    }
}

/// One step's log entry. Baseline engines emit the same record with a
/// single iterate and no per-state sets.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: i64,
    pub y_true: f64,
    pub prediction_set: PredictionSet,
    pub covered: bool,
    pub width: f64,
    /// State whose target and pool were updated (0 for baselines).
    pub sampled_state: usize,
    pub state_dist: Option<StateDistribution>,
    /// Miscoverage iterates used to build this step's set.
    pub alphas: Vec<f64>,
    /// `Γ_z` for every state with positive probability.
    pub per_state: Vec<Option<PredictionSet>>,
}

impl StepRecord {
    pub fn err(&self) -> f64 {
        if self.covered {
            0.0
        } else {
            1.0
        }
    }
}

/// Output of [`CptcEngine::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct CptcPrediction {
    pub set: PredictionSet,
    pub per_state: Vec<Option<PredictionSet>>,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CptcEngine {
    config: CptcConfig,
    pools: Vec<ScorePool>,
    alphas: Vec<f64>,
    rng: ChaCha8Rng,
}

impl CptcEngine {
    pub fn new(config: CptcConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            pools: vec![ScorePool::with_capacity_limit(config.pool_capacity); config.n_states],
            alphas: vec![config.alpha; config.n_states],
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
        })
    }

    pub fn config(&self) -> &CptcConfig {
        &self.config
    }

    pub fn pools(&self) -> &[ScorePool] {
        &self.pools
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    fn check_dist(&self, dist: &StateDistribution) -> Result<()> {
        if dist.n_states() != self.config.n_states {
            return Err(Error::DimensionMismatch {
                expected: self.config.n_states,
                got: dist.n_states(),
            });
        }
        Ok(())
    }

    fn choose_state(&mut self, dist: &StateDistribution) -> usize {
        match self.config.sampling {
            StateSampling::Random => dist.sample(&mut self.rng),
            StateSampling::Argmax => dist.argmax(),
        }
    }

    /// Seeds the pools with one labeled point; the iterates are untouched.
    pub fn warm_start_one(
        &mut self,
        x: &[f64],
        y: f64,
        dist: &StateDistribution,
        forecaster: &dyn Forecaster,
    ) -> Result<()> {
        self.check_dist(dist)?;
        let z = self.choose_state(dist);
        let score = nonconformity(y, forecaster.predict(x, z)?);
        match self.config.warm_start {
            WarmStartMode::PerState => self.pools[z].insert(score),
            WarmStartMode::Shared => self.pools.iter_mut().try_for_each(|p| p.insert(score)),
        }
    }

    pub fn warm_start(
        &mut self,
        points: &[(Observation, StateDistribution)],
        forecaster: &dyn Forecaster,
    ) -> Result<()> {
        for (obs, dist) in points {
            self.warm_start_one(&obs.x, obs.y, dist, forecaster)?;
        }
        Ok(())
    }

    /// Per-state bands and their aggregate. States with zero probability get
    /// no band.
    pub fn predict(
        &self,
        x: &[f64],
        dist: &StateDistribution,
        forecaster: &dyn Forecaster,
    ) -> Result<CptcPrediction> {
        self.check_dist(dist)?;
        let mut per_state = Vec::with_capacity(self.config.n_states);
        for (z, p) in dist.probs().iter().enumerate() {
            if *p > 0.0 {
                let y_hat = forecaster.predict(x, z)?;
                let q = Threshold::for_miscoverage(&self.pools[z], self.alphas[z])?;
                per_state.push(Some(interval_from_threshold(y_hat, q)?));
            } else {
                per_state.push(None);
            }
        }
        let set = self
            .config
            .aggregation
            .aggregate(&per_state, dist, self.config.alpha)?;
        Ok(CptcPrediction {
            set,
            per_state,
            alphas: self.alphas.clone(),
        })
    }

    /// Scores the emitted set against `y`, moves the sampled state's
    /// iterate and grows its pool.
    pub fn update(
        &mut self,
        t: i64,
        x: &[f64],
        y: f64,
        prediction: CptcPrediction,
        dist: &StateDistribution,
        forecaster: &dyn Forecaster,
    ) -> Result<StepRecord> {
        self.check_dist(dist)?;
        let covered = prediction.set.contains(y);
        let err = if covered { 0.0 } else { 1.0 };
        let z = self.choose_state(dist);
        let score = nonconformity(y, forecaster.predict(x, z)?);
        self.pools[z].insert(score)?;
        self.alphas[z] += self.config.gamma * (self.config.alpha - err);
        Ok(StepRecord {
            t,
            y_true: y,
            width: prediction.set.total_width(),
            prediction_set: prediction.set,
            covered,
            sampled_state: z,
            state_dist: Some(dist.clone()),
            alphas: prediction.alphas,
            per_state: prediction.per_state,
        })
    }

    /// Predict then update on one observation.
    pub fn step(
        &mut self,
        obs: &Observation,
        dist: &StateDistribution,
        forecaster: &dyn Forecaster,
    ) -> Result<StepRecord> {
        let prediction = self.predict(&obs.x, dist, forecaster)?;
        self.update(obs.t, &obs.x, obs.y, prediction, dist, forecaster)
    }

    /// Runs the online loop over `series`, querying `predictor` for the
    /// state distribution before each target is revealed.
    pub fn run_stream(
        &mut self,
        series: &[Observation],
        predictor: &mut StatePredictor,
        forecaster: &dyn Forecaster,
    ) -> Result<Vec<StepRecord>> {
        let mut records = Vec::with_capacity(series.len());
        for obs in series {
            let dist = predictor.predict(obs, forecaster)?;
            records.push(self.step(obs, &dist, forecaster)?);
            predictor.observe(obs, forecaster)?;
        }
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::StateLinearForecaster;
    use crate::set::Interval;

    fn flat(k: usize) -> StateLinearForecaster {
        StateLinearForecaster::new(vec![vec![0.0]; k], (0..k).map(|z| z as f64 * 10.0).collect())
            .unwrap()
    }

    fn engine(k: usize) -> CptcEngine {
        CptcEngine::new(CptcConfig::new(k, 0.1, 0.005)).unwrap()
    }

    fn obs(t: i64, y: f64) -> Observation {
        Observation {
            t,
            x: vec![0.0],
            y,
            z_true: None,
        }
    }

    #[test]
    fn config_validation() {
        assert!(CptcEngine::new(CptcConfig::new(0, 0.1, 0.005)).is_err());
        assert!(CptcEngine::new(CptcConfig::new(2, 1.0, 0.005)).is_err());
        assert!(CptcEngine::new(CptcConfig::new(2, 0.1, 0.0)).is_err());
        let mut cfg = CptcConfig::new(2, 0.1, 0.005);
        cfg.aggregation = Aggregation::LevelSet { resolution: 0.0 };
        assert!(CptcEngine::new(cfg).is_err());
        let e = engine(3);
        assert_eq!(e.alphas(), &[0.1, 0.1, 0.1]);
    }

    #[test]
    fn empty_pools_give_the_whole_line() {
        let e = engine(2);
        let d = StateDistribution::new(vec![0.5, 0.5]).unwrap();
        let p = e.predict(&[0.0], &d, &flat(2)).unwrap();
        assert_eq!(p.set, PredictionSet::full());
    }

    #[test]
    fn warm_start_conserves_insertions() {
        let f = flat(2);
        let mut e = engine(2);
        let pts: Vec<_> = (0..50)
            .map(|t| (obs(t, 0.1), StateDistribution::point_mass(2, (t % 2) as usize).unwrap()))
            .collect();
        e.warm_start(&pts, &f).unwrap();
        assert_eq!(e.pools()[0].len() + e.pools()[1].len(), 50);
        assert_eq!(e.alphas(), &[0.1, 0.1]);
    }

    #[test]
    fn warm_start_single_state_leaves_other_unbounded() {
        let f = flat(2);
        let mut e = engine(2);
        let pts: Vec<_> = (0..30)
            .map(|t| (obs(t, 0.1), StateDistribution::point_mass(2, 0).unwrap()))
            .collect();
        e.warm_start(&pts, &f).unwrap();
        assert!(e.pools()[1].is_empty());
        let p = e
            .predict(&[0.0], &StateDistribution::new(vec![0.5, 0.5]).unwrap(), &f)
            .unwrap();
        assert!(p.per_state[0].as_ref().unwrap().is_bounded());
        assert_eq!(p.per_state[1].as_ref().unwrap(), &PredictionSet::full());
    }

    #[test]
    fn shared_warm_start_fills_every_pool() {
        let mut cfg = CptcConfig::new(3, 0.1, 0.005);
        cfg.warm_start = WarmStartMode::Shared;
        let mut e = CptcEngine::new(cfg).unwrap();
        let pts: Vec<_> = (0..10)
            .map(|t| (obs(t, 0.1), StateDistribution::point_mass(3, 0).unwrap()))
            .collect();
        e.warm_start(&pts, &flat(3)).unwrap();
        assert!(e.pools().iter().all(|p| p.len() == 10));
    }

    fn seeded(k: usize) -> CptcEngine {
        let f = flat(k);
        let mut e = engine(k);
        for z in 0..k {
            for i in 1..=19 {
                let y = z as f64 * 10.0 + i as f64 * 0.1;
                e.warm_start_one(&[0.0], y, &StateDistribution::point_mass(k, z).unwrap(), &f)
                    .unwrap();
            }
        }
        e
    }

    #[test]
    fn point_mass_prediction_is_that_state_band() {
        let f = flat(2);
        let e = seeded(2);
        let d = StateDistribution::point_mass(2, 1).unwrap();
        let p = e.predict(&[0.0], &d, &f).unwrap();
        // 18th of 19 scores {0.1..1.9}
        let band: PredictionSet = Interval::new(10.0 - 1.8, 10.0 + 1.8).unwrap().into();
        let got = &p.per_state[1].as_ref().unwrap().intervals()[0];
        assert!((got.lower() - 8.2).abs() < 1e-12 && (got.upper() - 11.8).abs() < 1e-12);
        assert_eq!(p.set.intervals().len(), band.intervals().len());
        assert!(p.per_state[0].is_none());
    }

    #[test]
    fn union_mode_selection() {
        let f = flat(2);
        let e = seeded(2);
        let both = e
            .predict(&[0.0], &StateDistribution::new(vec![0.7, 0.3]).unwrap(), &f)
            .unwrap();
        assert_eq!(both.set.intervals().len(), 2);
        let first = e
            .predict(&[0.0], &StateDistribution::new(vec![0.95, 0.05]).unwrap(), &f)
            .unwrap();
        assert_eq!(&first.set, first.per_state[0].as_ref().unwrap());
    }

    #[test]
    fn update_moves_only_the_sampled_state() {
        let f = flat(2);
        let mut e = seeded(2);
        let d = StateDistribution::point_mass(2, 0).unwrap();
        // covered
        let rec = e.step(&obs(1, 0.5), &d, &f).unwrap();
        assert!(rec.covered);
        assert_eq!(rec.sampled_state, 0);
        assert!((e.alphas()[0] - 0.1005).abs() < 1e-15);
        assert_eq!(e.alphas()[1], 0.1);
        assert_eq!(e.pools()[0].len(), 20);
        assert_eq!(e.pools()[1].len(), 19);

        // miscovered in state 1
        let mut e = seeded(2);
        let d = StateDistribution::point_mass(2, 1).unwrap();
        let rec = e.step(&obs(1, 50.0), &d, &f).unwrap();
        assert!(!rec.covered);
        assert!((e.alphas()[1] - 0.0955).abs() < 1e-15);
        assert_eq!(e.alphas()[0], 0.1);
        assert_eq!(e.pools()[1].len(), 20);
    }

    #[test]
    fn iterate_at_one_gives_empty_band() {
        let f = flat(1);
        let mut e = seeded(1);
        e.alphas[0] = 1.0;
        let p = e.predict(&[0.0], &StateDistribution::point_mass(1, 0).unwrap(), &f).unwrap();
        assert!(p.set.is_empty());
        e.alphas[0] = -0.01;
        let p = e.predict(&[0.0], &StateDistribution::point_mass(1, 0).unwrap(), &f).unwrap();
        assert_eq!(p.set, PredictionSet::full());
    }

    #[test]
    fn empty_stream_gives_no_records() {
        let f = flat(2);
        let mut e = engine(2);
        let mut sp = StatePredictor::new(crate::statepred::StatePredictorKind::Oracle, 2, 0).unwrap();
        assert!(e.run_stream(&[], &mut sp, &f).unwrap().is_empty());
    }

    #[test]
    fn record_dimension_checks() {
        let f = flat(2);
        let e = engine(2);
        let d = StateDistribution::point_mass(3, 0).unwrap();
        assert!(e.predict(&[0.0], &d, &f).is_err());
    }
}
