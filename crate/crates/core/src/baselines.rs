//! State-agnostic online conformal baselines.
//!
//! [`OnlineCpEngine`] calibrates on every past score at a fixed level.
//! [`AciEngine`] additionally moves its miscoverage iterate after each step,
//! `alpha_{t+1} = alpha_t + gamma (alpha - err_t)`, and keeps the raw iterate
//! so that `alpha_{T+1} - alpha_1 = gamma (T alpha - Σ err_t)` holds exactly.

use crate::cptc::StepRecord;
use crate::error::{Error, Result};
use crate::scores::{interval_from_threshold, nonconformity, ScorePool, Threshold};
use crate::set::PredictionSet;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::config("alpha", format!("{alpha} is outside (0, 1)")))
    }
}

#[derive(Debug, Clone)]
pub struct OnlineCpEngine {
    pool: ScorePool,
    alpha: f64,
}

impl OnlineCpEngine {
    pub fn new(alpha: f64, pool: ScorePool) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { pool, alpha })
    }

    pub fn pool(&self) -> &ScorePool {
        &self.pool
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn predict(&self, y_hat: f64) -> Result<PredictionSet> {
        interval_from_threshold(y_hat, Threshold::for_miscoverage(&self.pool, self.alpha)?)
    }

    pub fn update(&mut self, y: f64, y_hat: f64, _emitted: &PredictionSet) -> Result<()> {
        self.pool.insert(nonconformity(y, y_hat))
    }
}

#[derive(Debug, Clone)]
pub struct AciEngine {
    pool: ScorePool,
    alpha_target: f64,
    alpha_t: f64,
    gamma: f64,
}

impl AciEngine {
    pub fn new(alpha: f64, gamma: f64, pool: ScorePool) -> Result<Self> {
        check_alpha(alpha)?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::config("gamma", format!("{gamma} must be positive")));
        }
        Ok(Self {
            pool,
            alpha_target: alpha,
            alpha_t: alpha,
            gamma,
        })
    }

    pub fn pool(&self) -> &ScorePool {
        &self.pool
    }

    pub fn alpha_target(&self) -> f64 {
        self.alpha_target
    }

    /// Current raw iterate.
    pub fn alpha_t(&self) -> f64 {
        self.alpha_t
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Overrides the raw iterate.
    pub fn set_alpha_t(&mut self, alpha_t: f64) {
        self.alpha_t = alpha_t;
    }

    pub fn predict(&self, y_hat: f64) -> Result<PredictionSet> {
        interval_from_threshold(y_hat, Threshold::for_miscoverage(&self.pool, self.alpha_t)?)
    }

    pub fn update(&mut self, y: f64, y_hat: f64, emitted: &PredictionSet) -> Result<()> {
        let err = if emitted.contains(y) { 0.0 } else { 1.0 };
        self.alpha_t += self.gamma * (self.alpha_target - err);
        self.pool.insert(nonconformity(y, y_hat))
    }
}

/// Either baseline, behind one interface.
#[derive(Debug, Clone)]
pub enum Baseline {
    OnlineCp(OnlineCpEngine),
    Aci(AciEngine),
}

impl Baseline {
    pub fn warm_start(&mut self, scores: impl IntoIterator<Item = f64>) -> Result<()> {
        match self {
            Baseline::OnlineCp(e) => e.pool.extend(scores),
            Baseline::Aci(e) => e.pool.extend(scores),
        }
    }

    fn alpha_now(&self) -> f64 {
        match self {
            Baseline::OnlineCp(e) => e.alpha,
            Baseline::Aci(e) => e.alpha_t,
        }
    }

    pub fn predict(&self, y_hat: f64) -> Result<PredictionSet> {
        match self {
            Baseline::OnlineCp(e) => e.predict(y_hat),
            Baseline::Aci(e) => e.predict(y_hat),
        }
    }

    pub fn update(&mut self, y: f64, y_hat: f64, emitted: &PredictionSet) -> Result<()> {
        match self {
            Baseline::OnlineCp(e) => e.update(y, y_hat, emitted),
            Baseline::Aci(e) => e.update(y, y_hat, emitted),
        }
    }

    /// Predict, reveal `y`, update, and log the step.
    pub fn step(&mut self, t: i64, y: f64, y_hat: f64) -> Result<StepRecord> {
        let alpha = self.alpha_now();
        let set = self.predict(y_hat)?;
        self.update(y, y_hat, &set)?;
        let covered = set.contains(y);
        Ok(StepRecord {
            t,
            y_true: y,
            width: set.total_width(),
            prediction_set: set,
            covered,
            sampled_state: 0,
            state_dist: None,
            alphas: vec![alpha],
            per_state: Vec::new(),
        })
    }
}
