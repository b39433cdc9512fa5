//! Nonconformity scores and the conformal quantile over a score pool.
//!
//! The quantile of a pool `S` at level `β` is taken over `S ∪ {∞}`: with
//! `n = |S|` it is the `r`-th smallest element where `r = ⌈β (n + 1)⌉`,
//! clamped to `1..=n + 1`. Rank `n + 1` is the appended `∞`, so an empty
//! pool always yields an unbounded band.

use std::collections::VecDeque;
use std::num::NonZeroUsize;

use crate::error::{Error, Result};
use crate::set::{Interval, PredictionSet};

/// Slack subtracted before taking the ceiling in the rank computation, so
/// that levels such as `0.7` paired with `n + 1 = 10` give rank 7 rather
/// than 8 after floating-point rounding.
const RANK_SLACK: f64 = 1e-9;

/// Absolute residual `|y - y_hat|`.
pub fn nonconformity(y: f64, y_hat: f64) -> f64 {
    (y - y_hat).abs()
}

/// A multiset of nonnegative scores with insertion order and optional
/// oldest-first eviction.
#[derive(Debug, Clone, Default)]
pub struct ScorePool {
    arrival: VecDeque<f64>,
    sorted: Vec<f64>,
    capacity: Option<NonZeroUsize>,
}

impl ScorePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity_limit(capacity: Option<NonZeroUsize>) -> Self {
        Self {
            capacity,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn capacity(&self) -> Option<NonZeroUsize> {
        self.capacity
    }

    /// Scores in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.arrival.iter().copied()
    }

    /// Scores in ascending order.
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn insert(&mut self, score: f64) -> Result<()> {
        if !score.is_finite() || score < 0.0 {
            return Err(Error::invalid(format!(
                "score must be finite and nonnegative, got {score}"
            )));
        }
        if let Some(cap) = self.capacity {
            while self.arrival.len() >= cap.get() {
                if let Some(old) = self.arrival.pop_front() {
                    let pos = self.sorted.partition_point(|s| s.total_cmp(&old).is_lt());
                    self.sorted.remove(pos);
                }
            }
        }
        let pos = self
            .sorted
            .partition_point(|s| s.total_cmp(&score).is_le());
        self.sorted.insert(pos, score);
        self.arrival.push_back(score);
        Ok(())
    }

    pub fn extend(&mut self, scores: impl IntoIterator<Item = f64>) -> Result<()> {
        for s in scores {
            self.insert(s)?;
        }
        Ok(())
    }

    /// `Q^{level}(S ∪ {∞})`.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        conformal_quantile(self, level)
    }
}

/// 1-based rank into `S ∪ {∞}` for a pool of `n` scores.
pub fn conformal_rank(n: usize, level: f64) -> usize {
    let raw = (level * (n + 1) as f64 - RANK_SLACK).ceil();
    (raw.max(1.0) as usize).min(n + 1)
}

/// The `⌈level (n + 1)⌉`-th smallest element of `S ∪ {∞}`.
pub fn conformal_quantile(pool: &ScorePool, level: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::invalid(format!("quantile level {level} outside [0, 1]")));
    }
    let r = conformal_rank(pool.len(), level);
    Ok(pool.sorted.get(r - 1).copied().unwrap_or(f64::INFINITY))
}

/// Band radius for a state, or the explicit empty-set marker used when the
/// miscoverage iterate has reached 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Empty,
    Radius(f64),
}

impl Threshold {
    /// Threshold for a raw (unclamped) miscoverage iterate: `alpha >= 1`
    /// gives the empty set, otherwise the quantile at `clip(1 - alpha, 0, 1)`.
    pub fn for_miscoverage(pool: &ScorePool, alpha: f64) -> Result<Self> {
        if alpha.is_nan() {
            return Err(Error::invalid("miscoverage iterate is NaN"));
        }
        if alpha >= 1.0 {
            return Ok(Threshold::Empty);
        }
        let level = (1.0 - alpha).clamp(0.0, 1.0);
        Ok(Threshold::Radius(conformal_quantile(pool, level)?))
    }
}

/// Inverts `|y - y_hat| <= q` into a closed band.
pub fn interval_from_threshold(y_hat: f64, q: Threshold) -> Result<PredictionSet> {
    match q {
        Threshold::Empty => Ok(PredictionSet::empty()),
        Threshold::Radius(q) if q.is_nan() || q < 0.0 => Err(Error::invalid(format!(
            "threshold must be nonnegative, got {q}"
        ))),
        Threshold::Radius(q) if q == f64::INFINITY => Ok(PredictionSet::full()),
        Threshold::Radius(q) => {
            if !y_hat.is_finite() {
                return Err(Error::invalid(format!("point forecast {y_hat} is not finite")));
            }
            Ok(Interval::new(y_hat - q, y_hat + q)?.into())
        }
    }
}
