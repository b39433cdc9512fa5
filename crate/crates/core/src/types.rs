use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`StateDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// One time step of a series: lookback features, scalar target and, when
/// known, the true regime (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: i64,
    pub x: Vec<f64>,
    pub y: f64,
    pub z_true: Option<usize>,
}

/// A probability vector over `K` discrete states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    probs: Vec<f64>,
}

impl StateDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("state distribution has no states"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(format!(
                "state probabilities must be finite and nonnegative: {probs:?}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(format!(
                "state probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// All mass on `state`.
    pub fn point_mass(n_states: usize, state: usize) -> Result<Self> {
        if state >= n_states {
            return Err(Error::invalid(format!(
                "state {state} out of range for {n_states} states"
            )));
        }
        let mut probs = vec![0.0; n_states];
        probs[state] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize) -> Result<Self> {
        Self::new(vec![1.0 / n_states as f64; n_states])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    /// Most probable state; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (z, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = z;
            }
        }
        best
    }

    /// The single state carrying all of the mass, if there is one.
    pub fn point_mass_state(&self) -> Option<usize> {
        let mut support = self.probs.iter().enumerate().filter(|(_, p)| **p > 0.0);
        match (support.next(), support.next()) {
            (Some((z, _)), None) => Some(z),
            _ => None,
        }
    }

    /// Draws a state with probability `probs[z]`. Zero-probability states are
    /// never returned.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (z, p) in self.probs.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            last_positive = z;
            cum += p;
            if u < cum {
                return z;
            }
        }
        last_positive
    }
}
