//! State predictors producing `p(z_t | x_t)` before `y_t` is revealed.
//!
//! Three kinds are provided:
//!
//! * [`StatePredictorKind::Oracle`] puts all mass on the true label.
//! * [`StatePredictorKind::NoisyOracle`] replaces the true label, with
//!   probability `epsilon`, by a uniformly chosen different label and puts
//!   all mass there.
//! * [`StatePredictorKind::MarkovFilter`] runs an HMM forward filter whose
//!   emissions are the per-state forecast residuals of the previous step.
//!   The distribution it reports at time `t` is the one-step-ahead
//!   predictive, i.e. the posterior after `y_{t-1}` pushed through the
//!   transition matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forecast::Forecaster;
use crate::types::{Observation, StateDistribution, MASS_TOLERANCE};

/// Lower bound on fitted emission variances.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Parameters of the forward filter.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovParams {
    transition: Vec<Vec<f64>>,
    emission_mean: Vec<f64>,
    emission_var: Vec<f64>,
    initial: Vec<f64>,
}

impl MarkovParams {
    pub fn new(
        transition: Vec<Vec<f64>>,
        emission_mean: Vec<f64>,
        emission_var: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let k = transition.len();
        if k == 0 {
            return Err(Error::invalid("transition matrix is empty"));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: row.len(),
                });
            }
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > MASS_TOLERANCE
            {
                return Err(Error::invalid(format!(
                    "transition row {i} is not a probability vector: {row:?}"
                )));
            }
        }
        for v in [&emission_mean, &emission_var, &initial] {
            if v.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: v.len(),
                });
            }
        }
        if emission_var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("emission variances must be positive"));
        }
        if emission_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("emission means must be finite"));
        }
        StateDistribution::new(initial.clone())?;
        Ok(Self {
            transition,
            emission_mean,
            emission_var,
            initial,
        })
    }

    pub fn n_states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn emission_mean(&self) -> &[f64] {
        &self.emission_mean
    }

    pub fn emission_var(&self) -> &[f64] {
        &self.emission_var
    }

    /// `prior_j = Σ_i posterior_i T_ij`.
    fn propagate(&self, posterior: &[f64]) -> Vec<f64> {
        let k = self.n_states();
        let mut out = vec![0.0; k];
        for (i, p) in posterior.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += p * self.transition[i][j];
            }
        }
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|o| *o /= total);
        out
    }

    fn log_likelihood(&self, state: usize, residual: f64) -> f64 {
        let var = self.emission_var[state];
        let d = residual - self.emission_mean[state];
        -0.5 * (d * d / var + var.ln() + std::f64::consts::TAU.ln())
    }
}

/// Estimates filter parameters from labeled training data: add-one smoothed
/// bigram transitions, and per-state mean and variance of the residuals
/// `y - f(x, z_true)`.
pub fn fit_markov(train: &[Observation], forecaster: &dyn Forecaster) -> Result<MarkovParams> {
    let k = forecaster.n_states();
    if train.is_empty() {
        return Err(Error::invalid("cannot fit a state model on an empty training set"));
    }
    let labels: Vec<usize> = train
        .iter()
        .map(|o| {
            o.z_true
                .filter(|z| *z < k)
                .ok_or_else(|| Error::invalid(format!("missing or out-of-range label at t={}", o.t)))
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![vec![1.0; k]; k];
    for w in labels.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    let transition: Vec<Vec<f64>> = counts
        .into_iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            row.into_iter().map(|c| c / total).collect()
        })
        .collect();

    let mut sums = vec![0.0; k];
    let mut sq = vec![0.0; k];
    let mut n = vec![0usize; k];
    for (obs, &z) in train.iter().zip(&labels) {
        let r = obs.y - forecaster.predict(&obs.x, z)?;
        sums[z] += r;
        sq[z] += r * r;
        n[z] += 1;
    }
    if let Some(z) = n.iter().position(|c| *c == 0) {
        return Err(Error::invalid(format!("state {z} never occurs in the training labels")));
    }
    let mean: Vec<f64> = (0..k).map(|z| sums[z] / n[z] as f64).collect();
    let var: Vec<f64> = (0..k)
        .map(|z| (sq[z] / n[z] as f64 - mean[z] * mean[z]).max(MIN_VARIANCE))
        .collect();
    let total = labels.len() as f64 + k as f64;
    let initial: Vec<f64> = n.iter().map(|c| (*c as f64 + 1.0) / total).collect();
    MarkovParams::new(transition, mean, var, initial)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatePredictorKind {
    Oracle,
    NoisyOracle { epsilon: f64 },
    MarkovFilter(MarkovParams),
}

/// A state predictor together with its per-stream runtime state.
#[derive(Debug, Clone)]
pub struct StatePredictor {
    kind: StatePredictorKind,
    n_states: usize,
    rng: ChaCha8Rng,
    posterior: Option<Vec<f64>>,
}

impl StatePredictor {
    pub fn new(kind: StatePredictorKind, n_states: usize, seed: u64) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::invalid("need at least one state"));
        }
        match &kind {
            StatePredictorKind::NoisyOracle { epsilon } if !(0.0..=1.0).contains(epsilon) => {
                return Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1]")));
            }
            StatePredictorKind::MarkovFilter(p) if p.n_states() != n_states => {
                return Err(Error::DimensionMismatch {
                    expected: n_states,
                    got: p.n_states(),
                });
            }
            _ => {}
        }
        Ok(Self {
            kind,
            n_states,
            rng: ChaCha8Rng::seed_from_u64(seed),
            posterior: None,
        })
    }

    pub fn kind(&self) -> &StatePredictorKind {
        &self.kind
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Filtered posterior after the most recent [`observe`](Self::observe),
    /// for the Markov filter.
    pub fn posterior(&self) -> Option<&[f64]> {
        self.posterior.as_deref()
    }

    fn true_label(&self, obs: &Observation) -> Result<usize> {
        match obs.z_true {
            Some(z) if z < self.n_states => Ok(z),
            Some(z) => Err(Error::invalid(format!(
                "true state {z} at t={} out of range for {} states",
                obs.t, self.n_states
            ))),
            None => Err(Error::invalid(format!(
                "oracle state predictor needs a true state at t={}",
                obs.t
            ))),
        }
    }

    /// `p(z_t | x_t)`. Must be called once per step, before `observe`.
    pub fn predict(
        &mut self,
        obs: &Observation,
        _forecaster: &dyn Forecaster,
    ) -> Result<StateDistribution> {
        match &self.kind {
            StatePredictorKind::Oracle => {
                StateDistribution::point_mass(self.n_states, self.true_label(obs)?)
            }
            StatePredictorKind::NoisyOracle { epsilon } => {
                let epsilon = *epsilon;
                let z = self.true_label(obs)?;
                let label = if self.n_states > 1 && self.rng.random::<f64>() < epsilon {
                    // uniform over the K - 1 wrong labels
                    let other = self.rng.random_range(0..self.n_states - 1);
                    if other >= z {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    z
                };
                StateDistribution::point_mass(self.n_states, label)
            }
            StatePredictorKind::MarkovFilter(params) => {
                StateDistribution::new(self.filter_prior(params))
            }
        }
    }

    fn filter_prior(&self, params: &MarkovParams) -> Vec<f64> {
        match &self.posterior {
            Some(post) => params.propagate(post),
            None => params.initial.clone(),
        }
    }

    /// Conditions the filter on the revealed target of `obs`.
    pub fn observe(&mut self, obs: &Observation, forecaster: &dyn Forecaster) -> Result<()> {
        let StatePredictorKind::MarkovFilter(params) = &self.kind else {
            return Ok(());
        };
        let prior = self.filter_prior(params);
        let mut log_post = Vec::with_capacity(self.n_states);
        for (z, p) in prior.iter().enumerate() {
            let r = obs.y - forecaster.predict(&obs.x, z)?;
            log_post.push(p.ln() + params.log_likelihood(z, r));
        }
        let peak = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::invalid(format!("filter degenerated at t={}", obs.t)));
        }
        let mut post: Vec<f64> = log_post.iter().map(|l| (l - peak).exp()).collect();
        let total: f64 = post.iter().sum();
        post.iter_mut().for_each(|p| *p /= total);
        self.posterior = Some(post);
        Ok(())
    }
}

/// Draws `z ~ dist`.
pub fn sample_state<R: Rng + ?Sized>(dist: &StateDistribution, rng: &mut R) -> usize {
    dist.sample(rng)
}
