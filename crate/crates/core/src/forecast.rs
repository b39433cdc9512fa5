//! State-conditioned point forecasters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::Observation;

/// Ridge damping added to the centered normal equations.
pub const RIDGE: f64 = 1e-8;

/// A point forecaster `f(x, z)` conditioned on a discrete state.
pub trait Forecaster {
    fn n_states(&self) -> usize;

    /// Length of the feature vector.
    fn dim(&self) -> usize;

    fn predict(&self, x: &[f64], state: usize) -> Result<f64>;
}

/// One affine model `w_z · x + b_z` per state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLinearForecaster {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl StateLinearForecaster {
    pub fn new(weights: Vec<Vec<f64>>, biases: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::invalid(format!(
                "need one bias per weight vector, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        let dim = weights[0].len();
        for w in &weights {
            if w.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: w.len(),
                });
            }
        }
        if weights.iter().flatten().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::invalid("forecaster coefficients must be finite"));
        }
        Ok(Self { weights, biases })
    }

    /// Per-state least squares on labeled observations. States with fewer
    /// than `dim + 1` samples reuse the fit over all observations.
    pub fn fit(train: &[Observation], n_states: usize) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::invalid("cannot fit a forecaster on an empty training set"))?;
        if n_states == 0 {
            return Err(Error::invalid("need at least one state"));
        }
        let dim = first.x.len();
        let mut by_state: Vec<Vec<&Observation>> = vec![Vec::new(); n_states];
        for obs in train {
            if obs.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: obs.x.len(),
                });
            }
            let z = obs.z_true.ok_or_else(|| {
                Error::invalid(format!("training observation t={} has no state label", obs.t))
            })?;
            if z >= n_states {
                return Err(Error::invalid(format!(
                    "state label {z} at t={} out of range for {n_states} states",
                    obs.t
                )));
            }
            by_state[z].push(obs);
        }

        let all: Vec<&Observation> = train.iter().collect();
        let global = least_squares(&all, dim)?;
        let mut weights = Vec::with_capacity(n_states);
        let mut biases = Vec::with_capacity(n_states);
        for samples in &by_state {
            let (w, b) = if samples.len() > dim {
                least_squares(samples, dim)?
            } else {
                global.clone()
            };
            weights.push(w);
            biases.push(b);
        }
        Self::new(weights, biases)
    }

    pub fn weights(&self, state: usize) -> &[f64] {
        &self.weights[state]
    }

    pub fn bias(&self, state: usize) -> f64 {
        self.biases[state]
    }
}

impl Forecaster for StateLinearForecaster {
    fn n_states(&self) -> usize {
        self.weights.len()
    }

    fn dim(&self) -> usize {
        self.weights[0].len()
    }

    fn predict(&self, x: &[f64], state: usize) -> Result<f64> {
        let w = self.weights.get(state).ok_or_else(|| {
            Error::invalid(format!(
                "state {state} out of range for {} states",
                self.weights.len()
            ))
        })?;
        if x.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                got: x.len(),
            });
        }
        Ok(w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.biases[state])
    }
}

/// Ridge regression on centered data; the intercept is not penalized.
fn least_squares(samples: &[&Observation], dim: usize) -> Result<(Vec<f64>, f64)> {
    let n = samples.len() as f64;
    let mut x_mean = DVector::<f64>::zeros(dim);
    let mut y_mean = 0.0;
    for obs in samples {
        x_mean += DVector::from_column_slice(&obs.x);
        y_mean += obs.y;
    }
    x_mean /= n;
    y_mean /= n;

    let mut gram = DMatrix::<f64>::identity(dim, dim) * RIDGE;
    let mut rhs = DVector::<f64>::zeros(dim);
    for obs in samples {
        let dx = DVector::from_column_slice(&obs.x) - &x_mean;
        gram += &dx * dx.transpose();
        rhs += &dx * (obs.y - y_mean);
    }
    let w = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::invalid("singular design matrix in least squares"))?,
    };
    let b = y_mean - w.dot(&x_mean);
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::invalid("least squares produced non-finite coefficients"));
    }
    Ok((w.iter().copied().collect(), b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(t: i64, x: Vec<f64>, y: f64, z: usize) -> Observation {
        Observation {
            t,
            x,
            y,
            z_true: Some(z),
        }
    }

    #[test]
    fn recovers_ar1_coefficient() {
        // y_t = 0.9 y_{t-1} in both states, lookback 1
        let mut y = 1.0;
        let mut train = Vec::new();
        for t in 0..60 {
            let next = 0.9 * y;
            train.push(obs(t, vec![y], next, (t % 2) as usize));
            y = next;
        }
        let f = StateLinearForecaster::fit(&train, 2).unwrap();
        for z in 0..2 {
            assert!((f.weights(z)[0] - 0.9).abs() < 1e-6, "{:?}", f.weights(z));
            assert!(f.bias(z).abs() < 1e-6);
        }
        assert!((f.predict(&[1.0], 0).unwrap() - 0.9).abs() < 1e-6);
        for o in &train {
            let z = o.z_true.unwrap();
            assert!((f.predict(&o.x, z).unwrap() - o.y).abs() <= 1e-8);
        }
    }

    #[test]
    fn constant_series_fits_bias_only() {
        let train: Vec<_> = (0..20).map(|t| obs(t, vec![3.5, 3.5], 3.5, 0)).collect();
        let f = StateLinearForecaster::fit(&train, 1).unwrap();
        assert_eq!(f.weights(0), &[0.0, 0.0]);
        assert_eq!(f.bias(0), 3.5);
    }

    #[test]
    fn separates_two_regimes() {
        let mut train = Vec::new();
        for i in 0..40 {
            let x = i as f64 * 0.1 - 2.0;
            train.push(obs(i, vec![x], x, 0));
            train.push(obs(100 + i, vec![x], -x, 1));
        }
        let f = StateLinearForecaster::fit(&train, 2).unwrap();
        assert!((f.weights(0)[0] - 1.0).abs() < 1e-6);
        assert!((f.weights(1)[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn sparse_state_falls_back_to_global() {
        let mut train: Vec<_> = (0..30).map(|i| obs(i, vec![i as f64], 2.0 * i as f64, 0)).collect();
        train.push(obs(30, vec![1.0], 5.0, 1));
        let f = StateLinearForecaster::fit(&train, 3).unwrap();
        let global = StateLinearForecaster::fit(
            &train.iter().cloned().map(|mut o| { o.z_true = Some(0); o }).collect::<Vec<_>>(),
            1,
        )
        .unwrap();
        assert_eq!(f.weights(1), global.weights(0));
        assert_eq!(f.weights(2), global.weights(0));
        assert_eq!(f.bias(2), global.bias(0));
    }

    #[test]
    fn predict_examples_and_errors() {
        let f = StateLinearForecaster::new(vec![vec![0.5], vec![0.0]], vec![0.0, 3.0]).unwrap();
        assert_eq!(f.predict(&[2.0], 0).unwrap(), 1.0);
        assert_eq!(f.predict(&[-7.0], 1).unwrap(), 3.0);
        assert!(matches!(
            f.predict(&[1.0, 2.0], 0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(f.predict(&[1.0], 2).is_err());
        assert!(StateLinearForecaster::fit(&[], 2).is_err());
    }

    proptest::proptest! {
        #[test]
        fn predict_is_affine(
            w in proptest::collection::vec(-5.0f64..5.0, 3),
            b in -5.0f64..5.0,
            x1 in proptest::collection::vec(-5.0f64..5.0, 3),
            x2 in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let f = StateLinearForecaster::new(vec![w], vec![b]).unwrap();
            let sum: Vec<f64> = x1.iter().zip(&x2).map(|(a, c)| a + c).collect();
            let lhs = f.predict(&sum, 0).unwrap() + b;
            let rhs = f.predict(&x1, 0).unwrap() + f.predict(&x2, 0).unwrap();
            proptest::prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
