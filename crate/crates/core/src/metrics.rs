//! Coverage and width summaries over step records.

use crate::cptc::StepRecord;
use crate::error::{Error, Result};

fn nonempty(records: &[StepRecord]) -> Result<()> {
    if records.is_empty() {
        Err(Error::invalid("no step records"))
    } else {
        Ok(())
    }
}

/// Fraction of steps whose target fell inside the emitted set.
pub fn coverage(records: &[StepRecord]) -> Result<f64> {
    nonempty(records)?;
    Ok(records.iter().filter(|r| r.covered).count() as f64 / records.len() as f64)
}

/// Mean total width; infinite if any step emitted an unbounded set.
pub fn mean_width(records: &[StepRecord]) -> Result<f64> {
    nonempty(records)?;
    Ok(records.iter().map(|r| r.width).sum::<f64>() / records.len() as f64)
}

/// Sliding-window coverage, one value per full window.
pub fn rolling_coverage(records: &[StepRecord], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window > records.len() {
        return Err(Error::invalid(format!(
            "window {window} must be in 1..={}",
            records.len()
        )));
    }
    let hits: Vec<usize> = records.iter().map(|r| usize::from(r.covered)).collect();
    let mut sum: usize = hits[..window].iter().sum();
    let mut out = Vec::with_capacity(records.len() - window + 1);
    out.push(sum as f64 / window as f64);
    for i in window..hits.len() {
        sum = sum + hits[i] - hits[i - window];
        out.push(sum as f64 / window as f64);
    }
    Ok(out)
}

/// For each shift position `s` (an index into `records`), the absolute gap
/// between the miscoverage rate over `records[s..s + horizon]` and `alpha`.
pub fn post_shift_deviation(
    records: &[StepRecord],
    shift_times: &[usize],
    horizon: usize,
    alpha: f64,
) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be positive"));
    }
    shift_times
        .iter()
        .map(|&s| {
            let window = records.get(s..s + horizon).ok_or_else(|| {
                Error::invalid(format!(
                    "shift at {s} with horizon {horizon} exceeds {} records",
                    records.len()
                ))
            })?;
            let err = window.iter().map(StepRecord::err).sum::<f64>() / horizon as f64;
            Ok((err - alpha).abs())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::set::{Interval, PredictionSet};

    fn rec(covered: bool, width: f64) -> StepRecord {
        let set = if width.is_finite() {
            Interval::new(0.0, width).unwrap().into()
        } else {
            PredictionSet::full()
        };
        StepRecord {
            t: 0,
            y_true: 0.0,
            prediction_set: set,
            covered,
            width,
            sampled_state: 0,
            state_dist: None,
            alphas: vec![0.1],
            per_state: vec![],
        }
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage(&vec![rec(true, 1.0); 5]).unwrap(), 1.0);
        let mut r = vec![rec(true, 1.0); 9];
        r.push(rec(false, 1.0));
        assert!((coverage(&r).unwrap() - 0.9).abs() < 1e-15);
        assert!(coverage(&[]).is_err());
    }

    #[test]
    fn width_examples() {
        assert_eq!(mean_width(&vec![rec(true, 2.0); 4]).unwrap(), 2.0);
        let r = vec![rec(true, 2.0), rec(true, f64::INFINITY)];
        assert_eq!(mean_width(&r).unwrap(), f64::INFINITY);
        assert!(mean_width(&[]).is_err());
    }

    #[test]
    fn rolling_examples() {
        let r = vec![rec(true, 1.0); 10];
        assert!(rolling_coverage(&r, 3).unwrap().iter().all(|v| *v == 1.0));
        let alt: Vec<_> = (0..10).map(|i| rec(i % 2 == 0, 1.0)).collect();
        assert!(rolling_coverage(&alt, 2).unwrap().iter().all(|v| *v == 0.5));
        let full = rolling_coverage(&alt, 10).unwrap();
        assert_eq!(full, vec![coverage(&alt).unwrap()]);
        assert!(rolling_coverage(&alt, 11).is_err());
        assert!(rolling_coverage(&alt, 0).is_err());
    }

    #[test]
    fn deviation_examples() {
        let r = vec![rec(true, 1.0); 20];
        let d = post_shift_deviation(&r, &[0, 10], 10, 0.1).unwrap();
        assert!(d.iter().all(|v| (v - 0.1).abs() < 1e-15));
        let mut r = vec![rec(true, 1.0); 20];
        r[3].covered = false;
        let d = post_shift_deviation(&r, &[0], 10, 0.1).unwrap();
        assert!(d[0].abs() < 1e-15);
        assert!(post_shift_deviation(&r, &[15], 10, 0.1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn coverage_is_one_minus_error(flags in proptest::collection::vec(proptest::bool::ANY, 1..200), w in 1usize..50) {
            let r: Vec<_> = flags.iter().map(|c| rec(*c, 1.0)).collect();
            let cov = coverage(&r).unwrap();
            let err = r.iter().map(StepRecord::err).sum::<f64>() / r.len() as f64;
            proptest::prop_assert!((cov - (1.0 - err)).abs() < 1e-12);
            let w = w.min(r.len());
            let roll = rolling_coverage(&r, w).unwrap();
            proptest::prop_assert!(roll.iter().all(|v| (0.0..=1.0).contains(v)));
            let mean = roll.iter().sum::<f64>() / roll.len() as f64;
            proptest::prop_assert!((mean - cov).abs() <= w as f64 / r.len() as f64 + 1e-12);
        }
    }
}
