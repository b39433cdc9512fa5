//! Combining per-state prediction sets into a single set.
//!
//! Two rules are available. [`union_aggregate`] takes the union of the
//! sets of the fewest most-probable states whose total probability reaches
//! `1 - alpha`. [`levelset_aggregate`] keeps every point whose
//! probability-weighted membership `Σ_z p_z 1{y ∈ Γ_z}` reaches `1 - alpha`,
//! evaluated on a uniform grid. The level set may be empty when the state
//! sets are disjoint and no single state carries enough mass; that outcome
//! is returned as is.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::set::{Interval, PredictionSet};
use crate::types::StateDistribution;

/// Slack on `>= 1 - alpha` comparisons of summed probabilities, so that
/// `0.6 + 0.3` counts as reaching `0.9`.
pub const WEIGHT_SLACK: f64 = 1e-12;

/// Grid cell size used when none is configured.
pub const DEFAULT_RESOLUTION: f64 = 0.02;

/// Upper bound on the number of grid cells a single level-set evaluation
/// may allocate.
pub const MAX_CELLS: usize = 20_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Union,
    LevelSet { resolution: f64 },
}

impl Aggregation {
    pub fn aggregate(
        &self,
        per_state: &[Option<PredictionSet>],
        dist: &StateDistribution,
        alpha: f64,
    ) -> Result<PredictionSet> {
        match *self {
            Aggregation::Union => union_aggregate(per_state, dist, alpha),
            Aggregation::LevelSet { resolution } => {
                levelset_aggregate(per_state, dist, alpha, resolution)
            }
        }
    }
}

fn check_inputs(per_state: &[Option<PredictionSet>], dist: &StateDistribution, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    if per_state.len() != dist.n_states() {
        return Err(Error::DimensionMismatch {
            expected: dist.n_states(),
            got: per_state.len(),
        });
    }
    for (z, p) in dist.probs().iter().enumerate() {
        if *p > 0.0 && per_state[z].is_none() {
            return Err(Error::invalid(format!(
                "state {z} has probability {p} but no prediction set"
            )));
        }
    }
    Ok(())
}

/// Smallest set of states whose probability reaches `1 - alpha`, chosen
/// greedily by descending probability (ties by ascending index).
pub fn select_states(dist: &StateDistribution, alpha: f64) -> Result<Vec<usize>> {
    let target = 1.0 - alpha - WEIGHT_SLACK;
    let mut order: Vec<usize> = (0..dist.n_states())
        .filter(|z| dist.probs()[*z] > 0.0)
        .collect();
    order.sort_by(|a, b| dist.probs()[*b].total_cmp(&dist.probs()[*a]).then(a.cmp(b)));
    let mut cum = 0.0;
    let mut chosen = Vec::new();
    for z in order {
        cum += dist.probs()[z];
        chosen.push(z);
        if cum >= target {
            return Ok(chosen);
        }
    }
    Err(Error::invalid(format!(
        "state probabilities total {cum}, below the target {}",
        1.0 - alpha
    )))
}

/// Union of the per-state sets of the minimal high-probability state set.
pub fn union_aggregate(
    per_state: &[Option<PredictionSet>],
    dist: &StateDistribution,
    alpha: f64,
) -> Result<PredictionSet> {
    check_inputs(per_state, dist, alpha)?;
    let chosen = select_states(dist, alpha)?;
    Ok(PredictionSet::normalize(chosen.into_iter().flat_map(|z| {
        per_state[z]
            .as_ref()
            .map(|s| s.intervals().to_vec())
            .unwrap_or_default()
    })))
}

/// Grid approximation of `{y : Σ_z p_z 1{y ∈ Γ_z} >= 1 - alpha}`.
///
/// The grid spans the hull of all finite endpoints, padded by one cell on
/// each side, and membership is evaluated at cell centers. Outside the hull
/// the weight is constant, so unbounded tails are decided exactly. A point
/// mass returns that state's set unchanged.
pub fn levelset_aggregate(
    per_state: &[Option<PredictionSet>],
    dist: &StateDistribution,
    alpha: f64,
    resolution: f64,
) -> Result<PredictionSet> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::invalid(format!("grid resolution {resolution} must be positive")));
    }
    check_inputs(per_state, dist, alpha)?;
    if let Some(z) = dist.point_mass_state() {
        return Ok(per_state[z].clone().unwrap_or_default());
    }

    let target = 1.0 - alpha - WEIGHT_SLACK;
    let support: Vec<(f64, &PredictionSet)> = dist
        .probs()
        .iter()
        .zip(per_state)
        .filter(|(p, _)| **p > 0.0)
        .filter_map(|(p, s)| s.as_ref().map(|s| (*p, s)))
        .collect();
    let weight_at = |y: f64| -> f64 {
        support
            .iter()
            .filter(|(_, s)| s.contains(y))
            .map(|(p, _)| p)
            .sum()
    };

    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, s) in &support {
        for e in s.finite_endpoints() {
            min = min.min(e);
            max = max.max(e);
        }
    }
    if min > max {
        // every set is empty or the whole line
        return Ok(if weight_at(0.0) >= target {
            PredictionSet::full()
        } else {
            PredictionSet::empty()
        });
    }

    let lo = min - resolution;
    let span = (max + resolution) - lo;
    let n_cells = (span / resolution).ceil() as usize;
    if n_cells > MAX_CELLS {
        return Err(Error::invalid(format!(
            "level-set grid needs {n_cells} cells at resolution {resolution}"
        )));
    }
    let edge = |i: usize| lo + i as f64 * resolution;

    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..n_cells {
        let marked = weight_at(edge(i) + 0.5 * resolution) >= target;
        match (marked, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                out.push(Interval::new(edge(s), edge(i))?);
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        out.push(Interval::new(edge(s), edge(n_cells))?);
    }
    if weight_at(f64::NEG_INFINITY) >= target {
        out.push(Interval::new(f64::NEG_INFINITY, lo)?);
    }
    if weight_at(f64::INFINITY) >= target {
        out.push(Interval::new(edge(n_cells), f64::INFINITY)?);
    }
    Ok(PredictionSet::normalize(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(a: f64, b: f64) -> Option<PredictionSet> {
        Some(Interval::new(a, b).unwrap().into())
    }

    fn dist(p: &[f64]) -> StateDistribution {
        StateDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn union_single_state_suffices() {
        let per = [set(0.0, 1.0), set(5.0, 6.0)];
        let out = union_aggregate(&per, &dist(&[0.95, 0.05]), 0.1).unwrap();
        assert_eq!(out, per[0].clone().unwrap());
    }

    #[test]
    fn union_needs_all_three() {
        let per = [set(1.0, 1.5), set(2.0, 2.5), set(3.0, 3.5)];
        let d = dist(&[0.5, 0.3, 0.2]);
        assert_eq!(select_states(&d, 0.1).unwrap(), vec![0, 1, 2]);
        let out = union_aggregate(&per, &d, 0.1).unwrap();
        assert_eq!(out.to_string(), "1:1.5;2:2.5;3:3.5");
    }

    #[test]
    fn union_merges_overlap() {
        let per = [set(0.0, 1.0), set(0.5, 2.0)];
        let out = union_aggregate(&per, &dist(&[0.6, 0.4]), 0.1).unwrap();
        assert_eq!(out, set(0.0, 2.0).unwrap());
        for k in -10..=30 {
            let y = k as f64 * 0.1;
            assert_eq!(out.contains(y), (0.0..=1.0).contains(&y) || (0.5..=2.0).contains(&y));
        }
    }

    #[test]
    fn union_uses_slack_for_decimal_sums() {
        // 0.6 + 0.3 rounds below 0.9
        assert_eq!(select_states(&dist(&[0.6, 0.3, 0.1]), 0.1).unwrap(), vec![0, 1]);
        // equal probabilities: lower index first
        assert_eq!(select_states(&dist(&[0.25, 0.5, 0.25]), 0.5).unwrap(), vec![1]);
        assert_eq!(select_states(&dist(&[0.5, 0.25, 0.25]), 0.3).unwrap(), vec![0, 1]);
    }

    #[test]
    fn levelset_point_mass_is_exact() {
        let per = [set(0.013, 1.777), None];
        let out = levelset_aggregate(&per, &dist(&[1.0, 0.0]), 0.1, 0.02).unwrap();
        assert_eq!(out, per[0].clone().unwrap());
    }

    #[test]
    fn levelset_intersection_when_both_needed() {
        let per = [set(0.0, 2.0), set(1.0, 3.0)];
        let out = levelset_aggregate(&per, &dist(&[0.7, 0.3]), 0.1, 0.02).unwrap();
        assert_eq!(out.intervals().len(), 1);
        let iv = out.intervals()[0];
        assert!((iv.lower() - 1.0).abs() <= 0.02 + 1e-9, "{out}");
        assert!((iv.upper() - 2.0).abs() <= 0.02 + 1e-9, "{out}");
    }

    #[test]
    fn levelset_disjoint_is_empty() {
        let per = [set(0.0, 1.0), set(2.0, 3.0)];
        let out = levelset_aggregate(&per, &dist(&[0.7, 0.3]), 0.1, 0.02).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn levelset_recovers_dominant_state() {
        let per = [set(0.0, 1.0), set(0.5, 3.0)];
        let out = levelset_aggregate(&per, &dist(&[0.95, 0.05]), 0.1, 0.02).unwrap();
        let iv = out.intervals()[0];
        assert_eq!(out.intervals().len(), 1);
        assert!(iv.lower().abs() <= 0.02 && (iv.upper() - 1.0).abs() <= 0.02);
    }

    #[test]
    fn levelset_unbounded_tails() {
        let per = [Some(PredictionSet::full()), set(0.0, 1.0)];
        // full line alone carries 0.95
        let out = levelset_aggregate(&per, &dist(&[0.95, 0.05]), 0.1, 0.02).unwrap();
        assert_eq!(out, PredictionSet::full());
        // only the bounded overlap reaches weight 1
        let out = levelset_aggregate(&per, &dist(&[0.5, 0.5]), 0.1, 0.02).unwrap();
        assert!(out.is_bounded());
        assert!(out.contains(0.5) && !out.contains(1.5));
        // all sets trivial
        let per = [Some(PredictionSet::full()), Some(PredictionSet::empty())];
        assert!(levelset_aggregate(&per, &dist(&[0.5, 0.5]), 0.1, 0.02).unwrap().is_empty());
        assert_eq!(
            levelset_aggregate(&per, &dist(&[0.95, 0.05]), 0.1, 0.02).unwrap(),
            PredictionSet::full()
        );
    }

    #[test]
    fn input_errors() {
        let per = [set(0.0, 1.0), set(0.0, 1.0)];
        let d = dist(&[0.5, 0.5]);
        assert!(levelset_aggregate(&per, &d, 0.1, 0.0).is_err());
        assert!(levelset_aggregate(&per, &d, 0.1, -1.0).is_err());
        assert!(union_aggregate(&per, &d, 1.0).is_err());
        assert!(union_aggregate(&[set(0.0, 1.0), None], &d, 0.1).is_err());
        assert!(union_aggregate(&per[..1], &d, 0.1).is_err());
    }

    fn arb_case() -> impl Strategy<Value = (Vec<Option<PredictionSet>>, StateDistribution)> {
        (1usize..=4)
            .prop_flat_map(|k| {
                (
                    prop::collection::vec((-3.0f64..3.0, 0.0f64..3.0), k),
                    prop::collection::vec(0.01f64..1.0, k),
                )
            })
            .prop_map(|(ivs, w)| {
                let total: f64 = w.iter().sum();
                let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
                let sets = ivs.into_iter().map(|(a, l)| set(a, a + l)).collect();
                (sets, StateDistribution::new(probs).unwrap())
            })
    }

    proptest! {
        #[test]
        fn selected_states_are_minimal((_sets, d) in arb_case(), alpha in 0.01f64..0.5) {
            let chosen = select_states(&d, alpha).unwrap();
            let k = d.n_states();
            let reaches = |mask: usize| {
                (0..k).filter(|z| mask >> z & 1 == 1).map(|z| d.probs()[z]).sum::<f64>()
                    >= 1.0 - alpha - WEIGHT_SLACK
            };
            for mask in 0..(1usize << k) {
                if reaches(mask) {
                    prop_assert!(mask.count_ones() as usize >= chosen.len());
                }
            }
        }

        #[test]
        fn levelset_inside_union_of_all((sets, d) in arb_case(), alpha in 0.01f64..0.5) {
            let ls = levelset_aggregate(&sets, &d, alpha, 0.02).unwrap();
            let mut y = -7.0;
            while y < 7.0 {
                let w: f64 = sets.iter().zip(d.probs()).filter(|(s, _)| s.as_ref().unwrap().contains(y)).map(|(_, p)| p).sum();
                if ls.contains(y) && w < 1.0 - alpha - WEIGHT_SLACK {
                    // only allowed within one cell of a boundary of some state set
                    let near = sets.iter().flatten().flat_map(|s| s.finite_endpoints().collect::<Vec<_>>()).any(|e| (e - y).abs() <= 0.02 + 1e-9);
                    prop_assert!(near, "y={} w={}", y, w);
                }
                y += 0.0137;
            }
        }

        #[test]
        fn levelset_converges_with_resolution((sets, d) in arb_case(), alpha in 0.01f64..0.5) {
            let coarse = levelset_aggregate(&sets, &d, alpha, 0.02).unwrap();
            let fine = levelset_aggregate(&sets, &d, alpha, 0.01).unwrap();
            let endpoints = sets.iter().flatten().map(|s| s.finite_endpoints().count()).sum::<usize>();
            let diff = (coarse.total_width() - fine.total_width()).abs();
            prop_assert!(diff <= 2.0 * 0.02 * endpoints as f64 + 1e-9, "diff {}", diff);
        }

        #[test]
        fn both_rules_reduce_under_point_mass((sets, _d) in arb_case(), alpha in 0.01f64..0.5) {
            let k = sets.len();
            let d = StateDistribution::point_mass(k, k - 1).unwrap();
            let expected = sets[k - 1].clone().unwrap();
            prop_assert_eq!(union_aggregate(&sets, &d, alpha).unwrap(), expected.clone());
            prop_assert_eq!(levelset_aggregate(&sets, &d, alpha, 0.02).unwrap(), expected);
        }
    }
}
