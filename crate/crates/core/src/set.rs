//! Closed intervals on the extended real line and finite unions of them.
//!
//! A [`PredictionSet`] is always kept in normal form: intervals sorted by
//! lower endpoint, pairwise disjoint, and separated by a strictly positive
//! gap. Touching intervals such as `[1, 2]` and `[2, 3]` are coalesced.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A closed interval `[lower, upper]` whose endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() {
            return Err(Error::invalid("interval endpoint is NaN"));
        }
        if lower > upper {
            return Err(Error::invalid(format!(
                "interval lower {lower} exceeds upper {upper}"
            )));
        }
        if lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::invalid("interval collapsed at infinity"));
        }
        Ok(Self { lower, upper })
    }

    /// The whole real line.
    pub const fn full() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// `upper - lower`, infinite for unbounded intervals.
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lower, self.upper)
    }
}

/// A finite union of disjoint closed intervals, possibly empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    intervals: Vec<Interval>,
}

impl PredictionSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full() -> Self {
        Self::from(Interval::full())
    }

    /// Sorts and merges overlapping or touching intervals.
    pub fn normalize(intervals: impl IntoIterator<Item = Interval>) -> Self {
        let mut raw: Vec<Interval> = intervals.into_iter().collect();
        raw.sort_by(|a, b| a.lower.total_cmp(&b.lower));
        let mut merged: Vec<Interval> = Vec::with_capacity(raw.len());
        for iv in raw {
            match merged.last_mut() {
                Some(last) if iv.lower <= last.upper => {
                    if iv.upper > last.upper {
                        last.upper = iv.upper;
                    }
                }
                _ => merged.push(iv),
            }
        }
        Self { intervals: merged }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.intervals.iter().all(Interval::is_bounded)
    }

    /// Membership with closed endpoints.
    pub fn contains(&self, y: f64) -> bool {
        // first interval whose lower endpoint exceeds y
        let idx = self.intervals.partition_point(|iv| iv.lower <= y);
        idx > 0 && y <= self.intervals[idx - 1].upper
    }

    /// Sum of interval widths; infinite if any interval is unbounded.
    pub fn total_width(&self) -> f64 {
        self.intervals.iter().map(Interval::width).sum()
    }

    pub fn union(&self, other: &PredictionSet) -> PredictionSet {
        Self::normalize(self.intervals.iter().chain(other.intervals.iter()).copied())
    }

    /// Smallest and largest finite endpoints, if any.
    pub(crate) fn finite_endpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.intervals
            .iter()
            .flat_map(|iv| [iv.lower, iv.upper])
            .filter(|x| x.is_finite())
    }
}

impl From<Interval> for PredictionSet {
    fn from(iv: Interval) -> Self {
        Self {
            intervals: vec![iv],
        }
    }
}

/// Semicolon-joined `lo:hi` pairs; the empty set renders as an empty string.
impl fmt::Display for PredictionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, iv) in self.intervals.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{iv}")?;
        }
        Ok(())
    }
}

impl FromStr for PredictionSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::empty());
        }
        let mut out = Vec::new();
        for part in s.split(';') {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("malformed interval `{part}`")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("malformed endpoint `{v}`")))
            };
            out.push(Interval::new(parse(lo)?, parse(hi)?)?);
        }
        Ok(Self::normalize(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    fn two_piece() -> PredictionSet {
        PredictionSet::normalize([iv(1.0, 3.0), iv(5.0, 6.0)])
    }

    #[test]
    fn membership() {
        let s = two_piece();
        assert!(s.contains(2.0));
        assert!(!s.contains(4.0));
        assert!(s.contains(1.0) && s.contains(3.0) && s.contains(6.0));
        assert!(!PredictionSet::empty().contains(0.0));
        assert!(PredictionSet::full().contains(-1e300));
    }

    #[test]
    fn widths() {
        assert_eq!(two_piece().total_width(), 3.0);
        assert_eq!(PredictionSet::empty().total_width(), 0.0);
        let half = PredictionSet::from(iv(f64::NEG_INFINITY, 0.0));
        assert_eq!(half.total_width(), f64::INFINITY);
    }

    #[test]
    fn normalize_merges_and_sorts() {
        assert_eq!(
            PredictionSet::normalize([iv(1.0, 3.0), iv(2.0, 5.0)]).intervals(),
            &[iv(1.0, 5.0)]
        );
        assert_eq!(
            PredictionSet::normalize([iv(5.0, 6.0), iv(1.0, 2.0)]).intervals(),
            &[iv(1.0, 2.0), iv(5.0, 6.0)]
        );
        assert!(PredictionSet::normalize([]).is_empty());
        // touching
        assert_eq!(
            PredictionSet::normalize([iv(2.0, 3.0), iv(1.0, 2.0)]).intervals(),
            &[iv(1.0, 3.0)]
        );
        // nested
        assert_eq!(
            PredictionSet::normalize([iv(0.0, 10.0), iv(2.0, 3.0)]).intervals(),
            &[iv(0.0, 10.0)]
        );
    }

    #[test]
    fn rejects_bad_intervals() {
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
        assert!(Interval::new(f64::INFINITY, f64::INFINITY).is_err());
    }

    #[test]
    fn repr_round_trip() {
        let s = PredictionSet::normalize([
            iv(f64::NEG_INFINITY, -1.5),
            iv(0.25, 0.75),
            iv(2.0, f64::INFINITY),
        ]);
        let text = s.to_string();
        assert_eq!(text, "-inf:-1.5;0.25:0.75;2:inf");
        assert_eq!(text.parse::<PredictionSet>().unwrap(), s);
        assert_eq!("".parse::<PredictionSet>().unwrap(), PredictionSet::empty());
        assert!("1;2".parse::<PredictionSet>().is_err());
    }

    fn arb_intervals() -> impl Strategy<Value = Vec<Interval>> {
        prop::collection::vec((-20i32..20, 0i32..8), 0..12).prop_map(|v| {
            v.into_iter()
                .map(|(a, w)| iv(a as f64 * 0.5, (a + w) as f64 * 0.5))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in arb_intervals()) {
            let once = PredictionSet::normalize(raw);
            let twice = PredictionSet::normalize(once.intervals().to_vec());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn normalize_preserves_membership(raw in arb_intervals()) {
            let set = PredictionSet::normalize(raw.clone());
            for k in -90..90 {
                let y = k as f64 * 0.13;
                let brute = raw.iter().any(|i| i.lower() <= y && y <= i.upper());
                prop_assert_eq!(set.contains(y), brute);
            }
            for w in set.intervals().windows(2) {
                prop_assert!(w[0].upper() < w[1].lower());
            }
        }

        #[test]
        fn normalize_never_grows_width(raw in arb_intervals()) {
            let raw_sum: f64 = raw.iter().map(Interval::width).sum();
            prop_assert!(PredictionSet::normalize(raw).total_width() <= raw_sum + 1e-12);
        }
    }
}
