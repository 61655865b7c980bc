//! Dempster lower/upper bounds for options and coalitions.
//!
//! Without further assumptions an undecided respondent may end up choosing
//! any member of their consideration set. For an event `E` (one option or a
//! coalition of options) the attainable share therefore ranges from the
//! weight of sets contained in `E` (belief) to the weight of sets meeting
//! `E` (plausibility).
//!
//! An [`AllocationConstraint`] narrows this range by assuming that each
//! member of a consideration set receives between `alpha` and `beta` of that
//! set's eventual votes. Sets larger than two are repaired into a feasible
//! box by [`effective_allocation_limits`]. The constrained extremes separate
//! over respondents, so each bound is a weighted sum of closed-form
//! per-respondent contributions.

use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::party::{PartyRegistry, PartySet};
use crate::survey::Survey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) || lower > upper {
            return Err(Error::Invalid(format!("invalid interval [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    pub fn point(value: f64) -> Self {
        Self { lower: value, upper: value }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lower - tol && x <= self.upper + tol
    }

    /// `self ⊆ other` up to `tol`.
    pub fn is_within(&self, other: &Interval, tol: f64) -> bool {
        self.lower >= other.lower - tol && self.upper <= other.upper + tol
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.4}, {:.4}]", self.lower, self.upper)
    }
}

/// Per-option intervals in registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalForecast {
    pub registry: PartyRegistry,
    pub intervals: Vec<Interval>,
    pub total_weight: f64,
}

impl IntervalForecast {
    pub fn get(&self, code: &str) -> Option<Interval> {
        self.registry.index_of(code).map(|i| self.intervals[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Interval)> {
        self.registry.codes().iter().map(String::as_str).zip(self.intervals.iter().copied())
    }

    pub fn lower_sum(&self) -> f64 {
        self.intervals.iter().map(|i| i.lower).sum()
    }

    pub fn upper_sum(&self) -> f64 {
        self.intervals.iter().map(|i| i.upper).sum()
    }
}

impl Serialize for IntervalForecast {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.intervals.len()))?;
        for (code, interval) in self.iter() {
            map.serialize_entry(code, &interval)?;
        }
        map.end()
    }
}

/// Bounds on the within-set share each considered option receives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationConstraint {
    pub alpha: f64,
    pub beta: f64,
}

impl AllocationConstraint {
    /// The 20/80 rule.
    pub const TWENTY_EIGHTY: Self = Self { alpha: 0.2, beta: 0.8 };
    /// No restriction; reproduces the plain Dempster bounds.
    pub const VACUOUS: Self = Self { alpha: 0.0, beta: 1.0 };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) || alpha > beta {
            return Err(Error::Constraint { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }
}

impl Default for AllocationConstraint {
    fn default() -> Self {
        Self::TWENTY_EIGHTY
    }
}

/// Feasible per-option box `[alpha_eff, beta_eff]` for a set of `k` options.
///
/// `alpha_eff = min(alpha, 1/k)` and `beta_eff` is `beta` raised to at least
/// `1/k`, then capped at `1 - (k-1) alpha_eff`. A singleton is `(1, 1)`.
pub fn effective_allocation_limits(k: usize, c: AllocationConstraint) -> (f64, f64) {
    assert!(k >= 1, "set size must be positive");
    if k == 1 {
        return (1.0, 1.0);
    }
    let inv_k = 1.0 / k as f64;
    let alpha_eff = c.alpha.min(inv_k);
    // the last max only guards rounding when alpha_eff = 1/k
    let beta_eff = c.beta.max(inv_k).min(1.0 - (k - 1) as f64 * alpha_eff).max(alpha_eff);
    (alpha_eff, beta_eff)
}

/// Extreme share of one unit of weight with set size `k`, `m` of whose
/// members lie in the event.
fn unit_contribution(k: usize, m: usize, c: Option<AllocationConstraint>) -> (f64, f64) {
    debug_assert!(m <= k);
    match c {
        None => (if m == k { 1.0 } else { 0.0 }, if m > 0 { 1.0 } else { 0.0 }),
        Some(c) => {
            let (a, b) = effective_allocation_limits(k, c);
            let (m, rest) = (m as f64, (k - m) as f64);
            let lo = (m * a).max(1.0 - rest * b).clamp(0.0, 1.0);
            let hi = (m * b).min(1.0 - rest * a).clamp(0.0, 1.0);
            debug_assert!(lo <= hi + 1e-12, "infeasible allocation box");
            (lo, hi.max(lo))
        }
    }
}

/// Bounds on the share of `event`, optionally under an allocation constraint.
pub fn event_bounds(s: &Survey, event: PartySet, c: Option<AllocationConstraint>) -> Result<Interval> {
    if s.is_empty() {
        return Err(Error::EmptySurvey);
    }
    if !s.registry().contains_set(event) {
        return Err(Error::Invalid("event outside the registry".into()));
    }
    let mut lower = 0.0;
    let mut upper = 0.0;
    for r in s.respondents() {
        let (lo, hi) = unit_contribution(r.set.len(), r.set.intersection_len(event), c);
        if lo != 0.0 {
            lower += r.weight * lo;
        }
        if hi != 0.0 {
            upper += r.weight * hi;
        }
    }
    let total = s.total_weight();
    Ok(Interval { lower: (lower / total).min(1.0), upper: (upper / total).min(1.0) })
}

fn per_option(s: &Survey, c: Option<AllocationConstraint>) -> Result<IntervalForecast> {
    let intervals = (0..s.registry().len())
        .map(|i| event_bounds(s, PartySet::singleton(i), c))
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalForecast {
        registry: s.registry().clone(),
        intervals,
        total_weight: s.total_weight(),
    })
}

/// Per-option Dempster bounds.
pub fn dempster_bounds(s: &Survey) -> Result<IntervalForecast> {
    per_option(s, None)
}

/// Per-option bounds under an allocation constraint.
pub fn constrained_bounds(s: &Survey, c: AllocationConstraint) -> Result<IntervalForecast> {
    per_option(s, Some(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Majority {
    Guaranteed,
    Possible,
    Excluded,
}

impl fmt::Display for Majority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Majority::Guaranteed => "GUARANTEED",
            Majority::Possible => "POSSIBLE",
            Majority::Excluded => "EXCLUDED",
        })
    }
}

pub const MAJORITY_THRESHOLD: f64 = 0.5;

/// A majority requires strictly more than `threshold`.
pub fn majority_classification(i: Interval, threshold: f64) -> Majority {
    if i.lower > threshold {
        Majority::Guaranteed
    } else if i.upper > threshold {
        Majority::Possible
    } else {
        Majority::Excluded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionSpec {
    pub name: String,
    pub members: PartySet,
}

impl CoalitionSpec {
    pub fn new(name: impl Into<String>, members: PartySet) -> Self {
        Self { name: name.into(), members }
    }
}

/// Parses coalition definitions, one per line: `name,CODE;CODE;...`.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_coalitions(text: &str, registry: &PartyRegistry) -> Result<Vec<CoalitionSpec>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, members) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: i as u64 + 1,
            message: "expected `name,CODE;CODE`".into(),
        })?;
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::Parse { line: i as u64 + 1, message: "empty coalition name".into() });
        }
        let members = registry.parse_set(members).map_err(|e| Error::Parse {
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        out.push(CoalitionSpec::new(name, members));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalitionResult {
    pub name: String,
    pub interval: Interval,
    pub classification: Majority,
}

/// Event bounds and majority class per coalition, in input order.
pub fn coalition_report(
    s: &Survey,
    coalitions: &[CoalitionSpec],
    c: Option<AllocationConstraint>,
    threshold: f64,
) -> Result<Vec<CoalitionResult>> {
    coalitions
        .iter()
        .map(|spec| {
            let interval = event_bounds(s, spec.members, c)?;
            Ok(CoalitionResult {
                name: spec.name.clone(),
                interval,
                classification: majority_classification(interval, threshold),
            })
        })
        .collect()
}
