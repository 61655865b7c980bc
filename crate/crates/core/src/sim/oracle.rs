//! Brute-force bounds for small instances.
//!
//! Both oracles work directly from the definitions and share no arithmetic
//! with [`crate::bounds`] beyond the allocation box.

use std::collections::BTreeMap;

use crate::bounds::{effective_allocation_limits, AllocationConstraint, Interval};
use crate::error::{Error, Result};
use crate::party::PartySet;
use crate::survey::Survey;

/// Largest number of completions [`oracle_completion_bounds`] will visit.
pub const COMPLETION_BUDGET: f64 = 1e6;

/// Largest number of allocation vectors [`oracle_constrained_bounds`] will
/// visit, summed over distinct sets.
pub const GRID_BUDGET: f64 = 1e7;

pub const DEFAULT_GRID_STEP: f64 = 0.01;

/// Extreme event shares over every deterministic completion.
///
/// Each undecided respondent is assigned, in turn, to every member of their
/// set. Shares are accumulated in respondent order, so the extremes agree
/// bit for bit with a closed form that sums the same weights in the same
/// order.
pub fn oracle_completion_bounds(s: &Survey, event: PartySet) -> Result<Interval> {
    if s.is_empty() {
        return Err(Error::EmptySurvey);
    }
    if !s.registry().contains_set(event) {
        return Err(Error::Invalid("event outside the registry".into()));
    }
    let needed: f64 = s.respondents().iter().map(|r| r.set.len() as f64).product();
    if needed > COMPLETION_BUDGET {
        return Err(Error::Budget { needed, budget: COMPLETION_BUDGET });
    }
    let choices: Vec<(f64, Vec<bool>)> = s
        .respondents()
        .iter()
        .map(|r| (r.weight, r.set.iter().map(|j| event.contains(j)).collect()))
        .collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    enumerate(&choices, 0, 0.0, &mut lo, &mut hi);
    let total = s.total_weight();
    Ok(Interval { lower: lo / total, upper: hi / total })
}

fn enumerate(choices: &[(f64, Vec<bool>)], i: usize, acc: f64, lo: &mut f64, hi: &mut f64) {
    let Some((w, members)) = choices.get(i) else {
        *lo = lo.min(acc);
        *hi = hi.max(acc);
        return;
    };
    for &in_event in members {
        let next = if in_event { acc + w } else { acc };
        enumerate(choices, i + 1, next, lo, hi);
    }
}

/// Extreme event shares when each distinct set splits its weight by an
/// allocation vector on a grid inside the constraint box.
///
/// Coordinates are `alpha_eff + t * step` (plus `beta_eff` itself) for all
/// but the last member, which takes the remainder and must land in the box.
/// The result is within one grid step of the exact extremes.
pub fn oracle_constrained_bounds(
    s: &Survey,
    event: PartySet,
    c: AllocationConstraint,
    step: f64,
) -> Result<Interval> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::Invalid(format!("grid step must lie in (0, 0.5], got {step}")));
    }
    if s.is_empty() {
        return Err(Error::EmptySurvey);
    }
    if !s.registry().contains_set(event) {
        return Err(Error::Invalid("event outside the registry".into()));
    }
    let mut by_set: BTreeMap<PartySet, f64> = BTreeMap::new();
    for r in s.respondents() {
        *by_set.entry(r.set).or_insert(0.0) += r.weight;
    }
    let grids: Vec<(usize, f64, f64, Vec<f64>)> = by_set
        .keys()
        .map(|set| {
            let k = set.len();
            let (a, b) = effective_allocation_limits(k, c);
            (k, a, b, grid_values(a, b, step))
        })
        .collect();
    let needed: f64 = grids.iter().map(|(k, _, _, v)| (v.len() as f64).powi(*k as i32 - 1)).sum();
    if needed > GRID_BUDGET {
        return Err(Error::Budget { needed, budget: GRID_BUDGET });
    }

    let mut lower = 0.0;
    let mut upper = 0.0;
    for ((set, weight), (_, a, b, values)) in by_set.iter().zip(&grids) {
        let in_event: Vec<bool> = set.iter().map(|j| event.contains(j)).collect();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut search = Search { in_event: &in_event, values, a: *a, b: *b, lo: &mut lo, hi: &mut hi };
        search.run(0, 0.0, 0.0);
        if !lo.is_finite() {
            return Err(Error::Invalid(format!("grid step {step} finds no feasible allocation")));
        }
        lower += weight * lo;
        upper += weight * hi;
    }
    let total = s.total_weight();
    Ok(Interval { lower: lower / total, upper: upper / total })
}

fn grid_values(a: f64, b: f64, step: f64) -> Vec<f64> {
    let mut values: Vec<f64> = (0..).map(|t| a + t as f64 * step).take_while(|v| *v <= b + 1e-12).collect();
    if values.last().is_none_or(|v| (v - b).abs() > 1e-12) {
        values.push(b);
    }
    values
}

struct Search<'a> {
    in_event: &'a [bool],
    values: &'a [f64],
    a: f64,
    b: f64,
    lo: &'a mut f64,
    hi: &'a mut f64,
}

impl Search<'_> {
    const SLACK: f64 = 1e-9;

    fn run(&mut self, i: usize, used: f64, mass: f64) {
        let k = self.in_event.len();
        if i + 1 == k {
            let last = 1.0 - used;
            if last < self.a - Self::SLACK || last > self.b + Self::SLACK {
                return;
            }
            let mass = if self.in_event[i] { mass + last } else { mass };
            *self.lo = self.lo.min(mass);
            *self.hi = self.hi.max(mass);
            return;
        }
        let reserve = (k - i - 1) as f64 * self.a;
        for idx in 0..self.values.len() {
            let v = self.values[idx];
            if used + v + reserve > 1.0 + Self::SLACK {
                break;
            }
            let next = if self.in_event[i] { mass + v } else { mass };
            self.run(i + 1, used + v, next);
        }
    }
}
