//! Point forecasts.
//!
//! The conventional forecast drops undecided respondents. The homogeneity
//! forecast keeps them: a choice model fitted on the decided predicts each
//! undecided respondent's affinity for every option given their covariates,
//! and that prediction is restricted to the respondent's consideration set
//! and renormalized,
//!
//! ```text
//! P(Y = l | set, x) = P(Y = l | x, decided) / Σ_{a ∈ set} P(Y = a | x, decided)
//! ```
//!
//! Aggregating these rows with the decided votes over the observed
//! `(set, x)` pairs gives the forecast.

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::bounds::{Interval, IntervalForecast};
use crate::error::{Error, Result};
use crate::mnl::{fit, linear_scores, Constraint, DesignData, FitOptions, FitReport, MnlModel, PenaltySpec};
use crate::party::{PartyRegistry, PartySet};
use crate::survey::Survey;

/// Shares over the registry, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    pub registry: PartyRegistry,
    pub shares: Vec<f64>,
}

impl ProbabilityVector {
    pub fn get(&self, code: &str) -> Option<f64> {
        self.registry.index_of(code).map(|i| self.shares[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.registry.codes().iter().map(String::as_str).zip(self.shares.iter().copied())
    }
}

impl Serialize for ProbabilityVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.shares.len()))?;
        for (code, share) in self.iter() {
            map.serialize_entry(code, &share)?;
        }
        map.end()
    }
}

/// Weighted shares among decided respondents only.
pub fn conventional_forecast(s: &Survey) -> Result<ProbabilityVector> {
    let mut shares = vec![0.0; s.registry().len()];
    let mut total = 0.0;
    for r in s.respondents() {
        if let Some(i) = r.set.only() {
            shares[i] += r.weight;
            total += r.weight;
        }
    }
    if total == 0.0 {
        return Err(Error::NoDecided);
    }
    shares.iter_mut().for_each(|v| *v /= total);
    Ok(ProbabilityVector { registry: s.registry().clone(), shares })
}

/// One row per respondent: the probability of each registry option,
/// zero outside the respondent's set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionTable {
    pub rows: Vec<Vec<f64>>,
}

/// Model probabilities conditional on the respondent's set: a softmax over
/// the members' scores, which stays finite when the unrestricted
/// probabilities underflow.
fn restricted_proba(m: &MnlModel, x: &[f64], set: PartySet) -> Result<Vec<f64>> {
    let scores = linear_scores(m, x)?;
    let max = set.iter().map(|j| scores[j]).fold(f64::NEG_INFINITY, f64::max);
    let mut row: Vec<f64> =
        (0..scores.len()).map(|j| if set.contains(j) { (scores[j] - max).exp() } else { 0.0 }).collect();
    let denom: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= denom);
    Ok(row)
}

fn transition_rows(m: &MnlModel, fallback: Option<&MnlModel>, s: &Survey) -> Result<(TransitionTable, usize)> {
    if m.categories() != s.registry().len() {
        return Err(Error::Dimension(format!(
            "model has {} categories, registry has {} options",
            m.categories(),
            s.registry().len()
        )));
    }
    let mut fallbacks = 0;
    let mut rows = Vec::with_capacity(s.len());
    for (index, r) in s.respondents().iter().enumerate() {
        if let Some(only) = r.set.only() {
            let mut row = vec![0.0; s.registry().len()];
            row[only] = 1.0;
            rows.push(row);
            continue;
        }
        let row = match (&r.covariates, fallback) {
            (Some(c), _) => restricted_proba(m, &c.design_row(), r.set)?,
            (None, Some(f)) => {
                fallbacks += 1;
                restricted_proba(f, &[1.0], r.set)?
            }
            (None, None) => {
                return Err(Error::Respondent { index, message: "undecided respondent lacks covariates".into() })
            }
        };
        rows.push(row);
    }
    Ok((TransitionTable { rows }, fallbacks))
}

/// Transition probabilities for every respondent under a model fitted on
/// the decided, with the registry options as categories.
pub fn transition_probabilities(m: &MnlModel, s: &Survey) -> Result<TransitionTable> {
    transition_rows(m, None, s).map(|(t, _)| t)
}

fn decided_design(s: &Survey, with_covariates: bool) -> Result<DesignData> {
    let p = if with_covariates { s.schema().len() + 1 } else { 1 };
    let rows: Vec<(Vec<f64>, usize, f64)> = s
        .respondents()
        .iter()
        .filter_map(|r| {
            let choice = r.set.only()?;
            let cov = if with_covariates {
                r.covariates.as_ref()?.values().iter().map(|&v| f64::from(v)).collect()
            } else {
                Vec::new()
            };
            Some((cov, choice, r.weight))
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::NoDecided);
    }
    // mean-one weights keep the fit, ridge floor included, free of the
    // survey's weight scale
    let mean = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    DesignData::from_rows(rows.iter().map(|(c, y, w)| (c.as_slice(), *y, *w / mean)), p, s.registry().len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityForecast {
    pub forecast: ProbabilityVector,
    pub transitions: TransitionTable,
    pub report: FitReport,
    pub model: MnlModel,
    /// Undecided respondents predicted by the intercept-only fallback.
    pub fallback_count: usize,
}

/// Homogeneity-assumption point forecast.
///
/// Fits a symmetric-constraint multinomial logit on the decided respondents
/// (categories are registry options, predictors the survey covariates) and
/// aggregates decided votes with the transition rows of the undecided.
pub fn homogeneity_forecast(s: &Survey, options: &FitOptions) -> Result<HomogeneityForecast> {
    if s.is_empty() {
        return Err(Error::EmptySurvey);
    }
    let design = decided_design(s, true)?;
    let (model, report) = fit(&design, PenaltySpec::None, Constraint::Symmetric, options)?;

    let needs_fallback = s.respondents().iter().any(|r| !r.is_decided() && r.covariates.is_none());
    let fallback = if needs_fallback {
        let d = decided_design(s, false)?;
        Some(fit(&d, PenaltySpec::None, Constraint::Symmetric, options)?.0)
    } else {
        None
    };

    let (transitions, fallback_count) = transition_rows(&model, fallback.as_ref(), s)?;
    let mut shares = vec![0.0; s.registry().len()];
    for (r, row) in s.respondents().iter().zip(&transitions.rows) {
        for (j, &p) in row.iter().enumerate() {
            if p != 0.0 {
                shares[j] += r.weight * p;
            }
        }
    }
    let total = s.total_weight();
    shares.iter_mut().for_each(|v| *v /= total);

    Ok(HomogeneityForecast {
        forecast: ProbabilityVector { registry: s.registry().clone(), shares },
        transitions,
        report,
        model,
        fallback_count,
    })
}

/// Renormalizes point shares over `included`; other options get zero.
pub fn seat_share(p: &ProbabilityVector, included: PartySet) -> Result<ProbabilityVector> {
    check_included(&p.registry, included)?;
    let total: f64 = included.iter().map(|i| p.shares[i]).sum();
    if !(total > 0.0) {
        return Err(Error::Invalid("included options carry no share".into()));
    }
    let shares = (0..p.shares.len())
        .map(|i| if included.contains(i) { p.shares[i] / total } else { 0.0 })
        .collect();
    Ok(ProbabilityVector { registry: p.registry.clone(), shares })
}

/// Renormalizes intervals over `included`.
///
/// The lower bound of `l` pairs its own lower bound with every other
/// included option at its upper bound, and vice versa:
/// `lower(l) / (lower(l) + Σ_{j≠l} upper(j))` and
/// `upper(l) / (upper(l) + Σ_{j≠l} lower(j))`.
pub fn seat_share_intervals(f: &IntervalForecast, included: PartySet) -> Result<IntervalForecast> {
    check_included(&f.registry, included)?;
    let mut intervals = vec![Interval::point(0.0); f.intervals.len()];
    for l in included.iter() {
        let own = f.intervals[l];
        let (mut others_upper, mut others_lower) = (0.0, 0.0);
        for j in included.iter().filter(|&j| j != l) {
            others_upper += f.intervals[j].upper;
            others_lower += f.intervals[j].lower;
        }
        let lower_den = own.lower + others_upper;
        let upper_den = own.upper + others_lower;
        if lower_den <= 0.0 || upper_den <= 0.0 {
            return Err(Error::Invalid(format!("zero denominator renormalizing `{}`", f.registry.code(l))));
        }
        intervals[l] = Interval { lower: own.lower / lower_den, upper: own.upper / upper_den };
    }
    Ok(IntervalForecast { registry: f.registry.clone(), intervals, total_weight: f.total_weight })
}

fn check_included(registry: &PartyRegistry, included: PartySet) -> Result<()> {
    if !registry.contains_set(included) {
        return Err(Error::Invalid("included set outside the registry".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Conventional,
    Homogeneity,
}

/// JSON document for a point forecast.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastOutput {
    pub method: Method,
    pub shares: ProbabilityVector,
    pub n_decided: usize,
    pub n_undecided: usize,
}
