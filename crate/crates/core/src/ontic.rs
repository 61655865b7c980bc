//! Consideration sets as categories of their own.
//!
//! The extended state space holds every singleton plus the `K` most frequent
//! undecided sets. A symmetric-constraint multinomial logit with a
//! categorically structured group lasso, tuned by cross-validation, relates
//! these positions to the covariates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mnl::{
    cross_validate, default_lambda_grid, fit, lambda_max, Constraint, CvResult, DesignData, FitOptions, Init, MnlModel,
    PenaltySpec,
};
use crate::party::PartySet;
use crate::survey::{undecided_groups, Survey};

pub const DEFAULT_GRID_LEN: usize = 20;
pub const DEFAULT_GRID_RATIO: f64 = 1000.0;

/// Singletons in registry order, then the most frequent undecided sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnticCategories {
    sets: Vec<PartySet>,
}

impl OnticCategories {
    pub fn sets(&self) -> &[PartySet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn index_of(&self, set: PartySet) -> Option<usize> {
        self.sets.iter().position(|&s| s == set)
    }
}

/// Builds the category list and counts respondents outside it.
///
/// `k` is capped at the number of distinct undecided sets; frequency ties
/// follow [`PartySet`] order.
pub fn build_ontic_categories(s: &Survey, k: usize) -> (OnticCategories, usize) {
    let mut sets: Vec<PartySet> = (0..s.registry().len()).map(PartySet::singleton).collect();
    sets.extend(undecided_groups(s).into_iter().take(k).map(|g| g.set));
    let cats = OnticCategories { sets };
    let dropped = s.respondents().iter().filter(|r| cats.index_of(r.set).is_none()).count();
    (cats, dropped)
}

/// Design rows for the respondents whose set is a category.
pub fn ontic_design(s: &Survey, cats: &OnticCategories) -> Result<DesignData> {
    let p = s.schema().len() + 1;
    let mut rows = Vec::new();
    for (index, r) in s.respondents().iter().enumerate() {
        let Some(cat) = cats.index_of(r.set) else { continue };
        let cov = r.covariates.as_ref().ok_or_else(|| Error::Respondent {
            index,
            message: "covariates required for the ontic model".into(),
        })?;
        let values: Vec<f64> = cov.values().iter().map(|&v| f64::from(v)).collect();
        rows.push((values, cat, r.weight));
    }
    if rows.is_empty() {
        return Err(Error::Invalid("no respondents fall into the ontic categories".into()));
    }
    DesignData::from_rows(rows.iter().map(|(c, y, w)| (c.as_slice(), *y, *w)), p, cats.len())
}

/// Coefficients by category (rows) and predictor (columns, intercept first).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub categories: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Per column: the whole covariate group is exactly zero. Always false
    /// for the intercept.
    pub zeroed: Vec<bool>,
}

impl CoefficientTable {
    pub fn from_model(model: &MnlModel, s: &Survey, cats: &OnticCategories) -> Self {
        let columns = std::iter::once("(Intercept)".to_string()).chain(s.schema().iter().cloned()).collect();
        let values = model.coefficients.outer_iter().map(|r| r.to_vec()).collect();
        let zeroed = model
            .coefficients
            .columns()
            .into_iter()
            .enumerate()
            .map(|(j, c)| j > 0 && c.iter().all(|&v| v == 0.0))
            .collect();
        Self {
            categories: cats.sets().iter().map(|&set| s.registry().format_set(set)).collect(),
            columns,
            values,
            zeroed,
        }
    }

    pub fn is_zeroed(&self, column: &str) -> Option<bool> {
        self.columns.iter().position(|c| c == column).map(|j| self.zeroed[j])
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["category".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (cat, row) in self.categories.iter().zip(&self.values) {
            let mut record = vec![cat.clone()];
            record.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnticFit {
    #[serde(skip)]
    pub model: MnlModel,
    pub table: CoefficientTable,
    pub best_lambda: f64,
    pub cv: CvResult,
    /// Respondents outside the modeled categories.
    pub dropped: usize,
}

/// Grid used when none is supplied: [`DEFAULT_GRID_LEN`] log-spaced values
/// from the smallest penalty that zeroes every group down to a thousandth
/// of it.
pub fn default_ontic_grid(s: &Survey, cats: &OnticCategories) -> Result<Vec<f64>> {
    let d = ontic_design(s, cats)?;
    let lmax = lambda_max(&d, Constraint::Symmetric);
    Ok(default_lambda_grid(lmax, DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO))
}

/// Cross-validates the group-lasso penalty and refits on all retained
/// respondents at the selected value.
pub fn fit_ontic(
    s: &Survey,
    cats: &OnticCategories,
    lambdas: Option<&[f64]>,
    folds: usize,
    seed: u64,
    options: &FitOptions,
) -> Result<OnticFit> {
    let d = ontic_design(s, cats)?;
    let grid = match lambdas {
        Some(g) => g.to_vec(),
        None => default_lambda_grid(lambda_max(&d, Constraint::Symmetric), DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO),
    };
    let cv = cross_validate(&d, &grid, folds, seed, Constraint::Symmetric, options)?;
    let (model, _) = fit(&d, PenaltySpec::CatsGroupLasso(cv.best_lambda), Constraint::Symmetric, options)?;
    let table = CoefficientTable::from_model(&model, s, cats);
    let dropped = s.len() - d.len();
    Ok(OnticFit { model, table, best_lambda: cv.best_lambda, cv, dropped })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizationPath {
    pub lambdas: Vec<f64>,
    pub groups: Vec<String>,
    /// `norms[i][g]`: norm of covariate group `g` at `lambdas[i]`.
    pub norms: Vec<Vec<f64>>,
}

impl RegularizationPath {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["lambda".to_string()];
        header.extend(self.groups.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (l, row) in self.lambdas.iter().zip(&self.norms) {
            let mut record = vec![format!("{l}")];
            record.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

/// Group norms along a descending penalty grid, warm-starting each fit from
/// the previous one.
pub fn regularization_path(
    s: &Survey,
    cats: &OnticCategories,
    lambdas: &[f64],
    options: &FitOptions,
) -> Result<RegularizationPath> {
    if lambdas.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Invalid("lambda grid must be descending".into()));
    }
    let d = ontic_design(s, cats)?;
    let mut warm = None;
    let mut norms = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let opts = FitOptions { init: warm.take().map_or(options.init.clone(), Init::Warm), ..options.clone() };
        let (model, _) = fit(&d, PenaltySpec::CatsGroupLasso(lambda), Constraint::Symmetric, &opts)?;
        norms.push(model.group_norms());
        warm = Some(model.coefficients);
    }
    Ok(RegularizationPath { lambdas: lambdas.to_vec(), groups: s.schema().to_vec(), norms })
}
