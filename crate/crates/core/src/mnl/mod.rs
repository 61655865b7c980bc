//! Weighted multinomial logit.
//!
//! For `K` categories and `P` predictors (column 0 is the intercept) the
//! model scores category `k` at `x` as `β_k · x` and predicts
//! `softmax(β x)`. Coefficients are identified either by fixing a reference
//! row at zero or by the symmetric constraint, under which every column sums
//! to zero.
//!
//! Penalties act on the non-intercept columns only. The categorically
//! structured group lasso treats each column (all `K` coefficients of one
//! covariate) as a group, so a covariate is either active for every category
//! or removed entirely.

mod cv;
mod fit;

pub use cv::{cross_validate, default_lambda_grid, lambda_max, stratified_folds, CvResult};
pub use fit::{fit, FitOptions, FitReport, Init, StepRule};

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows of `(design row with leading 1, category, weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    x: Array2<f64>,
    y: Vec<usize>,
    w: Vec<f64>,
    categories: usize,
}

impl DesignData {
    pub fn new(x: Array2<f64>, y: Vec<usize>, w: Vec<f64>, categories: usize) -> Result<Self> {
        let (n, p) = x.dim();
        if y.len() != n || w.len() != n {
            return Err(Error::Dimension(format!("{n} design rows, {} labels, {} weights", y.len(), w.len())));
        }
        if categories < 2 {
            return Err(Error::Invalid("at least two categories are required".into()));
        }
        if p == 0 {
            return Err(Error::Dimension("design has no columns".into()));
        }
        if let Some(i) = (0..n).find(|&i| x[[i, 0]] != 1.0) {
            return Err(Error::Invalid(format!("row {i} lacks the leading intercept 1")));
        }
        if let Some(i) = y.iter().position(|&c| c >= categories) {
            return Err(Error::Invalid(format!("row {i}: category {} out of range", y[i])));
        }
        if let Some(i) = w.iter().position(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::Invalid(format!("row {i}: weight must be positive")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        Ok(Self { x: x.as_standard_layout().into_owned(), y, w, categories })
    }

    /// Builds a design from rows of `(covariates without intercept, category, weight)`.
    pub fn from_rows<'a, I>(rows: I, predictors: usize, categories: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], usize, f64)>,
    {
        let mut flat = Vec::new();
        let mut y = Vec::new();
        let mut w = Vec::new();
        for (cov, cat, weight) in rows {
            if cov.len() + 1 != predictors {
                return Err(Error::Dimension(format!("row has {} covariates, expected {}", cov.len(), predictors - 1)));
            }
            flat.push(1.0);
            flat.extend_from_slice(cov);
            y.push(cat);
            w.push(weight);
        }
        let n = y.len();
        let x = Array2::from_shape_vec((n, predictors), flat).map_err(|e| Error::Dimension(e.to_string()))?;
        Self::new(x, y, w, categories)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn predictors(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Weight per category.
    pub fn category_weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.categories];
        for (&c, &w) in self.y.iter().zip(&self.w) {
            out[c] += w;
        }
        out
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            w: rows.iter().map(|&i| self.w[i]).collect(),
            categories: self.categories,
        }
    }

    /// Merges rows with identical design row and category, summing weights.
    /// The likelihood is unchanged; binary designs shrink to at most
    /// `2^(P-1) K` rows.
    pub fn compress(&self) -> Self {
        let mut merged: BTreeMap<(Vec<u64>, usize), f64> = BTreeMap::new();
        for (i, row) in self.x.outer_iter().enumerate() {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            *merged.entry((key, self.y[i])).or_insert(0.0) += self.w[i];
        }
        let p = self.predictors();
        let mut flat = Vec::with_capacity(merged.len() * p);
        let mut y = Vec::with_capacity(merged.len());
        let mut w = Vec::with_capacity(merged.len());
        for ((key, cat), weight) in merged {
            flat.extend(key.into_iter().map(f64::from_bits));
            y.push(cat);
            w.push(weight);
        }
        let x = Array2::from_shape_vec((y.len(), p), flat).expect("consistent shape");
        Self { x, y, w, categories: self.categories }
    }
}

/// Identifiability constraint on the coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// The given category's row is fixed at zero.
    Reference(usize),
    /// Every column sums to zero.
    Symmetric,
}

impl Constraint {
    /// Projects a coefficient (or gradient) matrix onto the constraint surface.
    pub fn project(&self, m: &mut Array2<f64>) {
        match *self {
            Constraint::Reference(r) => m.row_mut(r).fill(0.0),
            Constraint::Symmetric => {
                let k = m.nrows() as f64;
                for mut col in m.columns_mut() {
                    let mean = col.sum() / k;
                    col.mapv_inplace(|v| v - mean);
                }
            }
        }
    }

    /// Largest constraint violation of `m`.
    pub fn violation(&self, m: &Array2<f64>) -> f64 {
        match *self {
            Constraint::Reference(r) => m.row(r).iter().fold(0.0, |a, v| a.max(v.abs())),
            Constraint::Symmetric => m.columns().into_iter().fold(0.0, |a, c| a.max(c.sum().abs())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "lambda", rename_all = "snake_case")]
pub enum PenaltySpec {
    None,
    Ridge(f64),
    CatsGroupLasso(f64),
}

impl PenaltySpec {
    pub fn lambda(&self) -> f64 {
        match *self {
            PenaltySpec::None => 0.0,
            PenaltySpec::Ridge(l) | PenaltySpec::CatsGroupLasso(l) => l,
        }
    }

    fn ridge(&self) -> f64 {
        match *self {
            PenaltySpec::Ridge(l) => l,
            _ => 0.0,
        }
    }

    fn group(&self) -> f64 {
        match *self {
            PenaltySpec::CatsGroupLasso(l) => l,
            _ => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let l = self.lambda();
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::Invalid(format!("penalty lambda must be finite and >= 0, got {l}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnlModel {
    pub coefficients: Array2<f64>,
    pub constraint: Constraint,
    pub penalty: PenaltySpec,
}

impl MnlModel {
    pub fn zeros(categories: usize, predictors: usize, constraint: Constraint) -> Self {
        Self {
            coefficients: Array2::zeros((categories, predictors)),
            constraint,
            penalty: PenaltySpec::None,
        }
    }

    pub fn categories(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn predictors(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Euclidean norm of each non-intercept column.
    pub fn group_norms(&self) -> Vec<f64> {
        group_norms(&self.coefficients)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: ModelJson = serde_json::from_str(text)?;
        let k = dto.coefficients.len();
        let p = dto.coefficients.first().map_or(0, Vec::len);
        if k < 2 || p == 0 || dto.coefficients.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("ragged or empty coefficient matrix".into()));
        }
        let coefficients = Array2::from_shape_vec((k, p), dto.coefficients.concat())
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let penalty = match dto.penalty.as_str() {
            "none" => PenaltySpec::None,
            "ridge" => PenaltySpec::Ridge(dto.lambda),
            "cats_group_lasso" => PenaltySpec::CatsGroupLasso(dto.lambda),
            other => return Err(Error::Invalid(format!("unknown penalty `{other}`"))),
        };
        Ok(Self { coefficients, constraint: dto.constraint, penalty })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    coefficients: Vec<Vec<f64>>,
    constraint: Constraint,
    penalty: String,
    lambda: f64,
}

impl From<&MnlModel> for ModelJson {
    fn from(m: &MnlModel) -> Self {
        Self {
            coefficients: m.coefficients.outer_iter().map(|r| r.to_vec()).collect(),
            constraint: m.constraint,
            penalty: match m.penalty {
                PenaltySpec::None => "none",
                PenaltySpec::Ridge(_) => "ridge",
                PenaltySpec::CatsGroupLasso(_) => "cats_group_lasso",
            }
            .to_string(),
            lambda: m.penalty.lambda(),
        }
    }
}

pub(crate) fn group_norms(coefficients: &Array2<f64>) -> Vec<f64> {
    coefficients
        .columns()
        .into_iter()
        .skip(1)
        .map(|c| c.dot(&c).sqrt())
        .collect()
}

/// Softmax of `scores` in place, shifted by the maximum. Returns log-sum-exp.
fn softmax_in_place(scores: &mut [f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
    max + sum.ln()
}

/// Weighted negative log-likelihood plus `ridge/2` times the squared norm of
/// the non-intercept coefficients, and its gradient projected onto the
/// constraint surface.
pub(crate) fn smooth_objective(
    coefficients: &Array2<f64>,
    constraint: Constraint,
    d: &DesignData,
    ridge: f64,
    want_gradient: bool,
) -> Result<(f64, f64, Option<Array2<f64>>)> {
    let (k, p) = coefficients.dim();
    if k != d.categories || p != d.predictors() {
        return Err(Error::Dimension(format!(
            "model is {k}x{p}, data has {} categories and {} predictors",
            d.categories,
            d.predictors()
        )));
    }
    let beta = coefficients.as_standard_layout();
    let beta = beta.as_slice().expect("standard layout");
    let xs = d.x.as_slice().expect("standard layout");
    let mut nll = 0.0;
    let mut grad = want_gradient.then(|| vec![0.0; k * p]);
    let mut scores = vec![0.0; k];
    for (i, row) in xs.chunks_exact(p).enumerate() {
        for (c, s) in scores.iter_mut().enumerate() {
            *s = beta[c * p..(c + 1) * p].iter().zip(row).map(|(b, x)| b * x).sum();
        }
        let yi = d.y[i];
        let score_y = scores[yi];
        let lse = softmax_in_place(&mut scores);
        nll += d.w[i] * (lse - score_y);
        if let Some(g) = grad.as_mut() {
            for (c, &prob) in scores.iter().enumerate() {
                let resid = d.w[i] * (prob - if c == yi { 1.0 } else { 0.0 });
                if resid != 0.0 {
                    for (gv, x) in g[c * p..(c + 1) * p].iter_mut().zip(row) {
                        *gv += resid * x;
                    }
                }
            }
        }
    }
    let mut grad = grad.map(|g| Array2::from_shape_vec((k, p), g).expect("k x p buffer"));
    if !nll.is_finite() {
        return Err(Error::NonFinite("negative log-likelihood"));
    }
    let mut objective = nll;
    if ridge > 0.0 {
        let slopes = coefficients.slice(ndarray::s![.., 1..]);
        objective += 0.5 * ridge * slopes.iter().map(|v| v * v).sum::<f64>();
        if let Some(g) = grad.as_mut() {
            let mut gs = g.slice_mut(ndarray::s![.., 1..]);
            gs.scaled_add(ridge, &slopes);
        }
    }
    if let Some(g) = grad.as_mut() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        constraint.project(g);
    }
    Ok((nll, objective, grad))
}

/// Negative log-likelihood (plus the ridge term for a ridge penalty) and its
/// gradient, projected onto the model's constraint surface.
pub fn nll_and_gradient(m: &MnlModel, d: &DesignData) -> Result<(f64, Array2<f64>)> {
    let (_, objective, grad) = smooth_objective(&m.coefficients, m.constraint, d, m.penalty.ridge(), true)?;
    Ok((objective, grad.expect("gradient requested")))
}

/// Category probabilities at a design row `x` (leading 1 included).
pub fn predict_proba(m: &MnlModel, x: &[f64]) -> Result<Vec<f64>> {
    let mut scores = linear_scores(m, x)?;
    softmax_in_place(&mut scores);
    Ok(scores)
}

/// Category scores `coefficients · x` before the softmax.
pub fn linear_scores(m: &MnlModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != m.predictors() {
        return Err(Error::Dimension(format!("row has {} entries, model expects {}", x.len(), m.predictors())));
    }
    let x = ArrayView1::from(x);
    let scores: Vec<f64> = m.coefficients.outer_iter().map(|r| r.dot(&x)).collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("linear scores"));
    }
    Ok(scores)
}

/// Block soft-thresholding: `max(0, 1 - t/‖v‖) v`.
pub fn prox_group(v: &[f64], t: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    prox_group_in_place(ArrayViewMut1::from(&mut out[..]), t);
    out
}

pub(crate) fn prox_group_in_place(mut v: ArrayViewMut1<f64>, t: f64) {
    debug_assert!(t >= 0.0);
    if t == 0.0 {
        return;
    }
    let norm = v.dot(&v).sqrt();
    if norm <= t {
        v.fill(0.0);
    } else {
        let scale = 1.0 - t / norm;
        v.mapv_inplace(|c| c * scale);
    }
}
