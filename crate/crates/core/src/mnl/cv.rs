use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{fit, predict_proba, Constraint, DesignData, FitOptions, Init, PenaltySpec};
use crate::error::{Error, Result};

/// Smallest group-lasso penalty at which every non-intercept group is zero:
/// the largest projected gradient column norm at the intercept-only MLE.
pub fn lambda_max(d: &DesignData, constraint: Constraint) -> f64 {
    let total = d.total_weight();
    let freq: Vec<f64> = d.category_weights().iter().map(|w| w / total).collect();
    let mut grad = Array2::<f64>::zeros((d.categories(), d.predictors()));
    for (i, row) in d.x().outer_iter().enumerate() {
        let (yi, wi) = (d.labels()[i], d.weights()[i]);
        for (c, &p) in freq.iter().enumerate() {
            let resid = wi * (p - if c == yi { 1.0 } else { 0.0 });
            grad.row_mut(c).scaled_add(resid, &row);
        }
    }
    constraint.project(&mut grad);
    grad.columns()
        .into_iter()
        .skip(1)
        .map(|c| c.dot(&c).sqrt())
        .fold(0.0, f64::max)
}

/// `n` values spaced evenly on the log scale from `lambda_max` down to
/// `lambda_max / ratio`.
pub fn default_lambda_grid(lambda_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lambda_max],
        _ => (0..n)
            .map(|i| lambda_max * ratio.powf(-(i as f64) / (n - 1) as f64))
            .collect(),
    }
}

/// Assigns each row a fold in `0..folds`, shuffling within each category and
/// dealing rows out round-robin so every fold sees every common category.
pub fn stratified_folds(labels: &[usize], categories: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_category: Vec<Vec<usize>> = vec![Vec::new(); categories];
    for (i, &c) in labels.iter().enumerate() {
        by_category[c].push(i);
    }
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for rows in &mut by_category {
        rows.shuffle(&mut rng);
        for &i in rows.iter() {
            assignment[i] = next;
            next = (next + 1) % folds;
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CvResult {
    pub best_lambda: f64,
    pub best_index: usize,
    pub lambdas: Vec<f64>,
    /// Mean over folds of the held-out negative log-likelihood per unit weight.
    pub mean_validation_nll: Vec<f64>,
    pub folds: Vec<usize>,
}

/// K-fold cross-validation of the group-lasso penalty over a descending grid.
///
/// Penalties are on the full-data scale: each training fold is fitted with
/// `lambda` times its share of the total weight. Ties in mean validation
/// loss go to the larger penalty.
pub fn cross_validate(
    d: &DesignData,
    lambdas: &[f64],
    folds: usize,
    seed: u64,
    constraint: Constraint,
    options: &FitOptions,
) -> Result<CvResult> {
    if lambdas.is_empty() {
        return Err(Error::Invalid("empty lambda grid".into()));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || lambdas.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Invalid("lambda grid must be finite, non-negative and descending".into()));
    }
    if folds < 2 || d.len() < folds {
        return Err(Error::Invalid(format!("need 2 <= folds <= n, got {folds} folds for {} rows", d.len())));
    }
    let assignment = stratified_folds(d.labels(), d.categories(), folds, seed);
    let mut totals = vec![0.0; lambdas.len()];
    for fold in 0..folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..d.len()).partition(|&i| assignment[i] != fold);
        let train = d.subset(&train).compress();
        // the nll is a sum, so a fold fit needs a proportionally smaller
        // penalty to match the full-data fit at the same lambda
        let scale = train.total_weight() / d.total_weight();
        let test = d.subset(&test);
        let test_weight = test.total_weight();
        let mut warm: Option<Array2<f64>> = None;
        for (li, &lambda) in lambdas.iter().enumerate() {
            let opts = FitOptions {
                init: warm.take().map_or(options.init.clone(), Init::Warm),
                ..options.clone()
            };
            let (model, _) = fit(&train, PenaltySpec::CatsGroupLasso(lambda * scale), constraint, &opts)?;
            let mut loss = 0.0;
            for (i, row) in test.x().outer_iter().enumerate() {
                let probs = predict_proba(&model, row.as_slice().expect("standard layout"))?;
                loss -= test.weights()[i] * probs[test.labels()[i]].max(f64::MIN_POSITIVE).ln();
            }
            totals[li] += loss / test_weight;
            warm = Some(model.coefficients);
        }
    }
    let mean: Vec<f64> = totals.iter().map(|t| t / folds as f64).collect();
    let mut best_index = 0;
    for (i, &m) in mean.iter().enumerate().skip(1) {
        if m < mean[best_index] {
            best_index = i;
        }
    }
    Ok(CvResult {
        best_lambda: lambdas[best_index],
        best_index,
        lambdas: lambdas.to_vec(),
        mean_validation_nll: mean,
        folds: assignment,
    })
}
