//! Accelerated proximal gradient fitting.
//!
//! The smooth part (likelihood plus ridge terms) is handled by gradient
//! steps with a backtracking Lipschitz estimate; the group penalty by its
//! proximal map. Momentum is restarted whenever a step would raise the
//! objective, so accepted iterates never increase it. Convergence is
//! declared only after a plain (momentum-free) step changes the objective
//! by less than `tolerance` and no coefficient by more than
//! `coefficient_tolerance`.

use ndarray::{s, Array2, Zip};

use super::{group_norms, prox_group_in_place, smooth_objective, Constraint, DesignData, MnlModel, PenaltySpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zero,
    /// Intercepts at the log empirical category frequencies, slopes at zero.
    Intercepts,
    Warm(Array2<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Start from a fraction of the global Lipschitz bound, doubling on
    /// failed sufficient-decrease checks.
    Backtracking { max_doublings: u32 },
    /// Fixed step `1/L` with the global bound `L = ½ Σ wᵢ‖xᵢ‖² + ridge`.
    Lipschitz,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative objective change below which iteration stops.
    pub tolerance: f64,
    /// Largest absolute coefficient change a momentum-free step may make
    /// and still count as converged.
    pub coefficient_tolerance: f64,
    /// Ridge applied to non-intercept coefficients on top of any penalty.
    pub ridge_floor: f64,
    pub step: StepRule,
    pub init: Init,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-8,
            coefficient_tolerance: 1e-8,
            ridge_floor: 1e-8,
            step: StepRule::Backtracking { max_doublings: 60 },
            init: Init::Intercepts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FitReport {
    /// Unpenalized weighted negative log-likelihood at the solution.
    pub nll: f64,
    /// Full objective: likelihood, ridge terms and group penalty.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub group_norms: Vec<f64>,
    /// Objective after every accepted iterate.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

fn group_penalty(coefficients: &Array2<f64>, lambda: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        lambda * group_norms(coefficients).iter().sum::<f64>()
    }
}

fn intercept_init(d: &DesignData, constraint: Constraint) -> Array2<f64> {
    let mut beta = Array2::zeros((d.categories(), d.predictors()));
    let cw = d.category_weights();
    let total: f64 = cw.iter().sum();
    for (k, w) in cw.iter().enumerate() {
        beta[[k, 0]] = (w / total).max(1e-12).ln();
    }
    if let Constraint::Reference(r) = constraint {
        let base = beta[[r, 0]];
        beta.column_mut(0).mapv_inplace(|v| v - base);
    }
    constraint.project(&mut beta);
    beta
}

/// Fits the model by accelerated proximal gradient descent.
pub fn fit(
    d: &DesignData,
    penalty: PenaltySpec,
    constraint: Constraint,
    options: &FitOptions,
) -> Result<(MnlModel, FitReport)> {
    penalty.validate()?;
    if let Constraint::Reference(r) = constraint {
        if r >= d.categories() {
            return Err(Error::Invalid(format!("reference category {r} out of range")));
        }
    }
    if d.category_weights().iter().filter(|&&w| w > 0.0).count() < 2 {
        return Err(Error::Invalid("at least two categories must be observed".into()));
    }
    if !(options.ridge_floor >= 0.0 && options.tolerance >= 0.0) {
        return Err(Error::Invalid("ridge floor and tolerance must be non-negative".into()));
    }

    let data = d.compress();
    let (k, p) = (data.categories(), data.predictors());
    let ridge = options.ridge_floor + penalty.ridge();
    let lambda = penalty.group();

    let mut x = match &options.init {
        Init::Zero => Array2::zeros((k, p)),
        Init::Intercepts => intercept_init(&data, constraint),
        Init::Warm(w) => {
            if w.dim() != (k, p) {
                return Err(Error::Dimension(format!("warm start is {:?}, expected ({k}, {p})", w.dim())));
            }
            w.clone()
        }
    };
    constraint.project(&mut x);

    let lipschitz_bound = 0.5
        * data
            .x()
            .outer_iter()
            .zip(data.weights())
            .map(|(row, w)| w * row.dot(&row))
            .sum::<f64>()
        + ridge;
    let (mut step_l, max_doublings) = match options.step {
        StepRule::Backtracking { max_doublings } => (lipschitz_bound / 64.0, max_doublings),
        StepRule::Lipschitz => (lipschitz_bound, 0),
    };

    let objective_of = |beta: &Array2<f64>| -> Result<(f64, f64)> {
        let (nll, smooth, _) = smooth_objective(beta, constraint, &data, ridge, false)?;
        Ok((nll, smooth + group_penalty(beta, lambda)))
    };
    let prox_step = |y: &Array2<f64>, grad: &Array2<f64>, l: f64| -> Array2<f64> {
        let mut z = y - &(grad / l);
        if lambda > 0.0 {
            for col in z.slice_mut(s![.., 1..]).columns_mut() {
                prox_group_in_place(col, lambda / l);
            }
        }
        constraint.project(&mut z);
        z
    };

    let (_, mut fx) = objective_of(&x)?;
    let mut trace = vec![fx];
    let mut y = x.clone();
    let mut theta = 1.0f64;
    let mut plain_step = true;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let (_, smooth_y, grad_y) = smooth_objective(&y, constraint, &data, ridge, true)?;
        let grad_y = grad_y.expect("gradient requested");

        if max_doublings > 0 {
            // let the local curvature estimate relax before backtracking
            step_l *= 0.95;
        }
        let mut z;
        let mut smooth_z;
        let mut doublings = 0;
        loop {
            z = prox_step(&y, &grad_y, step_l);
            let diff = &z - &y;
            smooth_z = smooth_objective(&z, constraint, &data, ridge, false)?.1;
            let model = smooth_y
                + Zip::from(&grad_y).and(&diff).fold(0.0, |acc, g, dz| acc + g * dz)
                + 0.5 * step_l * diff.iter().map(|v| v * v).sum::<f64>();
            if smooth_z <= model + 1e-12 * smooth_y.abs().max(1.0) || doublings >= max_doublings {
                break;
            }
            step_l *= 2.0;
            doublings += 1;
        }

        let fz = smooth_z + group_penalty(&z, lambda);
        if fz > fx {
            if plain_step {
                // even the momentum-free step fails to descend: stationary up to rounding
                converged = (fz - fx) / fx.abs().max(1.0) < options.tolerance;
                break;
            }
            y = x.clone();
            theta = 1.0;
            plain_step = true;
            continue;
        }

        let rel_change = (fx - fz) / fx.abs().max(1.0);
        let max_step = Zip::from(&z).and(&x).fold(0.0f64, |acc, a, b| acc.max((a - b).abs()));
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = (theta - 1.0) / theta_next;
        y = &z + &((&z - &x) * momentum);
        x = z;
        fx = fz;
        theta = theta_next;
        trace.push(fx);

        if rel_change < options.tolerance {
            if plain_step && max_step <= options.coefficient_tolerance {
                converged = true;
                break;
            }
            if plain_step {
                plain_step = false;
            } else {
                y = x.clone();
                theta = 1.0;
                plain_step = true;
            }
        } else {
            plain_step = false;
        }
    }

    let (nll, objective) = objective_of(&x)?;
    let model = MnlModel { coefficients: x, constraint, penalty };
    let report = FitReport {
        nll,
        objective,
        iterations: iterations.max(1),
        converged,
        group_norms: model.group_norms(),
        trace,
    };
    Ok((model, report))
}
