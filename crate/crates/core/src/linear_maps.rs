//! Global polynomial least squares for the conditional second moment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::regression::RegressionData;

pub const MAX_DEGREE: usize = 6;

/// Fitted polynomial in the standardised regressor `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub x_mean: f64,
    pub x_scale: f64,
    /// Training range, used to flag extrapolation.
    pub x_min: f64,
    pub x_max: f64,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyPrediction {
    pub values: Vec<f64>,
    /// Queries outside the training range.
    pub n_extrapolated: usize,
}

fn standardise(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn powers(z: f64, degree: usize) -> impl Iterator<Item = f64> {
    (0..=degree).scan(1.0, move |acc, i| {
        let out = *acc;
        if i < degree {
            *acc *= z;
        }
        Some(out)
    })
}

pub fn fit_polynomial(data: &RegressionData, degree: usize) -> Result<PolyFit> {
    fit_polynomial_ridge(data, degree, 0.0)
}

/// Polynomial fit minimising `mean((y - f(x))^2) + ridge * sum_{i >= 1} beta_i^2`.
pub fn fit_polynomial_ridge(data: &RegressionData, degree: usize, ridge: f64) -> Result<PolyFit> {
    let n = data.len();
    if degree > MAX_DEGREE {
        return Err(Error::invalid("degree", format!("at most {MAX_DEGREE}, got {degree}")));
    }
    if (degree > 0 && n <= degree + 1) || n == 0 {
        return Err(Error::invalid("degree", format!("need more than {} samples for degree {degree}, got {n}", degree + 1)));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge", "must be finite and non-negative"));
    }
    let (mean, sd) = standardise(&data.x);
    let scale = if degree == 0 {
        if sd > 0.0 { sd } else { 1.0 }
    } else if sd > 0.0 && sd > 1e-14 * mean.abs() {
        sd
    } else {
        return Err(Error::invalid("x", "regressor is constant; design is rank-deficient"));
    };

    let cols = degree + 1;
    let extra = if ridge > 0.0 { degree } else { 0 };
    let mut design = Vec::with_capacity((n + extra) * cols);
    for &x in &data.x {
        design.extend(powers((x - mean) / scale, degree));
    }
    let mut target = data.y.clone();
    let penalty = (ridge * n as f64).sqrt();
    for i in 1..=extra {
        design.extend((0..cols).map(|j| if j == i { penalty } else { 0.0 }));
        target.push(0.0);
    }
    let coefficients = linalg::lstsq(&design, n + extra, cols, &target)?;

    let (x_min, x_max) = data.x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(PolyFit { degree, coefficients, x_mean: mean, x_scale: scale, x_min, x_max, ridge })
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.x_mean) / self.x_scale;
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }
}

pub fn predict_polynomial(fit: &PolyFit, x_query: &[f64]) -> PolyPrediction {
    let values = x_query.iter().map(|&x| fit.eval(x)).collect();
    let n_extrapolated = x_query.iter().filter(|&&x| x < fit.x_min || x > fit.x_max).count();
    PolyPrediction { values, n_extrapolated }
}

/// Mean squared residual on the training data.
pub fn training_mse(fit: &PolyFit, data: &RegressionData) -> f64 {
    data.x.iter().zip(&data.y).map(|(&x, y)| (y - fit.eval(x)).powi(2)).sum::<f64>() / data.len() as f64
}
