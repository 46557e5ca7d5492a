//! One interface over the three conditional-moment approximators, and the
//! per-time-step pipeline from netting-set values to a margin profile.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{local_poly_fit_predict, KernelSpec, LocalFit, LocalOrder};
use crate::linear_maps::{fit_polynomial_ridge, predict_polynomial, PolyFit, MAX_DEGREE};
use crate::neural_net::{predict_nn, train, MlpSpec, TrainConfig, TrainedMlp};
use crate::oracle::mean_stderr;
use crate::portfolio::ValueMatrix;
use crate::regression::{build_regression_data, im_from_second_moment, QuantileScaler, RegressionData};
use crate::rng::{self, Domain};
use crate::sde::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Poly,
    Kernel,
    Nn,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Poly => "poly",
            Method::Kernel => "kernel",
            Method::Nn => "nn",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poly" => Ok(Method::Poly),
            "kernel" => Ok(Method::Kernel),
            "nn" => Ok(Method::Nn),
            other => Err(Error::invalid("method", format!("unknown method {other:?} (poly | kernel | nn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolySettings {
    pub degree: usize,
    pub ridge: f64,
}

impl Default for PolySettings {
    fn default() -> Self {
        Self { degree: 2, ridge: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelSettings {
    pub spec: KernelSpec,
    pub order: LocalOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnSettings {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for NnSettings {
    fn default() -> Self {
        Self { hidden: vec![16, 16], train: TrainConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApproxSettings {
    pub poly: PolySettings,
    pub kernel: KernelSettings,
    pub nn: NnSettings,
}

impl ApproxSettings {
    pub fn validate(&self) -> Result<()> {
        if self.poly.degree > MAX_DEGREE {
            return Err(Error::invalid("poly.degree", format!("must be at most {MAX_DEGREE}")));
        }
        if !(self.poly.ridge >= 0.0) {
            return Err(Error::invalid("poly.ridge", "must be non-negative"));
        }
        if let crate::kernel::Bandwidth::Fixed(h) = self.kernel.spec.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid("kernel.h", format!("must be positive, got {h}")));
            }
        }
        if self.nn.hidden.is_empty() || self.nn.hidden.contains(&0) {
            return Err(Error::invalid("nn.hidden", "need at least one hidden layer of positive width"));
        }
        self.nn.train.validate()
    }
}

/// A fitted model of `E[(V(t + mpor) - V(t))^2 | V(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Approximator {
    /// Used when the regressor is the same on every path (e.g. at t = 0):
    /// the conditional expectation is then the plain sample mean.
    Constant(f64),
    Poly(PolyFit),
    Kernel(LocalFit),
    Nn(Box<TrainedMlp>),
}

/// Fitted model with anything noteworthy that happened while fitting or
/// predicting (extrapolation, kernel degradation).
#[derive(Debug, Clone, PartialEq)]
pub struct StepFit {
    pub t_index: usize,
    pub time: f64,
    pub approximator: Approximator,
    pub im: Vec<f64>,
    pub im_mean: f64,
    pub im_stderr: f64,
    pub notes: Vec<String>,
}

impl Approximator {
    pub fn fit(method: Method, data: &RegressionData, settings: &ApproxSettings) -> Result<Self> {
        if data.x_is_constant() {
            return Ok(Approximator::Constant(data.y.iter().sum::<f64>() / data.len() as f64));
        }
        Ok(match method {
            Method::Poly => Approximator::Poly(fit_polynomial_ridge(data, settings.poly.degree, settings.poly.ridge)?),
            Method::Kernel => Approximator::Kernel(LocalFit::new(
                data.x.clone(),
                data.y.clone(),
                settings.kernel.spec,
                settings.kernel.order,
            )?),
            Method::Nn => {
                let mut widths = vec![1];
                widths.extend(&settings.nn.hidden);
                widths.push(1);
                let seed = rng::derive_seed(settings.nn.seed, Domain::NetInit, &[data.t_index as u64]);
                let spec = MlpSpec::new(widths, seed)?;
                Approximator::Nn(Box::new(train(&spec, &settings.nn.train, data)?))
            }
        })
    }

    /// Predicted conditional second moment at each query, plus notes.
    pub fn predict(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<String>)> {
        match self {
            Approximator::Constant(c) => Ok((vec![*c; x.len()], Vec::new())),
            Approximator::Poly(fit) => {
                let pred = predict_polynomial(fit, x);
                let notes = if pred.n_extrapolated > 0 {
                    vec![format!("{} queries outside the training range", pred.n_extrapolated)]
                } else {
                    Vec::new()
                };
                Ok((pred.values, notes))
            }
            Approximator::Kernel(fit) => {
                let pred = local_poly_fit_predict(fit, x)?;
                let notes = if pred.degraded.is_empty() {
                    Vec::new()
                } else {
                    vec![format!("{} queries fell back to local-constant fits", pred.degraded.len())]
                };
                Ok((pred.values, notes))
            }
            Approximator::Nn(model) => Ok((predict_nn(model, x)?, Vec::new())),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Approximator::Constant(_) => "constant",
            Approximator::Poly(_) => "poly",
            Approximator::Kernel(_) => "kernel",
            Approximator::Nn(_) => "nn",
        }
    }
}

/// Fit one time step and turn the in-sample predictions into margins.
pub fn fit_step(
    values: &ValueMatrix,
    grid: &TimeGrid,
    t_index: usize,
    method: Method,
    settings: &ApproxSettings,
    scaler: &QuantileScaler,
) -> Result<StepFit> {
    let data = build_regression_data(values, grid, t_index)?;
    let approximator = Approximator::fit(method, &data, settings)?;
    let (m_hat, notes) = approximator.predict(&data.x)?;
    let im = im_from_second_moment(&m_hat, scaler)?;
    let (im_mean, im_stderr) = mean_stderr(&im);
    Ok(StepFit { t_index, time: grid.obs_times()[t_index], approximator, im, im_mean, im_stderr, notes })
}

/// Regression-based margin profile over every observation time.
pub fn approximate_profile(
    values: &ValueMatrix,
    grid: &TimeGrid,
    method: Method,
    settings: &ApproxSettings,
    scaler: &QuantileScaler,
) -> Result<Vec<StepFit>> {
    settings.validate()?;
    scaler.validate()?;
    (0..grid.n_obs())
        .into_par_iter()
        .map(|k| fit_step(values, grid, k, method, settings, scaler))
        .collect()
}
