//! Nadaraya-Watson and local-linear kernel regression on one regressor.
//!
//! Evaluation is direct summation over the training set for every query,
//! `O(n_train * n_query)`, with compensated sums so that predictions do not
//! depend on the order of the training pairs beyond rounding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::empirical_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(-(x - x0)^2 / (2 h^2))`
    #[default]
    Gaussian,
    /// `exp(-|x - x0| / (2 h^2))`: the radial form with an unsquared distance.
    GaussianUnsquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    #[default]
    Silverman,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: Bandwidth,
}

/// A kernel with its bandwidth fixed to a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedKernel {
    pub kind: KernelKind,
    pub h: f64,
}

impl ResolvedKernel {
    pub fn new(kind: KernelKind, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("kernel.h", format!("bandwidth must be positive, got {h}")));
        }
        Ok(Self { kind, h })
    }
}

pub fn kernel_weight(kernel: &ResolvedKernel, x: f64, x0: f64) -> f64 {
    let d = x - x0;
    match kernel.kind {
        KernelKind::Gaussian => (-(d * d) / (2.0 * kernel.h * kernel.h)).exp(),
        KernelKind::GaussianUnsquared => (-d.abs() / (2.0 * kernel.h * kernel.h)).exp(),
    }
}

/// Rule-of-thumb bandwidth `1.06 min(sd, IQR / 1.34) n^(-1/5)`.
///
/// Falls back to the standard deviation when the interquartile range is zero.
pub fn silverman_bandwidth(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("x", "bandwidth rule needs at least two points"));
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::invalid("x", "regressor has zero dispersion"));
    }
    let iqr = empirical_quantile(x, 0.75)? - empirical_quantile(x, 0.25)?;
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(1.06 * spread * nf.powf(-0.2))
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Order of the local polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalOrder {
    /// Local constant: the Nadaraya-Watson estimate.
    Constant,
    #[default]
    Linear,
}

impl LocalOrder {
    pub fn from_degree(p: usize) -> Result<Self> {
        match p {
            0 => Ok(LocalOrder::Constant),
            1 => Ok(LocalOrder::Linear),
            _ => Err(Error::invalid("kernel.order", format!("must be 0 or 1, got {p}"))),
        }
    }
}

/// Training set plus kernel; the model is evaluated lazily at each query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    x: Vec<f64>,
    y: Vec<f64>,
    pub kernel: ResolvedKernel,
    pub order: LocalOrder,
}

impl LocalFit {
    pub fn new(x: Vec<f64>, y: Vec<f64>, spec: KernelSpec, order: LocalOrder) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::invalid("training data", "x and y must be non-empty and of equal length"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("training data", "non-finite entry"));
        }
        let h = match spec.bandwidth {
            Bandwidth::Fixed(h) => h,
            Bandwidth::Silverman => silverman_bandwidth(&x)?,
        };
        Ok(Self { x, y, kernel: ResolvedKernel::new(spec.kind, h)?, order })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn weights(&self, x0: f64) -> Vec<f64> {
        self.x.iter().map(|&xi| kernel_weight(&self.kernel, xi, x0)).collect()
    }

    fn nw_at(&self, x0: f64) -> Result<f64> {
        let mut num = KahanSum::default();
        let mut den = KahanSum::default();
        for (&xi, &yi) in self.x.iter().zip(&self.y) {
            let w = kernel_weight(&self.kernel, xi, x0);
            num.add(w * yi);
            den.add(w);
        }
        let den = den.value();
        if !(den > 0.0) {
            return Err(Error::BandwidthStarvation { x: x0, h: self.kernel.h });
        }
        Ok(num.value() / den)
    }
}

/// Nadaraya-Watson estimate `sum K(x, x_i) y_i / sum K(x, x_j)` at each query.
pub fn nw_estimate(fit: &LocalFit, x_query: &[f64]) -> Result<Vec<f64>> {
    x_query.par_iter().map(|&x0| fit.nw_at(x0)).collect()
}

/// Local coefficients at one query: `beta[0]` is the fitted value, `beta[1]`
/// (local-linear only) the slope in `x_i - x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCoefficients {
    pub beta: Vec<f64>,
    /// Local-linear design was rank-deficient; fell back to local constant.
    pub degraded: bool,
}

pub fn local_coefficients(fit: &LocalFit, x0: f64) -> Result<LocalCoefficients> {
    if fit.order == LocalOrder::Constant {
        return Ok(LocalCoefficients { beta: vec![fit.nw_at(x0)?], degraded: false });
    }
    let w = fit.weights(x0);
    if !(w.iter().sum::<f64>() > 0.0) {
        return Err(Error::BandwidthStarvation { x: x0, h: fit.kernel.h });
    }
    let n = fit.len();
    let h = fit.kernel.h;
    let mut design = Vec::with_capacity(2 * n);
    let mut target = Vec::with_capacity(n);
    for ((&xi, &yi), &wi) in fit.x.iter().zip(&fit.y).zip(&w) {
        let s = wi.sqrt();
        design.push(s);
        design.push(s * (xi - x0) / h);
        target.push(s * yi);
    }
    match linalg::lstsq(&design, n, 2, &target) {
        Ok(beta) => Ok(LocalCoefficients { beta: vec![beta[0], beta[1] / h], degraded: false }),
        Err(Error::RankDeficient { .. }) => Ok(LocalCoefficients { beta: vec![fit.nw_at(x0)?], degraded: true }),
        Err(e) => Err(e),
    }
}

/// A query at which the local-linear fit fell back to local constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradedQuery {
    pub index: usize,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPrediction {
    pub values: Vec<f64>,
    pub degraded: Vec<DegradedQuery>,
}

/// Local polynomial (order 0 or 1) regression evaluated at each query by
/// weighted least squares.
pub fn local_poly_fit_predict(fit: &LocalFit, x_query: &[f64]) -> Result<LocalPrediction> {
    let coeffs = x_query
        .par_iter()
        .map(|&x0| local_coefficients(fit, x0))
        .collect::<Result<Vec<_>>>()?;
    let degraded = coeffs
        .iter()
        .zip(x_query)
        .enumerate()
        .filter(|(_, (c, _))| c.degraded)
        .map(|(index, (_, &x))| DegradedQuery { index, x })
        .collect();
    Ok(LocalPrediction { values: coeffs.iter().map(|c| c.beta[0]).collect(), degraded })
}
