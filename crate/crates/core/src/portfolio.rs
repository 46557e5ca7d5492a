//! Closed-form path-wise valuation of a netting set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::sde::{ModelSpec, PathCube};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instrument {
    /// Long `notional` units of the spot against a strike paid at maturity.
    Forward { strike: f64, maturity: f64, notional: f64 },
    /// Black-Scholes call on the spot with a fixed pricing volatility.
    EuropeanCall { strike: f64, maturity: f64, pricing_vol: f64, notional: f64 },
    /// Zero-coupon bond with the OU factor read as the short rate.
    ZeroCouponBond { maturity: f64, notional: f64 },
}

impl Instrument {
    pub fn maturity(&self) -> f64 {
        match *self {
            Instrument::Forward { maturity, .. }
            | Instrument::EuropeanCall { maturity, .. }
            | Instrument::ZeroCouponBond { maturity, .. } => maturity,
        }
    }

    pub fn notional(&self) -> f64 {
        match *self {
            Instrument::Forward { notional, .. }
            | Instrument::EuropeanCall { notional, .. }
            | Instrument::ZeroCouponBond { notional, .. } => notional,
        }
    }

    /// Same instrument with the notional multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = *self;
        match &mut out {
            Instrument::Forward { notional, .. }
            | Instrument::EuropeanCall { notional, .. }
            | Instrument::ZeroCouponBond { notional, .. } => *notional *= factor,
        }
        out
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let n = self.notional();
        if !(n.is_finite() && n != 0.0) {
            return Err(Error::invalid("instrument.notional", format!("must be finite and non-zero, got {n}")));
        }
        if !(self.maturity() >= 0.0 && self.maturity().is_finite()) {
            return Err(Error::invalid("instrument.maturity", "must be finite and non-negative"));
        }
        match (self, model) {
            (Instrument::Forward { strike, .. }, ModelSpec::Gbm { .. }) if strike.is_finite() => Ok(()),
            (Instrument::EuropeanCall { strike, pricing_vol, .. }, ModelSpec::Gbm { .. }) => {
                if !(*strike >= 0.0 && strike.is_finite()) {
                    return Err(Error::invalid("instrument.strike", "call strike must be non-negative"));
                }
                if !(*pricing_vol >= 0.0 && pricing_vol.is_finite()) {
                    return Err(Error::invalid("instrument.pricing_vol", "must be non-negative"));
                }
                Ok(())
            }
            (Instrument::ZeroCouponBond { .. }, ModelSpec::OrnsteinUhlenbeck { .. }) => Ok(()),
            (Instrument::Forward { .. }, ModelSpec::Gbm { .. }) => {
                Err(Error::invalid("instrument.strike", "must be finite"))
            }
            _ => Err(Error::invalid(
                "instrument",
                "instrument cannot be priced under this model (forward/call need gbm, zero-coupon bond needs ornstein_uhlenbeck)",
            )),
        }
    }
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn black_scholes_call(spot: f64, strike: f64, tau: f64, rate: f64, vol: f64) -> f64 {
    let df = (-rate * tau).exp();
    let stdev = vol * tau.sqrt();
    if stdev <= 0.0 || strike <= 0.0 {
        return (spot - strike * df).max(0.0);
    }
    let d1 = ((spot / strike).ln() + rate * tau) / stdev + 0.5 * stdev;
    let d2 = d1 - stdev;
    spot * norm_cdf(d1) - strike * df * norm_cdf(d2)
}

/// Affine bond price `exp(A - B x)` for the OU short rate.
fn ou_bond(x: f64, tau: f64, kappa: f64, theta: f64, vol: f64) -> f64 {
    let b = -(-kappa * tau).exp_m1() / kappa;
    let a = (theta - vol * vol / (2.0 * kappa * kappa)) * (b - tau) - vol * vol * b * b / (4.0 * kappa);
    (a - b * x).exp()
}

/// Value of one instrument at time `t` in factor state `state`.
///
/// `discount_rate` discounts the forward's strike leg and drives the call's
/// risk-neutral drift.
pub fn value(instr: &Instrument, state: &[f64], t: f64, model: &ModelSpec, discount_rate: f64) -> Result<f64> {
    let tau = instr.maturity() - t;
    if tau < -1e-12 {
        return Err(Error::invalid("t", format!("valuation time {t} is after maturity {}", instr.maturity())));
    }
    let tau = tau.max(0.0);
    let x = *state.first().ok_or_else(|| Error::invalid("state", "empty factor vector"))?;
    let v = match (*instr, *model) {
        (Instrument::Forward { strike, notional, .. }, ModelSpec::Gbm { .. }) => {
            notional * (x - strike * (-discount_rate * tau).exp())
        }
        (Instrument::EuropeanCall { strike, pricing_vol, notional, .. }, ModelSpec::Gbm { .. }) => {
            notional * black_scholes_call(x, strike, tau, discount_rate, pricing_vol)
        }
        (Instrument::ZeroCouponBond { notional, .. }, ModelSpec::OrnsteinUhlenbeck { kappa, theta, vol, .. }) => {
            notional * ou_bond(x, tau, kappa, theta, vol)
        }
        _ => return Err(Error::invalid("instrument", "instrument and model variant do not match")),
    };
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NettingSet {
    pub instruments: Vec<Instrument>,
}

impl NettingSet {
    pub fn new(instruments: Vec<Instrument>) -> Result<Self> {
        if instruments.is_empty() {
            return Err(Error::invalid("netting_set", "must contain at least one instrument"));
        }
        Ok(Self { instruments })
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if self.instruments.is_empty() {
            return Err(Error::invalid("netting_set", "must contain at least one instrument"));
        }
        self.instruments.iter().try_for_each(|i| i.validate(model))
    }

    pub fn min_maturity(&self) -> f64 {
        self.instruments.iter().map(Instrument::maturity).fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { instruments: self.instruments.iter().map(|i| i.scaled(factor)).collect() }
    }

    /// Sum of instrument values at one node.
    pub fn value(&self, state: &[f64], t: f64, model: &ModelSpec, discount_rate: f64) -> Result<f64> {
        self.instruments
            .iter()
            .try_fold(0.0, |acc, i| Ok(acc + value(i, state, t, model, discount_rate)?))
    }
}

/// Netting-set values, row-major `(path, column)` on the cube's columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMatrix {
    n_paths: usize,
    n_columns: usize,
    values: Vec<f64>,
}

impl ValueMatrix {
    pub fn from_rows(n_paths: usize, n_columns: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_paths * n_columns {
            return Err(Error::invalid("values", "length does not match the declared shape"));
        }
        Ok(Self { n_paths, n_columns, values })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn get(&self, path: usize, col: usize) -> f64 {
        self.values[path * self.n_columns + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.get(p, col)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn value_netting_set(
    ns: &NettingSet,
    cube: &PathCube,
    model: &ModelSpec,
    discount_rate: f64,
) -> Result<ValueMatrix> {
    ns.validate(model)?;
    let grid = cube.grid();
    let n_columns = cube.n_columns();
    let times: Vec<f64> = (0..n_columns).map(|c| grid.column_time(c)).collect();
    let values = (0..cube.n_paths())
        .into_par_iter()
        .map(|p| {
            times
                .iter()
                .enumerate()
                .map(|(c, &t)| ns.value(cube.state(p, c), t, model, discount_rate))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?
        .concat();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("netting-set values"));
    }
    ValueMatrix::from_rows(cube.n_paths(), n_columns, values)
}
