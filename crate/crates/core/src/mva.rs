//! Margin valuation adjustment under deterministic credit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::TimeGrid;

/// Flat rates, hazards and spreads, all per year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvaInputs {
    /// Risk-free rate.
    pub r: f64,
    /// Bank hazard rate.
    pub lambda_b: f64,
    /// Counterparty hazard rate.
    pub lambda_c: f64,
    /// Bank funding spread on posted margin.
    pub lambda_fund: f64,
    /// Spread received on posted margin.
    pub s_i: f64,
    /// Counterparty recovery rate.
    pub recovery_c: f64,
}

impl MvaInputs {
    pub fn validate(&self) -> Result<()> {
        let all = [self.r, self.lambda_b, self.lambda_c, self.lambda_fund, self.s_i, self.recovery_c];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mva", "all inputs must be finite"));
        }
        if self.lambda_b < 0.0 || self.lambda_c < 0.0 {
            return Err(Error::invalid("mva.lambda", "hazard rates must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.recovery_c) {
            return Err(Error::invalid("mva.recovery_c", "recovery must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Net carry on posted margin, `(1 - R_C) lambda_fund - S_I`.
    pub fn carry_spread(&self) -> f64 {
        (1.0 - self.recovery_c) * self.lambda_fund - self.s_i
    }

    /// Combined discount-and-survival rate.
    pub fn decay_rate(&self) -> f64 {
        self.r + self.lambda_b + self.lambda_c
    }
}

/// Trapezoidal integral of
/// `carry * exp(-(r + lambda_b + lambda_c) u) * E[IM(u)]` from the first to
/// the last observation time.
pub fn mva_deterministic(profile: &[f64], grid: &TimeGrid, inp: &MvaInputs) -> Result<f64> {
    mva_on_times(profile, grid.obs_times(), inp)
}

/// Same integral on explicit, increasing knot times.
pub fn mva_on_times(profile: &[f64], times: &[f64], inp: &MvaInputs) -> Result<f64> {
    inp.validate()?;
    if profile.len() != times.len() {
        return Err(Error::invalid(
            "profile",
            format!("length {} does not match {} grid times", profile.len(), times.len()),
        ));
    }
    if profile.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("profile", "expected margins must be finite and non-negative"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("times", "must be strictly increasing"));
    }
    let Some(&t0) = times.first() else {
        return Ok(0.0);
    };
    let a = inp.decay_rate();
    let integrand: Vec<f64> = times.iter().zip(profile).map(|(&u, &im)| (-a * (u - t0)).exp() * im).collect();
    let area: f64 = times
        .windows(2)
        .zip(integrand.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum();
    Ok(inp.carry_spread() * area)
}
