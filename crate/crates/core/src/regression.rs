//! Regression data, the quantile scaler that turns a conditional second
//! moment into a margin, and square-integrability diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::oracle::MarginSide;
use crate::portfolio::ValueMatrix;
use crate::rng::{self, Domain};
use crate::sde::TimeGrid;

/// Per-time-step regression pair: `x = V(t)`, `y = (V(t + mpor) - V(t))^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub t_index: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl RegressionData {
    pub fn new(t_index: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid("regression data", "x and y lengths differ"));
        }
        if x.is_empty() {
            return Err(Error::invalid("regression data", "empty sample"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("regression data", "non-finite entry"));
        }
        if y.iter().any(|v| *v < 0.0) {
            return Err(Error::invalid("regression data", "negative squared PnL"));
        }
        Ok(Self { t_index, x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// True when every regressor value is identical.
    pub fn x_is_constant(&self) -> bool {
        self.x.iter().all(|&v| v == self.x[0])
    }
}

pub fn build_regression_data(values: &ValueMatrix, grid: &TimeGrid, t_index: usize) -> Result<RegressionData> {
    if t_index >= grid.n_obs() {
        return Err(Error::invalid("t_index", format!("{t_index} out of range (grid has {} points)", grid.n_obs())));
    }
    if values.n_columns() != grid.n_columns() {
        return Err(Error::invalid("values", "matrix does not carry the (t, t + mpor) column pairs of the grid"));
    }
    let x = values.column(TimeGrid::obs_column(t_index));
    let y = values
        .column(TimeGrid::mpor_column(t_index))
        .iter()
        .zip(&x)
        .map(|(shifted, now)| (shifted - now).powi(2))
        .collect();
    RegressionData::new(t_index, x, y)
}

/// Maps a standard deviation to a quantile of the assumed local PnL law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantileScaler {
    Normal { p: f64 },
    /// Student-t with `dof` degrees of freedom, rescaled to unit variance.
    StudentT { p: f64, dof: f64 },
}

impl QuantileScaler {
    pub fn p(&self) -> f64 {
        match *self {
            QuantileScaler::Normal { p } | QuantileScaler::StudentT { p, .. } => p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid("scaler.p", format!("must lie in (0, 1), got {p}")));
        }
        if let QuantileScaler::StudentT { dof, .. } = *self {
            if !(dof > 2.0) || !dof.is_finite() {
                return Err(Error::invalid("scaler.dof", format!("must exceed 2 for finite variance, got {dof}")));
            }
        }
        Ok(())
    }

    /// Quantile of the unit-variance law at level `p`.
    pub fn quantile(&self) -> Result<f64> {
        self.validate()?;
        let q = match *self {
            QuantileScaler::Normal { p } => Normal::standard().inverse_cdf(p),
            QuantileScaler::StudentT { p, dof } => {
                let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::invalid("scaler.dof", e.to_string()))?;
                t.inverse_cdf(p) * ((dof - 2.0) / dof).sqrt()
            }
        };
        if !q.is_finite() {
            return Err(Error::NonFinite("scaler quantile"));
        }
        Ok(q)
    }
}

/// Margin per path from predicted conditional second moments.
///
/// Negative predictions are clamped to zero before the square root.
pub fn im_from_second_moment(m_hat: &[f64], scaler: &QuantileScaler) -> Result<Vec<f64>> {
    if m_hat.iter().any(|m| !m.is_finite()) {
        return Err(Error::invalid("m_hat", "predictions must be finite"));
    }
    let q = scaler.quantile()?;
    let side = MarginSide::for_level(scaler.p());
    Ok(m_hat.iter().map(|&m| side.margin(m.max(0.0).sqrt() * q)).collect())
}

/// Bootstrap replicates below which the dispersion estimate is not trusted.
pub const MIN_BOOT: usize = 100;
pub const MIN_DIAGNOSTIC_SAMPLES: usize = 100;

/// Threshold on the sample-size-scaled bootstrap CV of the fourth moment.
///
/// The scaled CV estimates `sd(V^4) / E[V^4]` for a single draw: about 3.3
/// for Gaussian data, and it grows without bound with the sample size when
/// `E[V^8]` (in particular when `E[V^4]`) is infinite.
pub const TAIL_CV_THRESHOLD: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    /// 1: mean, 2: variance, 4: raw fourth moment.
    pub order: u32,
    pub estimate: f64,
    /// Bootstrap standard deviation over |estimate| (0 when both vanish).
    pub boot_cv: f64,
    /// `boot_cv * sqrt(n)`.
    pub scaled_cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n_samples: usize,
    pub n_boot: usize,
    pub moments: Vec<MomentEstimate>,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl MomentReport {
    pub fn moment(&self, order: u32) -> Option<&MomentEstimate> {
        self.moments.iter().find(|m| m.order == order)
    }
}

fn moments_124(xs: &[f64]) -> [f64; 3] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n;
    [mean, var, m4]
}

/// Estimate `E[V]`, `Var[V]` and `E[V^4]` with bootstrap dispersion, flagging
/// samples whose fourth moment is dominated by a few extreme points.
pub fn moment_diagnostics(samples: &[f64], n_boot: usize, seed: u64) -> Result<MomentReport> {
    if samples.len() < MIN_DIAGNOSTIC_SAMPLES {
        return Err(Error::invalid(
            "samples",
            format!("need at least {MIN_DIAGNOSTIC_SAMPLES} samples, got {}", samples.len()),
        ));
    }
    if n_boot < MIN_BOOT {
        return Err(Error::invalid("n_boot", format!("need at least {MIN_BOOT} replicates, got {n_boot}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples", "non-finite sample"));
    }
    let n = samples.len();
    let point = moments_124(samples);

    let mut rng = rng::stream(seed, Domain::Bootstrap, &[]);
    let mut resample = vec![0.0; n];
    let mut sums = [0.0f64; 3];
    let mut sq_sums = [0.0f64; 3];
    for _ in 0..n_boot {
        for slot in resample.iter_mut() {
            *slot = samples[rng.random_range(0..n)];
        }
        let est = moments_124(&resample);
        for j in 0..3 {
            sums[j] += est[j];
            sq_sums[j] += est[j] * est[j];
        }
    }

    let nb = n_boot as f64;
    let moments: Vec<MomentEstimate> = [1u32, 2, 4]
        .iter()
        .enumerate()
        .map(|(j, &order)| {
            let mean = sums[j] / nb;
            let sd = ((sq_sums[j] / nb - mean * mean).max(0.0) * nb / (nb - 1.0)).sqrt();
            let boot_cv = if sd == 0.0 { 0.0 } else { sd / point[j].abs() };
            MomentEstimate { order, estimate: point[j], boot_cv, scaled_cv: boot_cv * (n as f64).sqrt() }
        })
        .collect();

    let verdict = if moments[2].scaled_cv > TAIL_CV_THRESHOLD { Verdict::Flag } else { Verdict::Pass };
    Ok(MomentReport { n_samples: n, n_boot, moments, threshold: TAIL_CV_THRESHOLD, verdict })
}
