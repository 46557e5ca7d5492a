//! Risk-factor simulation: outer scenario paths and inner re-simulation.
//!
//! Both models are sampled from their exact transition laws, so there is no
//! time-discretisation error anywhere in the engine.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

const TIME_EPS: f64 = 1e-12;

/// Observation dates together with the margin period of risk.
///
/// Each observation time `t` is paired with `t + mpor`; the pair is stored
/// explicitly rather than forcing the margin period onto the uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    obs_times: Vec<f64>,
    mpor: f64,
    horizon: f64,
}

impl TimeGrid {
    /// Grid from explicit observation times.
    pub fn new(obs_times: Vec<f64>, mpor: f64, horizon: f64) -> Result<Self> {
        if !(mpor > 0.0 && mpor.is_finite()) {
            return Err(Error::invalid("mpor", format!("must be positive, got {mpor}")));
        }
        if !horizon.is_finite() {
            return Err(Error::invalid("horizon", "must be finite"));
        }
        if obs_times.is_empty() {
            return Err(Error::invalid("obs_times", "empty observation grid"));
        }
        if obs_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("obs_times", "times must be finite and non-negative"));
        }
        if obs_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("obs_times", "times must be strictly increasing"));
        }
        if obs_times.iter().any(|t| t + mpor > horizon + TIME_EPS) {
            return Err(Error::invalid("obs_times", "t + mpor exceeds the horizon"));
        }
        Ok(Self { obs_times, mpor, horizon })
    }

    pub fn obs_times(&self) -> &[f64] {
        &self.obs_times
    }

    pub fn mpor(&self) -> f64 {
        self.mpor
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_obs(&self) -> usize {
        self.obs_times.len()
    }

    /// Number of simulated columns: every observation time and its `t + mpor` partner.
    pub fn n_columns(&self) -> usize {
        2 * self.obs_times.len()
    }

    /// Column index of observation `k`.
    pub fn obs_column(k: usize) -> usize {
        2 * k
    }

    /// Column index of observation `k` shifted by the margin period.
    pub fn mpor_column(k: usize) -> usize {
        2 * k + 1
    }

    /// Calendar time of a simulated column.
    pub fn column_time(&self, col: usize) -> f64 {
        let t = self.obs_times[col / 2];
        if col % 2 == 0 {
            t
        } else {
            t + self.mpor
        }
    }
}

/// Uniform grid `0, step, 2 step, ...` truncated so that `t + mpor <= horizon`.
pub fn build_time_grid(horizon: f64, step: f64, mpor: f64) -> Result<TimeGrid> {
    if !(mpor > 0.0) {
        return Err(Error::invalid("mpor", format!("must be positive, got {mpor}")));
    }
    if !(mpor < step) {
        return Err(Error::invalid("mpor", format!("must be smaller than step ({mpor} >= {step})")));
    }
    if !(step <= horizon) || !horizon.is_finite() {
        return Err(Error::invalid("step", format!("must not exceed horizon ({step} > {horizon})")));
    }
    let obs_times: Vec<f64> = (0..)
        .map(|k| k as f64 * step)
        .take_while(|t| t + mpor <= horizon + TIME_EPS)
        .collect();
    TimeGrid::new(obs_times, mpor, horizon)
}

/// One-factor risk-factor dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// dS = mu S dt + sigma S dW
    Gbm { s0: f64, drift: f64, vol: f64 },
    /// dx = kappa (theta - x) dt + sigma dW
    OrnsteinUhlenbeck { x0: f64, kappa: f64, theta: f64, vol: f64 },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::Gbm { s0, drift, vol } => {
                if !(s0 > 0.0 && s0.is_finite()) {
                    return Err(Error::invalid("model.s0", format!("must be positive, got {s0}")));
                }
                if !drift.is_finite() {
                    return Err(Error::invalid("model.drift", "must be finite"));
                }
                if !(vol >= 0.0 && vol.is_finite()) {
                    return Err(Error::invalid("model.vol", format!("must be non-negative, got {vol}")));
                }
            }
            ModelSpec::OrnsteinUhlenbeck { x0, kappa, theta, vol } => {
                if !(kappa > 0.0 && kappa.is_finite()) {
                    return Err(Error::invalid("model.kappa", format!("must be positive, got {kappa}")));
                }
                if !x0.is_finite() || !theta.is_finite() {
                    return Err(Error::invalid("model.x0", "x0 and theta must be finite"));
                }
                if !(vol >= 0.0 && vol.is_finite()) {
                    return Err(Error::invalid("model.vol", format!("must be non-negative, got {vol}")));
                }
            }
        }
        Ok(())
    }

    pub fn n_factors(&self) -> usize {
        1
    }

    pub fn initial_state(&self) -> f64 {
        match *self {
            ModelSpec::Gbm { s0, .. } => s0,
            ModelSpec::OrnsteinUhlenbeck { x0, .. } => x0,
        }
    }

    /// Exact transition over `dt` driven by a standard normal draw `z`.
    pub fn transition(&self, x: f64, dt: f64, z: f64) -> f64 {
        match *self {
            ModelSpec::Gbm { drift, vol, .. } => {
                x * ((drift - 0.5 * vol * vol) * dt + vol * dt.sqrt() * z).exp()
            }
            ModelSpec::OrnsteinUhlenbeck { kappa, theta, vol, .. } => {
                let decay = (-kappa * dt).exp();
                let sd = vol * (-(-2.0 * kappa * dt).exp_m1() / (2.0 * kappa)).sqrt();
                theta + (x - theta) * decay + sd * z
            }
        }
    }
}

/// Outer scenarios, stored row-major as `(path, column, factor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCube {
    n_paths: usize,
    n_columns: usize,
    n_factors: usize,
    values: Vec<f64>,
    grid: TimeGrid,
    seed: u64,
}

impl PathCube {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Factor vector of `path` at simulated column `col`.
    pub fn state(&self, path: usize, col: usize) -> &[f64] {
        let start = (path * self.n_columns + col) * self.n_factors;
        &self.values[start..start + self.n_factors]
    }

    /// First factor across all paths at column `col`.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.state(p, col)[0]).collect()
    }
}

/// Simulate `n_paths` outer scenarios at every observation time and its
/// `t + mpor` partner.
///
/// Path `i` consumes its own stream `(seed, i)`, so the cube is bit-identical
/// for any thread count.
pub fn simulate_paths(model: &ModelSpec, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathCube> {
    model.validate()?;
    if n_paths == 0 {
        return Err(Error::invalid("n_paths", "must be at least 1"));
    }
    let n_columns = grid.n_columns();
    let times: Vec<f64> = (0..n_columns).map(|c| grid.column_time(c)).collect();
    let mut values = vec![0.0; n_paths * n_columns];

    values
        .par_chunks_mut(n_columns)
        .enumerate()
        .for_each(|(path, row)| {
            let mut rng = rng::stream(seed, Domain::OuterPath, &[path as u64]);
            let mut x = model.initial_state();
            let mut t = 0.0;
            for (slot, &tc) in row.iter_mut().zip(&times) {
                let dt = tc - t;
                if dt > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    x = model.transition(x, dt, z);
                }
                *slot = x;
                t = tc;
            }
        });

    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("simulated paths"));
    }
    Ok(PathCube { n_paths, n_columns, n_factors: 1, values, grid: grid.clone(), seed })
}

/// Draw `n_inner` states at `t + delta` conditional on `state` at `t`.
///
/// The result is flattened, `n_inner * n_factors` long.
pub fn simulate_inner(
    model: &ModelSpec,
    state: &[f64],
    _t: f64,
    delta: f64,
    n_inner: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_inner < 2 {
        return Err(Error::invalid("n_inner", format!("must be at least 2, got {n_inner}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    if state.len() != model.n_factors() {
        return Err(Error::invalid("state", "dimension does not match the model"));
    }
    let mut rng = rng::stream(seed, Domain::InnerNode, &[]);
    let x = state[0];
    Ok((0..n_inner)
        .map(|_| model.transition(x, delta, rng.sample(StandardNormal)))
        .collect())
}
