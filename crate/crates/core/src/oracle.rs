//! Ground-truth forward initial margin by brute-force nested Monte Carlo.
//!
//! Every outer node `(path, t_k)` gets its own inner cloud of `n_inner`
//! re-simulated states at `t_k + mpor`; the margin at that node is a quantile
//! of the resulting PnL sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::NettingSet;
use crate::rng::{self, Domain};
use crate::sde::{simulate_inner, simulate_paths, ModelSpec, TimeGrid};

/// Smallest inner sample that leaves any mass in a 1% tail.
pub const MIN_INNER: usize = 100;

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", format!("quantile level must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// Type-7 quantile (linear interpolation between closest ranks), reordering
/// `samples` in place.
pub fn quantile_in_place(samples: &mut [f64], p: f64) -> Result<f64> {
    check_probability(p)?;
    if samples.is_empty() {
        return Err(Error::invalid("samples", "empty sample"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("samples", "NaN in sample"));
    }
    let n = samples.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let (_, lo_val, upper) = samples.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_val = *lo_val;
    if lo + 1 >= n || frac == 0.0 {
        return Ok(lo_val);
    }
    let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(lo_val + frac * (hi_val - lo_val))
}

/// Type-7 empirical quantile of `samples` at level `p`.
pub fn empirical_quantile(samples: &[f64], p: f64) -> Result<f64> {
    let mut buf = samples.to_vec();
    quantile_in_place(&mut buf, p)
}

/// Which side of the PnL distribution a quantile level measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginSide {
    /// Upper tail (`p >= 0.5`): margin posted against a loss of value.
    Posted,
    /// Lower tail (`p < 0.5`): margin received, reported as a magnitude.
    Received,
}

impl MarginSide {
    pub fn for_level(p: f64) -> Self {
        if p >= 0.5 {
            MarginSide::Posted
        } else {
            MarginSide::Received
        }
    }

    /// Non-negative margin from a PnL quantile.
    pub fn margin(self, quantile: f64) -> f64 {
        match self {
            MarginSide::Posted => quantile.max(0.0),
            MarginSide::Received => (-quantile).max(0.0),
        }
    }
}

/// Per-node initial margin on the observation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImSurface {
    n_paths: usize,
    times: Vec<f64>,
    /// Row-major `(path, obs-time)`.
    im: Vec<f64>,
    profile: Vec<f64>,
    pub p: f64,
    pub n_outer: usize,
    pub n_inner: usize,
}

impl ImSurface {
    pub fn new(n_paths: usize, times: Vec<f64>, im: Vec<f64>, p: f64, n_inner: usize) -> Result<Self> {
        if im.len() != n_paths * times.len() || n_paths == 0 {
            return Err(Error::invalid("im", "surface shape does not match paths x times"));
        }
        if im.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("im", "margins must be finite and non-negative"));
        }
        let n_times = times.len();
        let profile = (0..n_times)
            .map(|k| (0..n_paths).map(|i| im[i * n_times + k]).sum::<f64>() / n_paths as f64)
            .collect();
        Ok(Self { n_paths, times, im, profile, p, n_outer: n_paths, n_inner })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn get(&self, path: usize, k: usize) -> f64 {
        self.im[path * self.times.len() + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.im
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.get(i, k)).collect()
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    /// Standard error of each profile point across paths.
    pub fn profile_stderr(&self) -> Vec<f64> {
        (0..self.times.len()).map(|k| mean_stderr(&self.column(k)).1).collect()
    }
}

/// Sample mean and its standard error (zero for a single sample).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Expected-IM profile: column means of the surface.
pub fn expected_im_profile(surface: &ImSurface) -> Vec<f64> {
    surface.profile.clone()
}

/// Forward IM surface by nested Monte Carlo.
///
/// For every outer node the PnL sample is `V(inner state, t + mpor) - V(outer
/// state, t)`; the node margin is its type-7 quantile at level `p`, floored at
/// zero (as a magnitude of the lower tail when `p < 0.5`).
#[allow(clippy::too_many_arguments)]
pub fn brute_force_im(
    model: &ModelSpec,
    ns: &NettingSet,
    grid: &TimeGrid,
    n_outer: usize,
    n_inner: usize,
    p: f64,
    seed: u64,
    discount_rate: f64,
) -> Result<ImSurface> {
    check_probability(p)?;
    if n_outer == 0 {
        return Err(Error::invalid("n_outer", "must be at least 1"));
    }
    if n_inner < MIN_INNER {
        return Err(Error::invalid("n_inner", format!("must be at least {MIN_INNER}, got {n_inner}")));
    }
    ns.validate(model)?;
    let cube = simulate_paths(model, grid, n_outer, seed)?;
    let n_obs = grid.n_obs();
    let mpor = grid.mpor();
    let side = MarginSide::for_level(p);

    let im = (0..n_outer * n_obs)
        .into_par_iter()
        .map(|node| {
            let (path, k) = (node / n_obs, node % n_obs);
            let t = grid.obs_times()[k];
            let state = cube.state(path, TimeGrid::obs_column(k));
            let v_t = ns.value(state, t, model, discount_rate)?;
            let node_seed = rng::derive_seed(seed, Domain::InnerNode, &[path as u64, k as u64]);
            let mut pnl = simulate_inner(model, state, t, mpor, n_inner, node_seed)?;
            for x in pnl.iter_mut() {
                *x = ns.value(std::slice::from_ref(x), t + mpor, model, discount_rate)? - v_t;
            }
            Ok(side.margin(quantile_in_place(&mut pnl, p)?))
        })
        .collect::<Result<Vec<f64>>>()?;

    ImSurface::new(n_outer, grid.obs_times().to_vec(), im, p, n_inner)
}
