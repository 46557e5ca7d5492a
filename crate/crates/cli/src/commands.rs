//! The subcommands. Each writes its artifacts under the output directory.

use std::path::{Path, PathBuf};

use fwdim::approx::{approximate_profile, Approximator, Method, StepFit};
use fwdim::kernel::{KernelKind, LocalOrder};
use fwdim::linear_maps::PolyFit;
use fwdim::mva::{mva_on_times, MvaInputs};
use fwdim::neural_net::{EpochRecord, MlpDocument};
use fwdim::oracle::{brute_force_im, ImSurface};
use fwdim::portfolio::{value_netting_set, ValueMatrix};
use fwdim::regression::{moment_diagnostics, MomentReport};
use fwdim::rng::{derive_seed, Domain};
use fwdim::sde::{simulate_paths, TimeGrid};
use serde::Serialize;

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::error::CliError;
use crate::io::{self, fmt_f64, ProfileRow};

pub fn oracle_surface_path(out: &Path) -> PathBuf {
    out.join("oracle_surface.csv")
}

pub fn oracle_profile_path(out: &Path) -> PathBuf {
    out.join("oracle_profile.csv")
}

pub fn approx_profile_path(out: &Path, m: Method) -> PathBuf {
    out.join(format!("approx_{}_profile.csv", m.as_str()))
}

pub fn approx_fit_path(out: &Path, m: Method) -> PathBuf {
    out.join(format!("approx_{}_fit.json", m.as_str()))
}

pub fn training_log_path(out: &Path, t_index: usize) -> PathBuf {
    out.join(format!("approx_nn_training_t{t_index}.csv"))
}

pub fn comparison_path(out: &Path, m: Method) -> PathBuf {
    out.join(format!("comparison_{}.csv", m.as_str()))
}

pub fn comparison_summary_path(out: &Path) -> PathBuf {
    out.join("comparison_summary.json")
}

pub fn diagnostics_path(out: &Path) -> PathBuf {
    out.join("diagnostics.json")
}

pub fn mva_report_path(out: &Path) -> PathBuf {
    out.join("mva_report.json")
}

/// Nested Monte Carlo surface and its expected profile.
pub fn cmd_oracle(cfg: &RunConfig) -> Result<ImSurface, CliError> {
    let out = &cfg.output_dir;
    io::ensure_dir(out)?;
    let surface = brute_force_im(
        &cfg.model,
        &cfg.netting_set,
        &cfg.grid,
        cfg.n_outer,
        cfg.n_inner,
        cfg.scaler.p(),
        cfg.seed,
        cfg.discount_rate(),
    )?;
    let times = surface.times();
    let mut rows = Vec::with_capacity(surface.values().len());
    for path in 0..surface.n_paths() {
        for (k, t) in times.iter().enumerate() {
            rows.push(vec![path.to_string(), fmt_f64(*t), fmt_f64(surface.get(path, k))]);
        }
    }
    io::write_csv(&oracle_surface_path(out), io::SURFACE_SCHEMA, &io::SURFACE_HEADER, &rows)?;
    let profile: Vec<_> = times
        .iter()
        .zip(surface.profile())
        .zip(surface.profile_stderr())
        .map(|((&time, &im_mean), im_stderr)| ProfileRow { time, im_mean, im_stderr })
        .collect();
    io::write_profile(&oracle_profile_path(out), &profile)?;
    Ok(surface)
}

/// Outer paths for the regression methods: independent of the oracle's.
fn approx_values(cfg: &RunConfig) -> Result<ValueMatrix, CliError> {
    let seed = derive_seed(cfg.seed, Domain::OuterPath, &[1]);
    let cube = simulate_paths(&cfg.model, &cfg.grid, cfg.n_paths, seed)?;
    Ok(value_netting_set(&cfg.netting_set, &cube, &cfg.model, cfg.discount_rate())?)
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FitParams<'a> {
    Constant { value: f64 },
    Poly(&'a PolyFit),
    Kernel { kernel: KernelKind, h: f64, order: LocalOrder, n_train: usize },
    Nn(MlpDocument),
}

#[derive(Serialize)]
struct StepArtifact<'a> {
    t_index: usize,
    time: f64,
    im_mean: f64,
    im_stderr: f64,
    notes: &'a [String],
    fit: FitParams<'a>,
}

#[derive(Serialize)]
struct FitDocument<'a> {
    schema_version: u32,
    method: Method,
    steps: Vec<StepArtifact<'a>>,
}

/// Regression profile for one method, with per-step fit artifacts.
pub fn cmd_approx(cfg: &RunConfig, method: Method) -> Result<Vec<StepFit>, CliError> {
    let out = &cfg.output_dir;
    io::ensure_dir(out)?;
    let values = approx_values(cfg)?;
    let steps = approximate_profile(&values, &cfg.grid, method, &cfg.approx, &cfg.scaler)?;
    let rows: Vec<_> =
        steps.iter().map(|s| ProfileRow { time: s.time, im_mean: s.im_mean, im_stderr: s.im_stderr }).collect();
    io::write_profile(&approx_profile_path(out, method), &rows)?;

    let mut artifacts = Vec::with_capacity(steps.len());
    for s in &steps {
        let fit = match &s.approximator {
            Approximator::Constant(c) => FitParams::Constant { value: *c },
            Approximator::Poly(p) => FitParams::Poly(p),
            Approximator::Kernel(f) => {
                FitParams::Kernel { kernel: f.kernel.kind, h: f.kernel.h, order: f.order, n_train: f.len() }
            }
            Approximator::Nn(m) => {
                write_training_log(&training_log_path(out, s.t_index), &m.log)?;
                FitParams::Nn(MlpDocument::from(m.as_ref()))
            }
        };
        artifacts.push(StepArtifact {
            t_index: s.t_index,
            time: s.time,
            im_mean: s.im_mean,
            im_stderr: s.im_stderr,
            notes: &s.notes,
            fit,
        });
    }
    io::write_json(
        &approx_fit_path(out, method),
        &FitDocument { schema_version: SCHEMA_VERSION, method, steps: artifacts },
    )?;
    Ok(steps)
}

fn write_training_log(path: &Path, log: &[EpochRecord]) -> Result<(), CliError> {
    let rows: Vec<_> = log.iter().map(|r| vec![r.epoch.to_string(), fmt_f64(r.mse)]).collect();
    io::write_csv(path, io::TRAINING_SCHEMA, &io::TRAINING_HEADER, &rows)
}

/// Per-method accuracy against the oracle profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub rmse: f64,
    /// `None` when the oracle is zero somewhere the approximation is not.
    pub max_rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub schema_version: u32,
    pub n_outer: usize,
    pub n_inner: usize,
    pub n_paths: usize,
    pub methods: Vec<MethodSummary>,
}

/// Relative error of `approx` against `oracle`; zero when both vanish.
pub fn relative_error(oracle: f64, approx: f64) -> f64 {
    if oracle == 0.0 {
        if approx == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (approx - oracle) / oracle
    }
}

/// Runs the oracle and every configured method, then compares the profile
/// files they wrote.
pub fn cmd_compare(cfg: &RunConfig) -> Result<ComparisonSummary, CliError> {
    let out = &cfg.output_dir;
    cmd_oracle(cfg)?;
    let oracle = io::read_profile(&oracle_profile_path(out))?;
    let mut methods = Vec::new();
    for &m in &cfg.compare_methods {
        cmd_approx(cfg, m)?;
        let approx = io::read_profile(&approx_profile_path(out, m))?;
        if approx.len() != oracle.len() || approx.iter().zip(&oracle).any(|(a, o)| a.time != o.time) {
            return Err(CliError::Io(format!("{} and oracle profile have different time grids", m.as_str())));
        }
        let mut rows = Vec::with_capacity(oracle.len());
        let mut sq = 0.0;
        let mut max_rel = 0.0f64;
        for (o, a) in oracle.iter().zip(&approx) {
            let rel = relative_error(o.im_mean, a.im_mean);
            sq += (a.im_mean - o.im_mean).powi(2);
            max_rel = max_rel.max(rel.abs());
            rows.push(vec![fmt_f64(o.time), fmt_f64(o.im_mean), fmt_f64(a.im_mean), fmt_f64(rel)]);
        }
        io::write_csv(&comparison_path(out, m), io::COMPARISON_SCHEMA, &io::COMPARISON_HEADER, &rows)?;
        methods.push(MethodSummary {
            method: m,
            rmse: (sq / oracle.len() as f64).sqrt(),
            max_rel_error: max_rel.is_finite().then_some(max_rel),
        });
    }
    let summary = ComparisonSummary {
        schema_version: SCHEMA_VERSION,
        n_outer: cfg.n_outer,
        n_inner: cfg.n_inner,
        n_paths: cfg.n_paths,
        methods,
    };
    io::write_json(&comparison_summary_path(out), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t_index: usize,
    pub time: f64,
    pub report: MomentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsDocument {
    pub schema_version: u32,
    /// What was sampled at each step.
    pub samples: &'static str,
    pub steps: Vec<StepDiagnostics>,
}

/// Moment checks on the margin-period PnL at every observation time.
pub fn cmd_diagnose(cfg: &RunConfig) -> Result<DiagnosticsDocument, CliError> {
    let out = &cfg.output_dir;
    io::ensure_dir(out)?;
    let values = approx_values(cfg)?;
    let mut steps = Vec::with_capacity(cfg.grid.n_obs());
    for (k, &time) in cfg.grid.obs_times().iter().enumerate() {
        let v0 = values.column(TimeGrid::obs_column(k));
        let v1 = values.column(TimeGrid::mpor_column(k));
        let pnl: Vec<f64> = v1.iter().zip(&v0).map(|(b, a)| b - a).collect();
        let seed = derive_seed(cfg.seed, Domain::Bootstrap, &[k as u64]);
        let report = moment_diagnostics(&pnl, cfg.n_boot, seed)?;
        steps.push(StepDiagnostics { t_index: k, time, report });
    }
    let doc = DiagnosticsDocument { schema_version: SCHEMA_VERSION, samples: "pnl_over_mpor", steps };
    io::write_json(&diagnostics_path(out), &doc)?;
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MvaReport {
    pub schema_version: u32,
    pub inputs: MvaInputs,
    pub carry_spread: f64,
    pub decay_rate: f64,
    pub times: Vec<f64>,
    pub profile: Vec<f64>,
    pub mva: f64,
}

/// MVA of the expected-IM profile stored in `profile_csv`.
pub fn cmd_mva(cfg: &RunConfig, profile_csv: &Path) -> Result<MvaReport, CliError> {
    let rows = io::read_profile(profile_csv)?;
    let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
    let profile: Vec<f64> = rows.iter().map(|r| r.im_mean).collect();
    let mva = mva_on_times(&profile, &times, &cfg.mva)?;
    let report = MvaReport {
        schema_version: SCHEMA_VERSION,
        inputs: cfg.mva,
        carry_spread: cfg.mva.carry_spread(),
        decay_rate: cfg.mva.decay_rate(),
        times,
        profile,
        mva,
    };
    io::ensure_dir(&cfg.output_dir)?;
    io::write_json(&mva_report_path(&cfg.output_dir), &report)?;
    Ok(report)
}
