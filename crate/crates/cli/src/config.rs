//! Run configuration: a single TOML file with a schema version.

use std::path::{Path, PathBuf};

use fwdim::approx::{ApproxSettings, KernelSettings, Method, NnSettings, PolySettings};
use fwdim::kernel::{Bandwidth, KernelKind, KernelSpec, LocalOrder};
use fwdim::mva::MvaInputs;
use fwdim::neural_net::TrainConfig;
use fwdim::oracle::MIN_INNER;
use fwdim::portfolio::{Instrument, NettingSet};
use fwdim::regression::{QuantileScaler, MIN_BOOT};
use fwdim::sde::{build_time_grid, ModelSpec, TimeGrid};
use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MPOR: f64 = 10.0 / 365.0;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    model: ModelSpec,
    grid: RawGrid,
    netting_set: Vec<Instrument>,
    #[serde(default)]
    oracle: RawOracle,
    #[serde(default)]
    approx: RawApprox,
    #[serde(default = "default_scaler")]
    scaler: QuantileScaler,
    mva: MvaInputs,
    #[serde(default)]
    diagnose: RawDiagnose,
}

fn default_scaler() -> QuantileScaler {
    QuantileScaler::Normal { p: 0.99 }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    horizon: f64,
    step: f64,
    #[serde(default = "default_mpor")]
    mpor: f64,
}

fn default_mpor() -> f64 {
    DEFAULT_MPOR
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOracle {
    n_outer: usize,
    n_inner: usize,
}

impl Default for RawOracle {
    fn default() -> Self {
        Self { n_outer: 500, n_inner: 20_000 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawApprox {
    method: Method,
    /// Methods run by `compare`; defaults to `[method]`.
    compare: Option<Vec<Method>>,
    n_paths: usize,
    poly: PolySettings,
    kernel: RawKernel,
    nn: RawNn,
}

impl Default for RawApprox {
    fn default() -> Self {
        Self {
            method: Method::Poly,
            compare: None,
            n_paths: 50_000,
            poly: PolySettings::default(),
            kernel: RawKernel::default(),
            nn: RawNn::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawKernel {
    kind: KernelKind,
    h: Option<f64>,
    rule: Option<String>,
    order: usize,
}

impl Default for RawKernel {
    fn default() -> Self {
        Self { kind: KernelKind::Gaussian, h: None, rule: None, order: 1 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawNn {
    hidden: Vec<usize>,
    seed: Option<u64>,
    #[serde(flatten)]
    train: TrainConfig,
}

impl Default for RawNn {
    fn default() -> Self {
        let d = NnSettings::default();
        Self { hidden: d.hidden, seed: None, train: d.train }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDiagnose {
    n_boot: usize,
}

impl Default for RawDiagnose {
    fn default() -> Self {
        Self { n_boot: 200 }
    }
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub netting_set: NettingSet,
    pub n_outer: usize,
    pub n_inner: usize,
    pub method: Method,
    pub compare_methods: Vec<Method>,
    pub n_paths: usize,
    pub approx: ApproxSettings,
    pub scaler: QuantileScaler,
    pub mva: MvaInputs,
    pub n_boot: usize,
}

impl RunConfig {
    /// Discount rate for pricing; the same flat rate as the MVA integral.
    pub fn discount_rate(&self) -> f64 {
        self.mva.r
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let default_out = path.parent().unwrap_or(Path::new(".")).join("out");
        Self::parse(&text, default_out)
    }

    pub fn parse(text: &str, default_out: PathBuf) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "invalid schema_version: expected {SCHEMA_VERSION}, got {}",
                raw.schema_version
            )));
        }
        raw.model.validate().map_err(|e| section("model", e))?;
        let grid = build_time_grid(raw.grid.horizon, raw.grid.step, raw.grid.mpor).map_err(|e| section("grid", e))?;
        let netting_set = NettingSet::new(raw.netting_set).map_err(|e| section("netting_set", e))?;
        netting_set.validate(&raw.model).map_err(|e| section("netting_set", e))?;
        if netting_set.min_maturity() < grid.horizon() {
            return Err(CliError::Config(format!(
                "invalid netting_set.maturity: every maturity must be at least grid.horizon = {}",
                grid.horizon()
            )));
        }
        if raw.oracle.n_outer == 0 {
            return Err(CliError::Config("invalid oracle.n_outer: must be at least 1".into()));
        }
        if raw.oracle.n_inner < MIN_INNER {
            return Err(CliError::Config(format!("invalid oracle.n_inner: must be at least {MIN_INNER}")));
        }
        if raw.approx.n_paths < 2 {
            return Err(CliError::Config("invalid approx.n_paths: must be at least 2".into()));
        }
        if raw.diagnose.n_boot < MIN_BOOT {
            return Err(CliError::Config(format!("invalid diagnose.n_boot: must be at least {MIN_BOOT}")));
        }
        raw.scaler.validate().map_err(|e| section("scaler", e))?;
        raw.mva.validate().map_err(|e| section("mva", e))?;

        let bandwidth = match (raw.approx.kernel.h, raw.approx.kernel.rule.as_deref()) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("invalid approx.kernel: give either h or rule, not both".into()))
            }
            (Some(h), None) => Bandwidth::Fixed(h),
            (None, None) | (None, Some("silverman")) => Bandwidth::Silverman,
            (None, Some(other)) => {
                return Err(CliError::Config(format!("invalid approx.kernel.rule: unknown rule {other:?}")))
            }
        };
        let order = LocalOrder::from_degree(raw.approx.kernel.order).map_err(|e| section("approx", e))?;
        let approx = ApproxSettings {
            poly: raw.approx.poly,
            kernel: KernelSettings { spec: KernelSpec { kind: raw.approx.kernel.kind, bandwidth }, order },
            nn: NnSettings {
                hidden: raw.approx.nn.hidden,
                train: raw.approx.nn.train,
                seed: raw.approx.nn.seed.unwrap_or(raw.seed),
            },
        };
        approx.validate().map_err(|e| section("approx", e))?;

        Ok(Self {
            seed: raw.seed,
            output_dir: raw.output_dir.unwrap_or(default_out),
            model: raw.model,
            grid,
            netting_set,
            n_outer: raw.oracle.n_outer,
            n_inner: raw.oracle.n_inner,
            method: raw.approx.method,
            compare_methods: raw.approx.compare.unwrap_or_else(|| vec![raw.approx.method]),
            n_paths: raw.approx.n_paths,
            approx,
            scaler: raw.scaler,
            mva: raw.mva,
            n_boot: raw.diagnose.n_boot,
        })
    }
}

/// Config error naming the offending field with its section.
fn section(name: &str, err: fwdim::Error) -> CliError {
    match err {
        fwdim::Error::Invalid { field, reason } if field.starts_with(name) => {
            CliError::Config(format!("invalid {field}: {reason}"))
        }
        fwdim::Error::Invalid { field, reason } => CliError::Config(format!("invalid {name}.{field}: {reason}")),
        other => CliError::Config(format!("{name}: {other}")),
    }
}
