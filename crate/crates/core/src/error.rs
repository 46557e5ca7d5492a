use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an argument or configuration value does not hold.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    /// All kernel weights underflowed at a query point.
    #[error("bandwidth starvation at query x = {x}: every kernel weight is zero (h = {h})")]
    BandwidthStarvation { x: f64, h: f64 },

    /// The least-squares design matrix does not have full column rank.
    #[error("rank-deficient design matrix ({rows} x {cols})")]
    RankDeficient { rows: usize, cols: usize },

    /// Training produced a non-finite loss.
    #[error("training diverged; last finite epoch: {last_finite_epoch:?}")]
    Diverged { last_finite_epoch: Option<usize> },

    /// A computation produced a non-finite value.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid { field, reason: reason.into() }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid { .. })
    }
}
