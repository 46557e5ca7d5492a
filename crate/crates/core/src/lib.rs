//! Forward initial margin and MVA.
//!
//! The ground truth is a brute-force nested Monte Carlo ([`oracle`]). Three
//! regression approximators ([`linear_maps`], [`kernel`], [`neural_net`])
//! estimate the conditional second moment of the margin-period PnL from
//! outer scenarios only; [`regression`] turns that moment into a margin and
//! [`mva`] integrates the expected margin profile into a funding cost.

pub mod approx;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod linear_maps;
pub mod mva;
pub mod neural_net;
pub mod oracle;
pub mod portfolio;
pub mod regression;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
