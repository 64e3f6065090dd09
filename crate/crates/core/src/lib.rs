//! Perturbed Gaussian copula for two underlyings with skewed smiles.
//!
//! The copula adds a first-order correction to the Gaussian copula that
//! carries each underlying's volatility skew into the joint density. The crate
//! covers the density itself, calibration of the per-underlying parameters to
//! a single-maturity smile, quanto option pricing by double integration, and a
//! local volatility Monte Carlo pricer used as a comparator.

// Negated comparisons are how NaN inputs get rejected; node tables keep
// their published digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

pub mod error;
pub mod numerics;
pub mod marketdata;
pub mod perturbed;
pub mod calibration;
pub mod pricing;
pub mod lvmc;

pub use error::{Error, Result};
