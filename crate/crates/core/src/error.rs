use thiserror::Error;

/// Errors raised by the pricing library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {value} is outside the open interval (0, 1)")]
    Domain { what: &'static str, value: f64 },

    #[error(
        "quadrature did not converge within {subdivisions} subdivisions \
         (value {value:e}, error estimate {error:e})"
    )]
    NonConvergence {
        value: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("root is not bracketed: f({lo}) = {f_lo:e}, f({hi}) = {f_hi:e}")]
    NoBracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("{which} normalizer {value} outside the perturbative band [0.5, 2.0]")]
    NormalizerOutOfBand { which: &'static str, value: f64 },

    #[error("option price {price:e} outside no-arbitrage bounds ({lower:e}, {upper:e})")]
    OutOfBounds { price: f64, lower: f64, upper: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("regression seed gives non-positive volatility level {sigma}")]
    SeedInvalid { sigma: f64 },

    #[error("calibration did not converge after {iterations} iterations (residual {residual:e})")]
    CalibrationNonConvergence { iterations: usize, residual: f64 },

    #[error("negative local variance at strike {strike}, time {time} (input arbitrage)")]
    NegativeVariance { strike: f64, time: f64 },

    #[error("surface maturities differ: {first} vs {second}")]
    MaturityMismatch { first: f64, second: f64 },
}

impl Error {
    /// True for failures of a numerical procedure on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NoBracket { .. }
                | Error::NormalizerOutOfBand { .. }
                | Error::CalibrationNonConvergence { .. }
                | Error::NegativeVariance { .. }
                | Error::SeedInvalid { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
