use thiserror::Error;

/// Errors raised by the pricing and approximation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("density is not integrable on cell {cell} ([{lo}, {hi}))")]
    NonIntegrable { cell: usize, lo: f64, hi: f64 },

    #[error("quadrature failed to converge on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },

    #[error("Riccati solution blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("non-finite state on path {path} at step {step}")]
    NonFiniteState { path: usize, step: usize },

    #[error("no critical price in [{lo}, {hi}]: price exceeds payoff everywhere")]
    NoCriticalPrice { lo: f64, hi: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
