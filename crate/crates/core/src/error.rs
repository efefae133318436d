use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("invalid boundaries at stage {stage}: {reason}")]
    Boundary { stage: usize, reason: String },

    #[error("invalid effect configuration: {0}")]
    Effects(String),

    #[error("outcome grid does not match the active arm set: {0}")]
    Grid(String),

    #[error("invalid model restriction: {0}")]
    Restriction(String),

    #[error("dimension mismatch: model has {model} coordinates, rectangle has {rectangle}")]
    Dimension { model: usize, rectangle: usize },

    #[error(
        "quadrature precision {target:.3e} not reached after {evaluations} evaluations \
         (achieved {achieved:.3e})"
    )]
    Precision {
        target: f64,
        achieved: f64,
        evaluations: u64,
    },

    #[error("enumeration too large: {what} is {count}, limit {limit}")]
    TooLarge {
        what: &'static str,
        count: u64,
        limit: u64,
    },

    #[error("no bracket in [{lo}, {hi}]: objective ranges over [{f_lo:.5}, {f_hi:.5}]")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("power target {target} unreachable with group size up to {max_n} (power {achieved:.4})")]
    PowerUnreachable { target: f64, max_n: u32, achieved: f64 },

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error("{0}")]
    Invalid(String),
}
