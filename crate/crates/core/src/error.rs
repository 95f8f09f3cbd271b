//! Crate-wide error type.
//!
//! Numerical diagnostics that merely *fail a check* (growth bounds, envelope
//! coverage, Nash margins) are reported through their report structs, not
//! through this enum. `Error` is reserved for conditions that make a result
//! meaningless: malformed models, singular diffusion matrices, missing
//! equilibria, exhausted samples.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model parameter violates one of the structural assumptions
    /// (A1 diffusion regularity, A2 growth, A4 auxiliary drift bound).
    /// `assumption` names the failed item, e.g. `"A2"` for an exponent
    /// outside (1, 2).
    #[error("assumption {assumption} violated: {detail}")]
    Assumption { assumption: &'static str, detail: String },

    /// A specification is malformed independently of the assumptions:
    /// mismatched dimensions, empty control grids, duplicate grid points.
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    /// The diffusion matrix could not be inverted at a concrete point.
    #[error("diffusion matrix is singular at t = {t}, x = {x:?}")]
    SingularDiffusion { t: f64, x: Vec<f64> },

    /// No pure Nash point exists in the static grid game at this point.
    /// Carries the full evaluation point so the caller can report it.
    #[error("no pure Nash equilibrium in the control-grid game at t = {t}, x = {x:?} (p = {p:?}, q = {q:?})")]
    NoEquilibrium { t: f64, x: Vec<f64>, p: Vec<f64>, q: Vec<f64> },

    /// A feedback map returned a control that is not a grid member.
    #[error("feedback control for player {player} at t = {t}, x = {x:?} is not a grid point: {control:?}")]
    OutOfGridControl { player: u8, t: f64, x: Vec<f64>, control: Vec<f64> },

    /// Every Monte Carlo path was flagged (overflow); no estimate possible.
    #[error("all {n_paths} paths were flagged for overflow; no usable sample remains")]
    AllPathsFlagged { n_paths: usize },

    /// Too many paths overflowed for the estimate to be trusted.
    #[error("{n_flagged} of {n_paths} paths overflowed the exponent threshold (limit {limit})")]
    OverflowBudgetExceeded { n_flagged: usize, n_paths: usize, limit: usize },

    /// A sample is too small for the requested statistic.
    #[error("need at least {required} paths for {what}, got {actual}")]
    TooFewPaths { what: &'static str, required: usize, actual: usize },

    /// Two density estimates do not share a lattice / observation time.
    #[error("density estimates are incompatible: {0}")]
    LatticeMismatch(String),

    /// A numeric argument is outside its documented domain.
    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    /// Configuration file could not be parsed or is inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Persisted solution/report data could not be read back.
    #[error("malformed artifact {path}: {detail}")]
    MalformedArtifact { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error represents a violated model assumption
    /// rather than a malformed input or I/O problem.
    pub fn is_assumption_failure(&self) -> bool {
        matches!(self, Error::Assumption { .. } | Error::SingularDiffusion { .. })
    }
}
