//! Numerical machinery for two-player nonzero-sum stochastic differential
//! games with exponential (risk-sensitive) cost criteria.
//!
//! The library computes *candidate* Nash equilibria in feedback form and
//! then tries hard to falsify them:
//!
//! 1. [`model`] declares a game — diffusion, drift, running and terminal
//!    costs, finite control grids — together with the regularity and
//!    growth constants (assumptions A1–A4) every solver relies on, and
//!    probes those assumptions numerically.
//! 2. [`hamiltonian`] resolves, point by point, the static grid game whose
//!    Nash points define the equilibrium feedback map.
//! 3. [`sde`] simulates driftless and controlled state chains on a shared
//!    time grid with deterministic, stream-indexed randomness.
//! 4. [`bsde`] solves the coupled backward system by least-squares Monte
//!    Carlo in exponential coordinates, with a truncation-level ladder
//!    whose convergence is itself a reported diagnostic.
//! 5. [`girsanov`] and [`payoff`] evaluate the resulting controls by
//!    direct simulation and by change of measure, independently of the
//!    backward solver.
//! 6. [`nash`] estimates best-response deviation margins with common
//!    random numbers and issues a statistical certificate.
//! 7. [`density`] checks Gaussian-band bounds on the simulated transition
//!    density, the quantitative backbone behind the measure-change
//!    estimates.
//!
//! Everything downstream of a seed is deterministic, including under the
//! parallel runtime: reductions are ordered, so worker counts never change
//! results. The `parallel` feature (on by default) backs [`par`] with a
//! work-stealing pool; without it the same code runs sequentially.

pub mod bsde;
pub mod config;
pub mod density;
pub mod error;
pub mod feedback;
pub mod girsanov;
pub mod hamiltonian;
pub mod model;
pub mod nash;
pub mod par;
pub mod payoff;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use model::{GameModel, Player};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
