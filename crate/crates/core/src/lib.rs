//! Simulation and statistical verification toolkit for strictly dyadic
//! branching diffusions.
//!
//! The crate has four layers:
//!
//! - [`model`] / [`builtin`]: the branching-diffusion model abstraction
//!   (drift, diffusion, breeding rate, eigen-structure) and three built-in
//!   models with closed-form or numerically solved principal eigenvalue:
//!   an inward Ornstein-Uhlenbeck motion with quadratic breeding, an
//!   outward OU motion with constant breeding, and Brownian motion with a
//!   compactly supported breeding rate.
//! - [`simulate`]: forward simulation of the particle system under the
//!   original measure, with state-dependent exponential branch clocks and
//!   an optional weighted view for unbounded breeding rates.
//! - [`spine`]: the size-biased (tilted) measure via the spine
//!   construction, Radon-Nikodym weights for the diffusion and Poisson
//!   changes of measure, and the spine decomposition of the additive
//!   martingale.
//! - [`stats`] / [`stattest`]: the additive-martingale functionals, the
//!   law-of-large-numbers ratio, support/mixing condition checks, and the
//!   calibrated statistical tests used by the verification harness.

pub mod builtin;
pub mod model;
pub mod quad;
pub mod simulate;
pub mod spine;
pub mod stats;
pub mod stattest;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The matching equation for the compact-breeding model has no root
    /// bracket below the breeding maximum.
    #[error("no principal eigenvalue bracket in (0, {sup_beta})")]
    NoEigenvalueBracket { sup_beta: f64 },

    #[error("quadrature failed to converge on ({}, {}), error estimate {error:e}", interval.0, interval.1)]
    QuadratureNonConvergent { interval: (f64, f64), error: f64 },

    /// `<phi^p, phi_tilde>` diverges for the requested exponent.
    #[error("not product-p-critical at p = {p} (requires p < {p_sup})")]
    NotProductPCritical { p: f64, p_sup: f64 },

    #[error("empty initial configuration")]
    EmptyInit,

    #[error("initial position outside the domain")]
    InitOutsideDomain,

    #[error("test function pairs to zero against phi_tilde")]
    ZeroPairing,

    #[error("path was sampled under {found}, operation requires {required}")]
    WrongMeasure { required: &'static str, found: &'static str },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
