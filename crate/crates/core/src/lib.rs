// Index loops over the (l, k) cell/user grid touch several parallel
// structures at once; plain ranges read better than zipped enumerates here.
#![allow(clippy::needless_range_loop)]

//! Multi-cell integrated sensing and communication (ISAC) beamforming via
//! fractional programming.
//!
//! A cellular network of `L` base stations serves `K` downlink users per cell
//! while simultaneously using the same transmit beams to illuminate a radar
//! target. Each base station listens for the reflected echo on a co-located
//! receive array and wants the target's direction of arrival (DoA). The design
//! problem is to pick per-user transmit beamformers that trade off
//!
//! * the **weighted sum rate** of the communication users, and
//! * the **Fisher information** each base station collects about the DoA,
//!
//! subject to a per-base-station power budget.
//!
//! The crate provides three iterative solvers for this nonconvex problem, all
//! built on fractional-programming transforms:
//!
//! 1. [`solvers::Algorithm::Conventional`] — classic alternating updates where
//!    the beamformer step solves a regularized least-squares system per base
//!    station (one `N_t × N_t` eigendecomposition each iteration).
//! 2. [`solvers::Algorithm::Nonhomogeneous`] — an inverse-free variant built
//!    on a nonhomogeneous curvature bound; after initialization its updates
//!    use only matrix products, no large solves or decompositions at all.
//! 3. [`solvers::Algorithm::Fast`] — the inverse-free iteration with
//!    Nesterov-style extrapolation between iterates.
//!
//! Alongside the solvers live a synthetic scenario generator
//! ([`scenario`]), objective evaluation ([`metrics`]), the transform
//! building blocks ([`fpcore`]), a grid-search DoA estimator
//! ([`estimator`]), and a reproducible experiment harness ([`harness`]).
//!
//! # Quick start
//!
//! ```
//! use isac_fp::scenario::{self, NetworkConfig};
//! use isac_fp::solvers::{self, Algorithm, SolverOptions};
//! use isac_fp::metrics;
//!
//! // A deliberately tiny network: 2 cells, 2 users each, 8 transmit antennas.
//! let mut cfg = NetworkConfig::small_test();
//! cfg.seed = 7;
//!
//! let (_topo, ch) = scenario::build_instance(&cfg).unwrap();
//!
//! let opts = SolverOptions {
//!     algorithm: Algorithm::Nonhomogeneous,
//!     max_iters: 50,
//!     ..SolverOptions::default()
//! };
//! let out = solvers::run(&ch, &cfg, &opts).unwrap();
//!
//! let obj = metrics::objective(&ch, &out.beamformers, &cfg).unwrap();
//! assert!(obj.weighted_sum > 0.0);
//! ```

pub mod estimator;
pub mod fpcore;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod scenario;
pub mod seeding;
pub mod solvers;

pub mod guide;

#[cfg(test)]
pub(crate) mod testkit;

use thiserror::Error;

/// Unified error type for the crate.
///
/// The distinction between variants matters to the CLI, which maps
/// [`Error::Config`] and [`Error::Domain`] to exit code 2 (bad input) and
/// [`Error::Numerical`] to exit code 3 (a solve failed at runtime).
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, inconsistent, or out of range.
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument violates a function's domain (shape mismatch, negative
    /// noise power, non-Hermitian input, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical procedure failed to produce a finite, valid result
    /// (non-finite objective, bisection that never bracketed, ...).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Filesystem trouble while reading configs or writing results.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// JSON (de)serialization trouble.
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
