//! Antenna-layout-aware (ALA) spatial covariance estimation for massive MIMO,
//! together with the multi-cell simulation chain used to evaluate it against
//! the viaQ shrinkage baseline.
//!
//! Module map:
//!
//! - [`geometry`]: ULA / UPA / generic lattice layouts and the partition of
//!   antenna pairs into translation-equivalence classes.
//! - [`corrmodel`]: exponential correlation model, Kronecker covariances and
//!   the aggregate observation covariance Q.
//! - [`sampling`]: correlated Gaussian channels, two-slot pilot observations
//!   and sample covariance matrices.
//! - [`estimators`]: viaQ shrinkage, ALA averaging and the estimator dispatch.
//! - [`mmse`]: MMSE channel estimation, estimate covariance Φ, normalized MSE.
//! - [`downlink`]: leakage-minimizing precoder and hardening-bound SINR.
//! - [`scenario`]: the seven-cell evaluation network and per-drop statistics.
//! - [`harness`]: sweeps, κ table and CSV output.

pub mod corrmodel;
pub mod downlink;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod matrix;
pub mod mmse;
pub mod rng;
pub mod sampling;
pub mod scenario;

pub use error::{CovError, Result};
pub use faer::c64;
pub use matrix::CovarianceMatrix;
