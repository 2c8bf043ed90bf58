//! Sparsified covariance estimation for vectors held by distributed nodes.
//!
//! Every node `i` holds a vector `x_i` sampled on the uniform grid `j/d`. The
//! crate provides:
//!
//! * the non-sparsified baselines (sample mean and covariance) in [`grid`],
//! * Bernoulli and fixed-position sparsification in [`sparsify`],
//! * the Random-knots and Random-knots-Spatial estimators together with their
//!   closed-form mean squared errors and spatial scalers in [`random_knots`],
//! * B-spline trajectory smoothing and the B-spline / Bspline-Spatial
//!   estimators in [`bspline`],
//! * AIC-based knot selection in [`selection`],
//! * eigen-analysis of grid covariances (functional PCA) in [`fpca`],
//! * a synthetic data generator and replication harness in [`simbench`],
//! * headerless CSV matrix I/O in [`io`].

#![allow(clippy::needless_range_loop)]

pub mod bspline;
pub mod error;
pub mod fpca;
pub mod grid;
pub mod io;
pub mod random_knots;
pub mod selection;
pub mod simbench;
pub mod sparsify;

pub use error::{Error, Result};
pub use grid::{GridCovariance, GridFunction, NodeMatrix, Provenance};
