//! Online sparse system identification.
//!
//! Joint estimation of system states and basis-function weights with a
//! square-root augmented unscented Kalman filter, combined with an online
//! relevance-learning mechanism: every weight carries a zero-mean Gaussian
//! prior whose variance is adapted by explicit gradient descent on a
//! marginal-likelihood loss, and each prior change is folded back into the
//! Kalman posterior through a pseudo-observation correction. Irrelevant
//! basis functions shrink toward a variance floor; the surviving ones
//! identify the model structure.
//!
//! The crate also ships an augmented EKF and a batch sparse-regression
//! baseline, three benchmark scenarios (wing-rock tracking, input-delay
//! identification, quadrotor thrust/drag structure selection plus a
//! vertical-axis variant), and the `ski` benchmark CLI.
//!
//! Module map:
//! - [`matkernels`]: dense Cholesky/QR/rank-one-update kernels the
//!   square-root filter is built on.
//! - [`model`]: basis libraries, augmented transitions, Gaussian beliefs.
//! - [`filters`]: the Cholesky-form UKF and the dense EKF baseline.
//! - [`ard`]: relevance learning and the posterior refresh.
//! - [`sindy`]: numerical differentiation and coordinate-descent lasso.
//! - [`scenarios`]: plant simulators, controllers, run orchestration,
//!   traces and metrics.
//! - [`cli`]: config schema and the command implementations.

pub mod ard;
pub mod cli;
pub mod filters;
pub mod matkernels;
pub mod model;
pub mod rng;
pub mod scenarios;
pub mod sindy;

pub use matkernels::{LowerTriangular, Mat};
