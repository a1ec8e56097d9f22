//! Matrix-optimizer toolkit built around momentum orthogonalization.
//!
//! The crate provides:
//!
//! * [`matrix`]: a small row-major dense matrix type, a one-sided Jacobi SVD,
//!   polar factors, norms and quantiles, plus the `ROOTMTX1` dump format.
//! * [`orthogonalize`]: Newton-Schulz iteration with fixed or shape-specific
//!   quintic coefficients, coefficient tables and orthogonalization error metrics.
//! * [`calibration`]: offline fitting of per-shape coefficients against spectral samples.
//! * [`robustify`]: soft-threshold decomposition of momentum into base and outlier parts.
//! * [`optimizers`]: SGD with momentum, AdamW, Muon and ROOT behind one stepping interface.

pub mod calibration;
pub mod matrix;
pub mod optimizers;
pub mod orthogonalize;
pub mod robustify;

pub use matrix::{DenseMatrix, MatrixError};
pub use orthogonalize::{CoefficientTable, NsCoefficients};

