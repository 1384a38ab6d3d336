//! Gaussian rate-distortion approximations and the AR-ReduNet white-box
//! classifier built on them.
//!
//! - [`spectral`]: covariance estimation, eigendecomposition, PCA.
//! - [`rd`]: exact rate-distortion by reverse water-filling, the `R_alpha`
//!   family, `alpha*` bisection and the error bounds.
//! - [`redunet`]: AR-ReduNet / ReduNet layers, training, inference and the
//!   nearest-subspace classifier.
//! - [`data_io`]: IDX and CSV ingestion, synthetic data, result tables.
//! - [`model_file`]: binary container for trained networks and PCA models.
//! - [`cli`]: command implementations behind the `rdalpha` binary.

pub mod cli;
pub mod data_io;
pub mod error;
pub mod model_file;
pub mod rd;
pub mod redunet;
pub mod spectral;

pub use error::{Error, Result};
