//! Bussgang decomposition of non-linear maps driven by Gaussian inputs.
//!
//! A map `z = U(x)` of a zero-mean Gaussian input is split into a linear
//! term and a distortion uncorrelated with the input, `z = B·x + η`, with
//! `B = C_zx·C_x⁻¹`. The crate estimates `B`, the distortion correlation and
//! the resulting signal-to-distortion ratio and achievable-rate bounds, for
//! scalar maps and for vector maps acting on correlated antenna signals.

pub mod error;
pub mod experiment;
pub mod linalg;
mod mc;
pub mod mimo;
pub mod nonlinearity;
pub mod sampling;
pub mod scalar;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use nonlinearity::{Domain, Nonlinearity, NonlinearitySpec};
pub use num_complex::Complex64;
pub use sampling::{RandomStream, SignalSource};
