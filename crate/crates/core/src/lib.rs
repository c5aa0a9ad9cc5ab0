//! Eigenfunctions of generic, black-box image operators.
//!
//! The crate finds solutions of `T(u) = λu` for operators `T` that are only
//! available as a map `Image -> Image` (denoisers, induced wrappers, plain
//! linear maps). It contains:
//!
//! - [`image`]: the image value type, vector-space primitives, metrics,
//!   degradations and file formats.
//! - [`operators`]: the [`ImageOperator`] abstraction, the built-in TV and
//!   patch-GMM denoisers, linear oracle operators and the induced wrappers
//!   (complement, enhance, shifted).
//! - [`eigensolver`]: generalized power iteration, its zero-mean variant and
//!   deflation by orthogonal projection.
//! - [`diagnostics`]: Rayleigh quotient, angle, pointwise ratio maps,
//!   contraction traces and decay profiles.
//! - [`stego`]: hiding a small message in an eigenfunction and recovering it
//!   by re-running power iterations under the shared operator parameters.
//! - [`experiments`]: degradation robustness and PSNR-gain studies.

// Parameter checks are written as `!(x > 0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod eigensolver;
mod error;
pub mod experiments;
pub mod image;
pub mod operators;
pub mod stego;

pub use error::{Error, Result};
pub use image::Image;
pub use operators::{ImageOperator, Operator};
