//! Hiding a binary message in an eigenfunction.
//!
//! The sender adds a faint copy of the message to an eigenfunction of a
//! chosen operator. Running power iterations with the same operator
//! parameters pulls the carrier back onto the eigenfunction, and the
//! difference exposes the message. With other parameters the iteration
//! drifts to a different mode and the difference is dominated by that drift.

use crate::eigensolver::{power_iteration_zero_mean, SolverConfig};
use crate::operators::ImageOperator;
use crate::{Error, Image, Result};

pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct StegoPackage {
    pub carrier: Image,
    pub amplitude: f64,
    /// Top-left corner (row, col) of the message block.
    pub placement: (usize, usize),
    /// Message (width, height).
    pub message_dims: (usize, usize),
}

impl StegoPackage {
    /// The message block as `(row, col, width, height)`.
    pub fn region(&self) -> (usize, usize, usize, usize) {
        (
            self.placement.0,
            self.placement.1,
            self.message_dims.0,
            self.message_dims.1,
        )
    }
}

/// `carrier = eigenfunction + amplitude · message` on the block at (`row`, `col`).
pub fn steg_encode(
    eigenfunction: &Image,
    message: &Image,
    amplitude: f64,
    row: usize,
    col: usize,
) -> Result<StegoPackage> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "amplitude must be >= 0, got {amplitude}"
        )));
    }
    if message.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidParameter("message must be binary (0 or 1)".into()));
    }
    let placed = eigenfunction.embed(message, row, col)?;
    Ok(StegoPackage {
        carrier: eigenfunction.axpy(amplitude, &placed)?,
        amplitude,
        placement: (row, col),
        message_dims: message.dims(),
    })
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub recovered: Image,
    /// `recovered − carrier`
    pub difference: Image,
    /// Binary estimate over `region`, or over the whole image without one.
    pub message_estimate: Image,
    pub converged: bool,
    pub iterations_run: usize,
}

/// Re-runs `iters` zero-mean power iterations from the carrier and
/// thresholds `|difference|` at `threshold_frac · max|difference|`.
///
/// `region` is `(row, col, width, height)`. When the difference is below
/// ten times the solver tolerance nothing was embedded and the estimate is
/// all zeros.
pub fn steg_decode<O: ImageOperator + ?Sized>(
    carrier: &Image,
    op: &O,
    iters: usize,
    threshold_frac: f64,
    region: Option<(usize, usize, usize, usize)>,
) -> Result<DecodeResult> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold_frac must lie in (0, 1), got {threshold_frac}"
        )));
    }
    let cfg = SolverConfig::zero_mean().with_max_iters(iters);
    let run = power_iteration_zero_mean(op, carrier, &cfg)?;
    let difference = run.eigenfunction.sub(carrier)?;
    let window = match region {
        Some((row, col, w, h)) => difference.crop(row, col, w, h)?,
        None => difference.clone(),
    };
    let message_estimate = if difference.l2_norm() < 10.0 * run.tol {
        Image::zeros(window.width(), window.height())
    } else {
        let cut = threshold_frac * window.max_abs();
        window.map(|d| if d.abs() >= cut && cut > 0.0 { 1.0 } else { 0.0 })
    };
    Ok(DecodeResult {
        recovered: run.eigenfunction,
        difference,
        message_estimate,
        converged: run.converged,
        iterations_run: run.iterations_run,
    })
}

/// Fraction of pixels where `estimate` and `message` agree.
pub fn message_accuracy(estimate: &Image, message: &Image) -> Result<f64> {
    estimate.same_dims(message)?;
    let hits = estimate
        .as_slice()
        .iter()
        .zip(message.as_slice())
        .filter(|(a, b)| (**a >= 0.5) == (**b >= 0.5))
        .count();
    Ok(hits as f64 / message.len() as f64)
}

/// `size×size` checkerboard with a 1 in the top-left corner.
pub fn checkerboard(size: usize) -> Image {
    Image::from_fn(size, size, |x, y| ((x + y + 1) % 2) as f64)
}
