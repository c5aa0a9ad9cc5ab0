//! Grayscale image value type and the vector-space operations the solvers
//! are built on.
//!
//! Pixels are `f64`, row-major, with a nominal display range of `[0, 1]`.
//! Nothing in this crate clamps intensities; operators and solvers work on
//! the raw real values.

mod degrade;
pub mod filter;
pub mod io;

pub use degrade::{degrade, Degradation};

use crate::{Error, Result};

/// PSNR reported for identical images (zero MSE).
pub const PSNR_IDENTICAL_DB: f64 = 999.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from row-major pixels, rejecting wrong lengths,
    /// empty dimensions and non-finite values.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "{} pixels supplied for a {width}x{height} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image construction".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert!(value.is_finite());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite pixel at ({x}, {y})");
                data.push(v);
            }
        }
        Self { width, height, data }
    }

    /// A 1×n image holding a plain vector; convenient for matrix operators.
    pub fn from_vector(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(n, 1, values)
    }

    /// Internal constructor for data produced by finite arithmetic on valid
    /// images.
    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    /// Checks the all-finite invariant; `context` names the producer in the error.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_raw_unchecked(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Pixelwise combination of two images of equal dimensions.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Image::from_raw_unchecked(self.width, self.height, data))
    }

    pub fn scaled(&self, factor: f64) -> Image {
        self.map(|v| v * factor)
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &Image) -> Result<Image> {
        self.zip_map(other, |a, b| a + alpha * b)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    /// Euclidean norm of the pixel vector.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &Image) -> Result<f64> {
        self.same_dims(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Removes the mean and rescales to `target_norm`.
    ///
    /// Fails for constant images, which have nothing left after centering.
    pub fn center_and_scale(&self, target_norm: f64) -> Result<Image> {
        if !(target_norm > 0.0 && target_norm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "target norm must be positive, got {target_norm}"
            )));
        }
        let centered = self.centered();
        let norm = centered.l2_norm();
        if norm == 0.0 || norm <= 1e-14 * self.l2_norm() {
            return Err(Error::Degenerate("cannot center and scale a constant image".into()));
        }
        let mut out = centered.scaled(target_norm / norm);
        // Rescaling reintroduces a rounding-level mean; one more pass keeps
        // both postconditions at machine precision.
        let residual_mean = out.mean();
        if residual_mean != 0.0 {
            out = out.map(|v| v - residual_mean);
            let n = out.l2_norm();
            out = out.scaled(target_norm / n);
        }
        Ok(out)
    }

    /// The image minus its mean.
    pub fn centered(&self) -> Image {
        let m = self.mean();
        self.map(|v| v - m)
    }

    /// Copies `patch` into a zero image of this size at (`row`, `col`).
    pub(crate) fn embed(&self, patch: &Image, row: usize, col: usize) -> Result<Image> {
        if row + patch.height > self.height || col + patch.width > self.width {
            return Err(Error::InvalidParameter(format!(
                "{}x{} block at (row {row}, col {col}) does not fit in a {}x{} image",
                patch.width, patch.height, self.width, self.height
            )));
        }
        let mut out = vec![0.0; self.len()];
        for y in 0..patch.height {
            let dst = (row + y) * self.width + col;
            out[dst..dst + patch.width].copy_from_slice(&patch.data[y * patch.width..(y + 1) * patch.width]);
        }
        Ok(Image::from_raw_unchecked(self.width, self.height, out))
    }

    /// Extracts the `w`×`h` block whose top-left corner is (`row`, `col`).
    pub fn crop(&self, row: usize, col: usize, w: usize, h: usize) -> Result<Image> {
        if w == 0 || h == 0 || row + h > self.height || col + w > self.width {
            return Err(Error::InvalidParameter(format!(
                "{w}x{h} crop at (row {row}, col {col}) outside a {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for y in row..row + h {
            data.extend_from_slice(&self.data[y * self.width + col..y * self.width + col + w]);
        }
        Ok(Image::from_raw_unchecked(w, h, data))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean squared error between two images of equal dimensions.
pub fn mse(reference: &Image, test: &Image) -> Result<f64> {
    reference.same_dims(test)?;
    let sum: f64 = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// Peak signal-to-noise ratio in dB, `10 log10(peak² / MSE)`.
///
/// Identical images give [`PSNR_IDENTICAL_DB`] instead of infinity.
pub fn psnr(reference: &Image, test: &Image, peak: f64) -> Result<f64> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "PSNR peak must be positive, got {peak}"
        )));
    }
    let err = mse(reference, test)?;
    if err == 0.0 {
        return Ok(PSNR_IDENTICAL_DB);
    }
    Ok(10.0 * (peak * peak / err).log10())
}
