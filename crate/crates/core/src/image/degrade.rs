//! Reproducible degradations used by the robustness experiments.
//!
//! Gaussian noise draws from a ChaCha8 stream seeded with
//! `ChaCha8Rng::seed_from_u64(seed)`; normal variates come from
//! `rand_distr::StandardNormal` (ziggurat method), one per pixel in row-major
//! order. Results are bit-identical for the same seed and crate versions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::filter::{gaussian_blur, Boundary};
use super::Image;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Degradation {
    /// Additive i.i.d. `N(0, σ²)` noise.
    GaussianNoise { sigma: f64, seed: u64 },
    /// Normalized truncated Gaussian blur with reflective boundary.
    GaussianBlur { sigma: f64 },
    /// Wrap-around shift: pixel (x, y) moves to (x + dx, y + dy).
    CircularShift { dx: i64, dy: i64 },
    /// Adds `amplitude · message` with the message's top-left at (row, col).
    MessageOverlay {
        amplitude: f64,
        row: usize,
        col: usize,
        message: Image,
    },
}

impl Degradation {
    /// Short label used in reports, e.g. `noise(0.01)`.
    pub fn label(&self) -> String {
        match self {
            Degradation::GaussianNoise { sigma, .. } => format!("noise({sigma})"),
            Degradation::GaussianBlur { sigma } => format!("blur({sigma})"),
            Degradation::CircularShift { dx, dy } => format!("shift({dx},{dy})"),
            Degradation::MessageOverlay { amplitude, .. } => format!("message({amplitude})"),
        }
    }
}

pub fn degrade(u: &Image, kind: &Degradation) -> Result<Image> {
    match kind {
        Degradation::GaussianNoise { sigma, seed } => {
            check_sigma(*sigma)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let data = u
                .as_slice()
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + sigma * z
                })
                .collect();
            Ok(Image::from_raw_unchecked(u.width(), u.height(), data))
        }
        Degradation::GaussianBlur { sigma } => {
            check_sigma(*sigma)?;
            Ok(gaussian_blur(u, *sigma, Boundary::Reflect))
        }
        Degradation::CircularShift { dx, dy } => {
            let (w, h) = u.dims();
            Ok(Image::from_fn(w, h, |x, y| {
                let sx = (x as i64 - dx).rem_euclid(w as i64) as usize;
                let sy = (y as i64 - dy).rem_euclid(h as i64) as usize;
                u.get(sx, sy)
            }))
        }
        Degradation::MessageOverlay {
            amplitude,
            row,
            col,
            message,
        } => {
            if !amplitude.is_finite() {
                return Err(Error::InvalidParameter("overlay amplitude must be finite".into()));
            }
            let placed = u.embed(message, *row, *col)?;
            u.axpy(*amplitude, &placed)
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")))
    }
}
