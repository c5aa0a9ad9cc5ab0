//! Degradation-robustness and PSNR-gain studies, plus the synthetic inputs
//! they run on.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::eigen_residual;
use crate::eigensolver::{power_iteration, power_iteration_zero_mean, Mode, SolverConfig};
use crate::image::{degrade, psnr, Degradation};
use crate::operators::ImageOperator;
use crate::{Error, Image, Result};

/// Peak used for PSNR against `reference`: its dynamic range.
pub fn dynamic_range(reference: &Image) -> f64 {
    let (lo, hi) = reference.min_max();
    hi - lo
}

#[derive(Debug, Clone)]
pub struct RobustnessRow {
    pub label: String,
    pub degraded: Image,
    pub corrected: Image,
    /// `corrected − degraded`
    pub difference: Image,
    pub pre_residual: f64,
    pub post_residual: f64,
    pub psnr_degraded: f64,
    pub psnr_corrected: f64,
    pub converged: bool,
}

/// Degrades `eigenfunction` each way listed, then runs power iterations
/// (`cfg.max_iters` of them at most) from the degraded image.
pub fn robustness<O: ImageOperator + ?Sized>(
    op: &O,
    eigenfunction: &Image,
    degradations: &[Degradation],
    cfg: &SolverConfig,
) -> Result<Vec<RobustnessRow>> {
    let peak = dynamic_range(eigenfunction);
    degradations
        .iter()
        .map(|d| {
            let degraded = degrade(eigenfunction, d)?;
            let pre_residual = eigen_residual(&degraded, &op.apply(&degraded)?)?;
            let run = match cfg.mode {
                Mode::Plain => power_iteration(op, &degraded, cfg)?,
                Mode::ZeroMean => power_iteration_zero_mean(op, &degraded, cfg)?,
            };
            let corrected = run.eigenfunction;
            Ok(RobustnessRow {
                label: d.label(),
                difference: corrected.sub(&degraded)?,
                pre_residual,
                post_residual: run.eigen_residual,
                psnr_degraded: psnr(eigenfunction, &degraded, peak)?,
                psnr_corrected: psnr(eigenfunction, &corrected, peak)?,
                converged: run.converged,
                degraded,
                corrected,
            })
        })
        .collect()
}

pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut s = String::from("degradation,pre_residual,post_residual,psnr_degraded,psnr_corrected,converged\n");
    for r in rows {
        writeln!(
            s,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            r.label, r.pre_residual, r.post_residual, r.psnr_degraded, r.psnr_corrected, r.converged
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsnrGainRow {
    pub label: String,
    pub noise_sigma: f64,
    pub psnr_noisy: f64,
    pub psnr_denoised: f64,
    /// `psnr_denoised − psnr_noisy`
    pub gain: f64,
}

/// Adds white Gaussian noise of variance `var(image)/ratio` to each image,
/// applies `op` once and reports the PSNR change against the clean image.
pub fn psnr_gain<O: ImageOperator + ?Sized>(
    op: &O,
    images: &[(String, Image)],
    ratio: f64,
    seed: u64,
) -> Result<Vec<PsnrGainRow>> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "variance ratio must be positive, got {ratio}"
        )));
    }
    images
        .iter()
        .map(|(label, clean)| {
            let sigma = (clean.variance() / ratio).sqrt();
            let noisy = degrade(clean, &Degradation::GaussianNoise { sigma, seed })?;
            let denoised = op.apply(&noisy)?;
            let peak = dynamic_range(clean);
            let psnr_noisy = psnr(clean, &noisy, peak)?;
            let psnr_denoised = psnr(clean, &denoised, peak)?;
            Ok(PsnrGainRow {
                label: label.clone(),
                noise_sigma: sigma,
                psnr_noisy,
                psnr_denoised,
                gain: psnr_denoised - psnr_noisy,
            })
        })
        .collect()
}

pub fn psnr_gain_csv(rows: &[PsnrGainRow]) -> String {
    let mut s = String::from("image,noise_sigma,psnr_noisy,psnr_denoised,gain_db\n");
    for r in rows {
        writeln!(
            s,
            "{},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.label, r.noise_sigma, r.psnr_noisy, r.psnr_denoised, r.gain
        )
        .unwrap();
    }
    s
}

/// Centered disk of the given radius at height `amplitude` on a zero
/// background, with pixel values equal to the covered area fraction
/// (4×4 supersampling) along the rim.
pub fn disk(width: usize, height: usize, radius: f64, amplitude: f64) -> Image {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    const S: usize = 4;
    Image::from_fn(width, height, |x, y| {
        let mut hits = 0;
        for sy in 0..S {
            for sx in 0..S {
                let px = x as f64 + (sx as f64 + 0.5) / S as f64;
                let py = y as f64 + (sy as f64 + 0.5) / S as f64;
                if (px - cx).hypot(py - cy) < radius {
                    hits += 1;
                }
            }
        }
        amplitude * hits as f64 / (S * S) as f64
    })
}

/// Piecewise-smooth test scene with fine texture, values roughly in `[0, 1]`:
/// a shaded background, a few flat and shaded shapes, and a low-amplitude
/// random texture. Stands in for a natural photograph.
pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let texture: Vec<f64> = (0..width * height).map(|_| rng.random_range(-1.0..1.0)).collect();
    let shapes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.1..0.9) * w,
                rng.random_range(0.1..0.9) * h,
                rng.random_range(0.08..0.25) * w.min(h),
                rng.random_range(-0.35..0.35),
            )
        })
        .collect();
    Image::from_fn(width, height, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let mut v = 0.35 + 0.25 * fx / w + 0.1 * (fy / h * std::f64::consts::PI).sin();
        for (i, &(cx, cy, r, a)) in shapes.iter().enumerate() {
            let inside = if i % 2 == 0 {
                (fx - cx).hypot(fy - cy) < r
            } else {
                (fx - cx).abs() < r && (fy - cy).abs() < 0.6 * r
            };
            if inside {
                v += a;
            }
        }
        let stripes = 0.06 * ((fx + 0.5 * fy) * 0.9).sin() * ((fy / h) > 0.6) as u8 as f64;
        v + stripes + 0.04 * texture[y * width + x]
    })
}
