//! Total-variation denoising by Chambolle's dual projection.
//!
//! Solves `min_u η/2 ||f - u||² + TV(u)` with isotropic discrete TV. The
//! gradient uses forward differences with a zero difference across the last
//! row/column (Neumann boundary); the divergence is its exact negative
//! adjoint, `<∇u, p> = -<u, div p>`.

use crate::image::Image;
use crate::{Error, Result};

/// Largest step for which the dual iteration is proven to converge.
pub const MAX_STABLE_TAU: f64 = 0.125;
pub const DEFAULT_TAU: f64 = 0.125;
pub const DEFAULT_INNER_ITERS: usize = 200;

/// Dual variable of the TV solver: one vector component per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    pub width: usize,
    pub height: usize,
    pub px: Vec<f64>,
    pub py: Vec<f64>,
}

impl DualField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            px: vec![0.0; width * height],
            py: vec![0.0; width * height],
        }
    }

    pub fn inner(&self, other: &DualField) -> f64 {
        crate::image::dot(&self.px, &other.px) + crate::image::dot(&self.py, &other.py)
    }
}

/// Forward-difference gradient with Neumann boundary.
pub fn gradient(u: &Image) -> DualField {
    let (w, h) = u.dims();
    let mut g = DualField::zeros(w, h);
    gradient_into(u.as_slice(), w, h, &mut g.px, &mut g.py);
    g
}

fn gradient_into(u: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let i = row + x;
            gx[i] = if x + 1 < w { u[i + 1] - u[i] } else { 0.0 };
            gy[i] = if y + 1 < h { u[i + w] - u[i] } else { 0.0 };
        }
    }
}

/// Discrete divergence, the negative adjoint of [`gradient`].
pub fn divergence(p: &DualField) -> Image {
    let mut out = vec![0.0; p.width * p.height];
    divergence_into(&p.px, &p.py, p.width, p.height, &mut out);
    Image::from_raw_unchecked(p.width, p.height, out)
}

fn divergence_into(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let i = row + x;
            let dx = if w == 1 {
                0.0
            } else if x == 0 {
                px[i]
            } else if x + 1 == w {
                -px[i - 1]
            } else {
                px[i] - px[i - 1]
            };
            let dy = if h == 1 {
                0.0
            } else if y == 0 {
                py[i]
            } else if y + 1 == h {
                -py[i - w]
            } else {
                py[i] - py[i - w]
            };
            out[i] = dx + dy;
        }
    }
}

/// One application of the ROF denoiser with fidelity weight `eta`.
///
/// Runs exactly `inner_iters` dual steps from `p = 0`:
/// `p ← (p + τ∇(div p − ηf)) / (1 + τ|∇(div p − ηf)|)`, then returns
/// `f − div p / η`.
pub fn tv_denoise(f: &Image, eta: f64, inner_iters: usize, tau: f64) -> Result<Image> {
    validate(eta, inner_iters, tau)?;
    let (w, h) = f.dims();
    let n = w * h;
    let fs = f.as_slice();
    let target: Vec<f64> = fs.iter().map(|v| eta * v).collect();

    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    for _ in 0..inner_iters {
        divergence_into(&px, &py, w, h, &mut div);
        for (d, t) in div.iter_mut().zip(&target) {
            *d -= t;
        }
        gradient_into(&div, w, h, &mut gx, &mut gy);
        for i in 0..n {
            let mag = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
            let denom = 1.0 + tau * mag;
            px[i] = (px[i] + tau * gx[i]) / denom;
            py[i] = (py[i] + tau * gy[i]) / denom;
        }
    }
    divergence_into(&px, &py, w, h, &mut div);
    let out: Vec<f64> = fs.iter().zip(&div).map(|(v, d)| v - d / eta).collect();
    let img = Image::from_raw_unchecked(w, h, out);
    img.ensure_finite("tv_denoise")?;
    Ok(img)
}

pub(crate) fn validate(eta: f64, inner_iters: usize, tau: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("TV eta must be positive, got {eta}")));
    }
    if inner_iters == 0 {
        return Err(Error::InvalidParameter("TV inner_iters must be at least 1".into()));
    }
    if !(tau > 0.0 && tau <= MAX_STABLE_TAU) {
        return Err(Error::InvalidParameter(format!(
            "TV step tau must lie in (0, 1/8], got {tau}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_field(rng: &mut ChaCha8Rng, w: usize, h: usize) -> DualField {
        let mut p = DualField::zeros(w, h);
        p.px.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        p.py.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        p
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (w, h) in [(1, 1), (1, 5), (6, 1), (2, 2), (13, 7), (32, 32)] {
            for _ in 0..10 {
                let u = random_image(&mut rng, w, h);
                let p = random_field(&mut rng, w, h);
                let lhs = gradient(&u).inner(&p);
                let rhs = -u.inner(&divergence(&p)).unwrap();
                assert!((lhs - rhs).abs() < 1e-12, "{w}x{h}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn constant_is_a_fixed_point() {
        let c = Image::filled(16, 16, 0.37);
        let out = tv_denoise(&c, 1.0, 50, DEFAULT_TAU).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn single_inner_step_changes_non_constant_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_image(&mut rng, 8, 8);
        let out = tv_denoise(&f, 1.0, 1, DEFAULT_TAU).unwrap();
        assert!(out.sub(&f).unwrap().l2_norm() > 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let f = Image::zeros(4, 4);
        assert!(tv_denoise(&f, 1.0, 0, 0.1).is_err());
        assert!(tv_denoise(&f, 1.0, 10, 0.2).is_err());
        assert!(tv_denoise(&f, 1.0, 10, 0.0).is_err());
        assert!(tv_denoise(&f, 0.0, 10, 0.1).is_err());
    }

    #[test]
    fn large_fidelity_barely_moves_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_image(&mut rng, 16, 16);
        let out = tv_denoise(&f, 1e6, DEFAULT_INNER_ITERS, DEFAULT_TAU).unwrap();
        let long = tv_denoise(&f, 1e6, 5000, DEFAULT_TAU).unwrap();
        let rel = out.sub(&f).unwrap().l2_norm() / f.l2_norm();
        assert!(rel < 1e-3, "relative change {rel}");
        assert!(long.sub(&f).unwrap().l2_norm() / f.l2_norm() < 1e-3);
    }

    #[test]
    fn preserves_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_image(&mut rng, 12, 9);
        let out = tv_denoise(&f, 0.5, 100, DEFAULT_TAU).unwrap();
        assert!((out.mean() - f.mean()).abs() < 1e-12);
    }

    #[test]
    fn empirically_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let x = random_image(&mut rng, 16, 16);
            let y = x.axpy(0.3, &random_image(&mut rng, 16, 16)).unwrap();
            let tx = tv_denoise(&x, 2.0, DEFAULT_INNER_ITERS, DEFAULT_TAU).unwrap();
            let ty = tv_denoise(&y, 2.0, DEFAULT_INNER_ITERS, DEFAULT_TAU).unwrap();
            let lhs = tx.sub(&ty).unwrap().l2_norm();
            let rhs = x.sub(&y).unwrap().l2_norm();
            assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
        }
    }
}
