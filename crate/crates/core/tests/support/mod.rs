//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nlpi_core::image::filter::gaussian_kernel;
use nlpi_core::Image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalue, unit eigenvector) pairs sorted by decreasing |λ|.
pub fn jacobi_eigen(n: usize, entries: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let mut a = entries.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| (a[j * n + j], (0..n).map(|i| v[i * n + j]).collect()))
        .collect();
    pairs.sort_by(|x, y| y.0.abs().partial_cmp(&x.0.abs()).unwrap());
    pairs
}

/// Random symmetric matrix with standard normal entries.
pub fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let x: f64 = StandardNormal.sample(&mut rng);
            m[i * n + j] = x;
            m[j * n + i] = x;
        }
    }
    m
}

/// `min(|a − b|, |a + b|)`: distance between unit vectors up to sign.
pub fn sign_agnostic_distance(a: &[f64], b: &[f64]) -> f64 {
    let minus: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let plus: f64 = a.iter().zip(b).map(|(x, y)| (x + y) * (x + y)).sum::<f64>().sqrt();
    minus.min(plus)
}

/// Eigenvalue of a periodic separable Gaussian blur for the 2-D Fourier
/// mode with integer frequencies (kx, ky) on an n×n grid, summed tap by tap.
pub fn periodic_blur_eigenvalue(sigma: f64, n: usize, kx: usize, ky: usize) -> f64 {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let axis = |freq: usize| -> f64 {
        k.iter()
            .enumerate()
            .map(|(i, w)| {
                let t = i as i64 - r;
                w * (2.0 * std::f64::consts::PI * freq as f64 * t as f64 / n as f64).cos()
            })
            .sum()
    };
    axis(kx) * axis(ky)
}

/// The four real Fourier modes of lowest non-zero frequency on an n×n grid,
/// orthonormalized.
pub fn lowest_modes(n: usize) -> Vec<Image> {
    let tau = 2.0 * std::f64::consts::PI / n as f64;
    let raw = [
        Image::from_fn(n, n, |x, _| (tau * x as f64).cos()),
        Image::from_fn(n, n, |x, _| (tau * x as f64).sin()),
        Image::from_fn(n, n, |_, y| (tau * y as f64).cos()),
        Image::from_fn(n, n, |_, y| (tau * y as f64).sin()),
    ];
    raw.iter().map(|m| m.scaled(1.0 / m.l2_norm())).collect()
}

/// Norm of the part of `u` outside span(`modes`) (orthonormal), relative to ||u||.
pub fn out_of_span(u: &Image, modes: &[Image]) -> f64 {
    let mut r = u.clone();
    for m in modes {
        r = r.axpy(-r.inner(m).unwrap(), m).unwrap();
    }
    r.l2_norm() / u.l2_norm()
}

/// Two-sided acceptance band `[lo, hi]` (in successes) of Binomial(n, 1/2)
/// at level `1 − alpha`, from the exact distribution.
pub fn binomial_half_band(n: usize, alpha: f64) -> (usize, usize) {
    let mut pmf = vec![0.0f64; n + 1];
    let mut log_c = 0.0f64;
    for (k, p) in pmf.iter_mut().enumerate() {
        if k > 0 {
            log_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        *p = (log_c - n as f64 * std::f64::consts::LN_2).exp();
    }
    let mut lo = 0;
    let mut tail = 0.0;
    while tail + pmf[lo] <= alpha / 2.0 {
        tail += pmf[lo];
        lo += 1;
    }
    (lo, n - lo)
}

/// Pixel centers inside radius `r` of the image center.
pub fn within_radius(w: usize, h: usize, r: f64) -> Vec<usize> {
    (0..w * h)
        .filter(|&i| {
            let x = (i % w) as f64 + 0.5 - w as f64 / 2.0;
            let y = (i / w) as f64 + 0.5 - h as f64 / 2.0;
            x.hypot(y) <= r
        })
        .collect()
}

/// Least-squares slope of `values` against their index, negated (a decay rate).
pub fn decay_rate(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let xb = (m - 1.0) / 2.0;
    let yb = values.iter().sum::<f64>() / m;
    let num: f64 = values.iter().enumerate().map(|(k, y)| (k as f64 - xb) * (y - yb)).sum();
    let den: f64 = (0..values.len()).map(|k| (k as f64 - xb).powi(2)).sum();
    -num / den
}
