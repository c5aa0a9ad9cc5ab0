//! Separable Gaussian convolution.

use super::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Indices wrap around; the convolution diagonalizes in the Fourier basis.
    Periodic,
    /// Half-sample symmetric extension (`d c b a | a b c d | d c b a`).
    Reflect,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::Reflect => "reflect",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "periodic" => Some(Boundary::Periodic),
            "reflect" => Some(Boundary::Reflect),
            _ => None,
        }
    }

    #[inline]
    fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        match self {
            Boundary::Periodic => i.rem_euclid(n) as usize,
            Boundary::Reflect => {
                let m = i.rem_euclid(2 * n);
                (if m < n { m } else { 2 * n - 1 - m }) as usize
            }
        }
    }
}

/// Sampled Gaussian truncated at `ceil(3σ)` taps per side and normalized to
/// unit sum. The returned vector has length `2R + 1`, centered at index `R`.
///
/// `σ = 0` yields the single-tap identity kernel.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be non-negative");
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Convolves rows then columns with the same symmetric 1-D kernel.
pub fn convolve_separable(u: &Image, kernel: &[f64], boundary: Boundary) -> Image {
    let (w, h) = u.dims();
    let r = (kernel.len() / 2) as isize;
    let src = u.as_slice();

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                let xi = boundary.index(x as isize + j as isize - r, w);
                acc += kv * row[xi];
            }
            tmp[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (j, &kv) in kernel.iter().enumerate() {
            let yi = boundary.index(y as isize + j as isize - r, h);
            let src_row = &tmp[yi * w..(yi + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    Image::from_raw_unchecked(w, h, out)
}

pub fn gaussian_blur(u: &Image, sigma: f64, boundary: Boundary) -> Image {
    convolve_separable(u, &gaussian_kernel(sigma), boundary)
}
