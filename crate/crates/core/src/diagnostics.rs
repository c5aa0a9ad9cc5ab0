//! Checks that a pair `(u, T(u))` behaves like an eigenpair.
//!
//! Scalar measures ([`rayleigh_quotient`], [`cos_angle`], [`eigen_residual`]),
//! the pointwise [`ratio_map`], contraction analysis of a residual sequence,
//! and per-pixel decay profiles under repeated application.

use std::fmt::Write as _;
use std::path::Path;

use crate::eigensolver::IterationTrace;
use crate::image::io::{encode_pgm, PgmEncoding};
use crate::operators::ImageOperator;
use crate::{Error, Image, Result};

pub const DEFAULT_MASK_EPS: f64 = 1e-3;
pub const DEFAULT_REL_TOL: f64 = 0.02;
pub const DEFAULT_CONTRACTION_THRESHOLD: f64 = 1e-3;

fn nonzero(u: &Image, what: &str) -> Result<f64> {
    let n = u.l2_norm();
    if n == 0.0 {
        return Err(Error::Degenerate(format!("{what} is the zero image")));
    }
    Ok(n)
}

/// `⟨u, Tu⟩ / ||u||²`
pub fn rayleigh_quotient(u: &Image, tu: &Image) -> Result<f64> {
    nonzero(u, "u")?;
    Ok(u.inner(tu)? / u.inner(u)?)
}

/// `⟨u, Tu⟩ / (||u||·||Tu||)`, clamped to `[−1, 1]`.
pub fn cos_angle(u: &Image, tu: &Image) -> Result<f64> {
    let nu = nonzero(u, "u")?;
    let nt = nonzero(tu, "T(u)")?;
    Ok((u.inner(tu)? / (nu * nt)).clamp(-1.0, 1.0))
}

/// `||Tu − R(u)·u|| / ||u||`, zero exactly at eigenpairs.
pub fn eigen_residual(u: &Image, tu: &Image) -> Result<f64> {
    let n = nonzero(u, "u")?;
    let r = rayleigh_quotient(u, tu)?;
    Ok(tu.axpy(-r, u)?.l2_norm() / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioStats {
    pub mean: f64,
    pub std: f64,
    /// Fraction of masked pixels with `|ratio − mean| ≤ rel_tol·|mean|`.
    pub fraction_within: f64,
    pub masked_pixels: usize,
}

/// Pointwise `T(u)ᵢⱼ / uᵢⱼ` where `|uᵢⱼ|` is not too small.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioMap {
    pub width: usize,
    pub height: usize,
    /// Zero where the mask is off.
    pub ratios: Vec<f64>,
    pub mask: Vec<bool>,
    pub rel_tol: f64,
    pub stats: RatioStats,
}

/// Builds the ratio map; pixels with `|uᵢⱼ| < mask_eps·max|u|` are masked out.
pub fn ratio_map(u: &Image, tu: &Image, mask_eps: f64, rel_tol: f64) -> Result<RatioMap> {
    u.same_dims(tu)?;
    if !(mask_eps > 0.0) || !(rel_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ratio map needs mask_eps > 0 and rel_tol >= 0, got {mask_eps}, {rel_tol}"
        )));
    }
    let floor = mask_eps * u.max_abs();
    let mask: Vec<bool> = u.as_slice().iter().map(|v| v.abs() >= floor && *v != 0.0).collect();
    let ratios: Vec<f64> = u
        .as_slice()
        .iter()
        .zip(tu.as_slice())
        .zip(&mask)
        .map(|((a, b), &m)| if m { b / a } else { 0.0 })
        .collect();
    let selected: Vec<f64> = ratios.iter().zip(&mask).filter(|(_, &m)| m).map(|(r, _)| *r).collect();
    if selected.is_empty() {
        return Err(Error::Degenerate("ratio map mask is empty (u is zero)".into()));
    }
    let count = selected.len() as f64;
    let mean = selected.iter().sum::<f64>() / count;
    let std = (selected.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / count).sqrt();
    let within = selected
        .iter()
        .filter(|r| (*r - mean).abs() <= rel_tol * mean.abs())
        .count() as f64;
    Ok(RatioMap {
        width: u.width(),
        height: u.height(),
        ratios,
        mask,
        rel_tol,
        stats: RatioStats {
            mean,
            std,
            fraction_within: within / count,
            masked_pixels: selected.len(),
        },
    })
}

impl RatioMap {
    /// `x,y,ratio,masked` per pixel, row-major.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,ratio,masked\n");
        for (i, (r, m)) in self.ratios.iter().zip(&self.mask).enumerate() {
            writeln!(s, "{},{},{:.17e},{}", i % self.width, i / self.width, r, u8::from(*m)).unwrap();
        }
        s
    }

    /// Grayscale rendering: masked ratios stretched over their range, pixels
    /// outside the mask drawn at the low end.
    pub fn to_pgm(&self) -> Vec<u8> {
        let lo = self
            .ratios
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .fold(f64::INFINITY, |a, (r, _)| a.min(*r));
        let data = self
            .ratios
            .iter()
            .zip(&self.mask)
            .map(|(r, &m)| if m { *r } else { lo })
            .collect();
        let img = Image::from_raw_unchecked(self.width, self.height, data);
        encode_pgm(&img, PgmEncoding::Binary)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }
}

/// Step ratios `L_k = r_k / r_{k−1}` of a residual sequence and their running product.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionTrace {
    /// One entry per `k ≥ 1`; `None` where `r_{k−1} = 0`.
    pub ratios: Vec<Option<f64>>,
    /// Running product of the defined ratios; equals `r_k / r_0` when no
    /// residual vanished.
    pub cumulative: Vec<f64>,
    pub weak_condition_met: bool,
    pub threshold: f64,
}

impl ContractionTrace {
    /// First index into `ratios` where the running product is below the threshold.
    pub fn first_below_threshold(&self) -> Option<usize> {
        self.cumulative.iter().position(|&p| p < self.threshold)
    }
}

pub fn contraction_trace(residuals: &[f64], threshold: f64) -> Result<ContractionTrace> {
    if residuals.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "contraction analysis needs at least 3 residuals, got {}",
            residuals.len()
        )));
    }
    let mut ratios = Vec::with_capacity(residuals.len() - 1);
    let mut cumulative = Vec::with_capacity(residuals.len() - 1);
    let mut prod = 1.0;
    for w in residuals.windows(2) {
        let l = if w[0] != 0.0 { Some(w[1] / w[0]) } else { None };
        if let Some(l) = l {
            prod *= l;
        }
        ratios.push(l);
        cumulative.push(prod);
    }
    Ok(ContractionTrace {
        weak_condition_met: prod < threshold,
        ratios,
        cumulative,
        threshold,
    })
}

/// Pixel values along `u, T(u), T(T(u)), …` with no normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfiles {
    pub width: usize,
    pub height: usize,
    /// `steps[k]` is `Tᵏ(u)`; there are `n + 1` of them.
    pub steps: Vec<Image>,
    /// Leading entries dropped from the truncated variant.
    pub truncate: usize,
}

impl DecayProfiles {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Raw trajectory of pixel `i` (row-major index).
    pub fn raw(&self, i: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.as_slice()[i]).collect()
    }

    /// Trajectory divided by its first entry; `None` if that entry is zero.
    pub fn normalized(&self, i: usize) -> Option<Vec<f64>> {
        normalize(&self.raw(i))
    }

    /// Trajectory with the first `truncate` entries dropped, then divided by
    /// its new first entry.
    pub fn truncated(&self, i: usize) -> Option<Vec<f64>> {
        normalize(&self.raw(i)[self.truncate..])
    }

    /// Long format: `x,y,step,raw,normalized,truncated`; undefined values are
    /// left empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,step,raw,normalized,truncated\n");
        for i in 0..self.pixels() {
            let raw = self.raw(i);
            let norm = self.normalized(i);
            let trunc = self.truncated(i);
            for (k, r) in raw.iter().enumerate() {
                let n = norm.as_ref().map(|v| format!("{:.17e}", v[k])).unwrap_or_default();
                let t = match (&trunc, k.checked_sub(self.truncate)) {
                    (Some(v), Some(j)) => format!("{:.17e}", v[j]),
                    _ => String::new(),
                };
                writeln!(s, "{},{},{k},{r:.17e},{n},{t}", i % self.width, i / self.width).unwrap();
            }
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let first = *v.first()?;
    (first != 0.0).then(|| v.iter().map(|x| x / first).collect())
}

/// Applies `op` `n` times to `u`, keeping every intermediate image.
pub fn decay_profiles<O: ImageOperator + ?Sized>(
    op: &O,
    u: &Image,
    n: usize,
    truncate: usize,
) -> Result<DecayProfiles> {
    if n == 0 {
        return Err(Error::InvalidParameter("decay profiles need n >= 1".into()));
    }
    if truncate > n {
        return Err(Error::InvalidParameter(format!(
            "cannot truncate {truncate} of {} entries",
            n + 1
        )));
    }
    let mut steps = Vec::with_capacity(n + 1);
    steps.push(u.clone());
    for _ in 0..n {
        let next = op.apply(steps.last().unwrap())?;
        u.same_dims(&next)?;
        steps.push(next);
    }
    Ok(DecayProfiles {
        width: u.width(),
        height: u.height(),
        steps,
        truncate,
    })
}

/// Where the recorded Rayleigh quotient went down between recorded steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub monotone: bool,
    pub violations: usize,
    pub largest_drop: f64,
}

/// Soft check of the observation that the Rayleigh quotient increases along
/// a run. Drops up to `slack` are ignored.
pub fn rayleigh_monotonicity(trace: &IterationTrace, slack: f64) -> MonotoneReport {
    let mut violations = 0;
    let mut largest_drop: f64 = 0.0;
    for w in trace.records.windows(2) {
        let drop = w[0].rayleigh - w[1].rayleigh;
        if drop > slack {
            violations += 1;
        }
        largest_drop = largest_drop.max(drop);
    }
    MonotoneReport {
        monotone: violations == 0,
        violations,
        largest_drop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::filter::Boundary;
    use crate::operators::{MatrixOperator, Operator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn v(vals: &[f64]) -> Image {
        Image::from_vector(vals.to_vec()).unwrap()
    }

    #[test]
    fn rayleigh_examples() {
        let u = v(&[1.0, 2.0]);
        assert_eq!(rayleigh_quotient(&u, &u.scaled(0.5)).unwrap(), 0.5);
        assert_eq!(rayleigh_quotient(&u, &v(&[2.0, -1.0])).unwrap(), 0.0);
        assert_eq!(rayleigh_quotient(&u, &u.scaled(-1.0)).unwrap(), -1.0);
        assert!(rayleigh_quotient(&v(&[0.0, 0.0]), &u).is_err());
    }

    #[test]
    fn cos_angle_examples() {
        let u = v(&[1.0, 2.0]);
        assert!((cos_angle(&u, &u.scaled(2.0)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cos_angle(&u, &v(&[2.0, -1.0])).unwrap(), 0.0);
        assert!((cos_angle(&u, &u.scaled(-3.0)).unwrap() + 1.0).abs() < 1e-15);
        assert!(cos_angle(&u, &v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn eigen_residual_examples() {
        let u = v(&[0.3, -1.0, 4.0]);
        assert!(eigen_residual(&u, &u.scaled(0.7)).unwrap() < 1e-14);
        assert!((eigen_residual(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ratio_map_of_exact_eigenpair() {
        let u = Image::from_fn(6, 5, |x, y| (x as f64 - 2.5) * (y as f64 + 1.0));
        let m = ratio_map(&u, &u.scaled(0.7), DEFAULT_MASK_EPS, DEFAULT_REL_TOL).unwrap();
        assert!((m.stats.mean - 0.7).abs() < 1e-15);
        assert!(m.stats.std < 1e-12);
        assert_eq!(m.stats.fraction_within, 1.0);
    }

    #[test]
    fn ratio_map_masks_zero_pixels() {
        let u = v(&[0.0, 1.0, 2.0, 0.0]);
        let tu = v(&[5.0, 0.5, 1.0, -3.0]);
        let m = ratio_map(&u, &tu, DEFAULT_MASK_EPS, DEFAULT_REL_TOL).unwrap();
        assert_eq!(m.mask, vec![false, true, true, false]);
        assert_eq!(m.stats.masked_pixels, 2);
        assert_eq!(m.stats.mean, 0.5);
        assert_eq!(m.stats.fraction_within, 1.0);
        assert!(ratio_map(&v(&[0.0, 0.0]), &v(&[1.0, 1.0]), 1e-3, 0.02).is_err());
        assert!(m.to_csv().lines().count() == 5);
        assert!(m.to_pgm().starts_with(b"P5"));
    }

    #[test]
    fn ratio_map_of_blurred_noise_is_scattered() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = Image::from_fn(16, 16, |_, _| StandardNormal.sample(&mut rng));
        let tu = Operator::gaussian_blur(1.0, Boundary::Periodic)
            .unwrap()
            .apply(&u)
            .unwrap();
        let m = ratio_map(&u, &tu, DEFAULT_MASK_EPS, DEFAULT_REL_TOL).unwrap();
        assert!(m.stats.fraction_within < 0.5, "{}", m.stats.fraction_within);
    }

    #[test]
    fn contraction_examples() {
        let c = contraction_trace(&[0.2; 6], DEFAULT_CONTRACTION_THRESHOLD).unwrap();
        assert!(c.ratios.iter().all(|r| *r == Some(1.0)));
        assert_eq!(*c.cumulative.last().unwrap(), 1.0);
        assert!(!c.weak_condition_met);

        let geo: Vec<f64> = (0..20).map(|k| 0.5f64.powi(k)).collect();
        let c = contraction_trace(&geo, DEFAULT_CONTRACTION_THRESHOLD).unwrap();
        assert!(c.ratios.iter().all(|r| *r == Some(0.5)));
        for (k, p) in c.cumulative.iter().enumerate() {
            assert_eq!(*p, 0.5f64.powi(k as i32 + 1));
        }
        assert!(c.weak_condition_met);
        assert_eq!(c.first_below_threshold(), Some(9));

        let c = contraction_trace(&[1.0, 0.0, 0.0, 0.5], 1e-3).unwrap();
        assert_eq!(c.ratios, vec![Some(0.0), None, None]);
        assert!(contraction_trace(&[1.0, 0.5], 1e-3).is_err());
    }

    #[test]
    fn two_mode_linear_iteration_contracts_at_five_ninths() {
        let op = Operator::matrix(MatrixOperator::diagonal(&[0.9, 0.5]).unwrap());
        let cfg = crate::eigensolver::SolverConfig::plain().with_max_iters(60);
        let r = crate::eigensolver::power_iteration(&op, &v(&[1.0, 1.0]), &cfg).unwrap();
        let c = contraction_trace(&r.residuals, DEFAULT_CONTRACTION_THRESHOLD).unwrap();
        let last = c.ratios.iter().rev().flatten().nth(3).unwrap();
        assert!((last - 5.0 / 9.0).abs() < 1e-3, "{last}");
        assert!(c.weak_condition_met);
    }

    #[test]
    fn decay_of_linear_eigenfunction_is_geometric() {
        let u = Image::from_fn(3, 2, |x, y| x as f64 - y as f64 + 0.5);
        let d = decay_profiles(&Operator::Scale(0.8), &u, 10, 2).unwrap();
        assert_eq!(d.steps.len(), 11);
        for i in 0..d.pixels() {
            let raw = d.raw(i);
            for (k, r) in raw.iter().enumerate() {
                assert!((r - u.as_slice()[i] * 0.8f64.powi(k as i32)).abs() < 1e-12);
            }
            let n = d.normalized(i).unwrap();
            for (k, r) in n.iter().enumerate() {
                assert!((r - 0.8f64.powi(k as i32)).abs() < 1e-12);
            }
            assert_eq!(d.truncated(i).unwrap().len(), 9);
        }
        let csv = d.to_csv();
        assert_eq!(csv.lines().count(), 1 + 6 * 11);
    }

    #[test]
    fn decay_of_constant_under_blur_is_flat() {
        let u = Image::filled(8, 8, 0.4);
        let op = Operator::gaussian_blur(1.5, Boundary::Reflect).unwrap();
        let d = decay_profiles(&op, &u, 5, 0).unwrap();
        for s in &d.steps {
            assert!(s.as_slice().iter().all(|v| (v - 0.4).abs() < 1e-12));
        }
        assert!(decay_profiles(&op, &u, 0, 0).is_err());
    }

    #[test]
    fn monotonicity_flag() {
        use crate::eigensolver::TraceRecord;
        let rec = |iter, rayleigh| TraceRecord {
            iter,
            rayleigh,
            cos_angle: 1.0,
            residual: 0.0,
            lipschitz_ratio: None,
            operator_norm: 1.0,
        };
        let t = IterationTrace {
            records: vec![rec(0, 0.5), rec(1, 0.6), rec(2, 0.55), rec(3, 0.7)],
        };
        let r = rayleigh_monotonicity(&t, 0.0);
        assert!(!r.monotone);
        assert_eq!(r.violations, 1);
        assert!((r.largest_drop - 0.05).abs() < 1e-12);
        assert!(rayleigh_monotonicity(&t, 0.1).monotone);
    }
}
