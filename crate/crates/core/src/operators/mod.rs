//! Black-box operators `T: Image -> Image`.
//!
//! Anything implementing [`ImageOperator`] can be handed to the eigensolver.
//! [`Operator`] is the built-in, named and parameterized family: linear
//! oracle maps, the TV and EPLL-lite denoisers, and the induced wrappers
//! (complement `u − T(u)`, enhance `u + α(u − T(u))`, shifted `u − αT(u)`).
//! Its parameter [`digest`](Operator::digest) identifies exactly which map
//! two parties are using.

pub mod epll;
pub mod gmm;
pub mod tv;

use std::fmt::Write as _;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::image::filter::{gaussian_blur, Boundary};
use crate::image::Image;
use crate::{Error, Result};

pub use gmm::Gmm;

pub trait ImageOperator: Send + Sync {
    fn apply(&self, u: &Image) -> Result<Image>;
}

impl<T: ImageOperator + ?Sized> ImageOperator for &T {
    fn apply(&self, u: &Image) -> Result<Image> {
        (**self).apply(u)
    }
}

/// Adapts a closure into an operator.
pub struct FnOperator<F>(pub F);

impl<F> ImageOperator for FnOperator<F>
where
    F: Fn(&Image) -> Result<Image> + Send + Sync,
{
    fn apply(&self, u: &Image) -> Result<Image> {
        (self.0)(u)
    }
}

/// Dense `n×n` matrix acting on the row-major pixel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOperator {
    n: usize,
    entries: Vec<f64>,
}

impl MatrixOperator {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "matrix operator needs {} entries for n={n}, got {}",
                n * n,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix operator entries".into()));
        }
        Ok(Self { n, entries })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut entries = vec![0.0; n * n];
        for (i, &d) in diag.iter().enumerate() {
            entries[i * n + i] = d;
        }
        Self::new(n, entries)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn apply(&self, u: &Image) -> Result<Image> {
        if u.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: (self.n, 1),
                found: u.dims(),
            });
        }
        let x = u.as_slice();
        let out = self
            .entries
            .chunks_exact(self.n)
            .map(|row| crate::image::dot(row, x))
            .collect();
        Ok(Image::from_raw_unchecked(u.width(), u.height(), out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvParams {
    pub eta: f64,
    pub inner_iters: usize,
    pub tau: f64,
}

impl TvParams {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            inner_iters: tv::DEFAULT_INNER_ITERS,
            tau: tv::DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpllParams {
    pub eta: f64,
    /// Absolute β values, increasing.
    pub betas: Vec<f64>,
    pub patch: usize,
    pub prior: Arc<Gmm>,
}

impl EpllParams {
    /// β schedule `η·{1, 4, 8, 16, 32}`; patch size taken from the prior.
    pub fn with_default_schedule(eta: f64, prior: Arc<Gmm>) -> Result<Self> {
        let patch = (prior.dim() as f64).sqrt().round() as usize;
        if patch * patch != prior.dim() {
            return Err(Error::InvalidParameter(format!(
                "prior dimension {} is not a square patch",
                prior.dim()
            )));
        }
        Ok(Self {
            eta,
            betas: epll::DEFAULT_BETA_FACTORS.iter().map(|b| b * eta).collect(),
            patch,
            prior,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Identity,
    /// `T(u) = c·u`
    Scale(f64),
    Matrix(MatrixOperator),
    GaussianBlur {
        sigma: f64,
        boundary: Boundary,
    },
    Tv(TvParams),
    Epll(EpllParams),
    /// `u − T(u)`
    Complement(Box<Operator>),
    /// `u + α(u − T(u))`
    Enhance {
        inner: Box<Operator>,
        alpha: f64,
    },
    /// `u − αT(u)`, with `α ≤ 1/λ_max` for the caller-declared `λ_max`.
    Shifted {
        inner: Box<Operator>,
        alpha: f64,
        lambda_max: f64,
    },
}

/// Value of a descriptor parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Real(f64),
    Int(i64),
    Text(String),
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Real(v) => write!(f, "{v:.16e}"),
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

impl Operator {
    pub fn tv(eta: f64) -> Result<Self> {
        Self::tv_with(TvParams::new(eta))
    }

    pub fn tv_with(params: TvParams) -> Result<Self> {
        tv::validate(params.eta, params.inner_iters, params.tau)?;
        Ok(Operator::Tv(params))
    }

    pub fn epll(params: EpllParams) -> Result<Self> {
        if !(params.eta > 0.0 && params.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "EPLL eta must be positive, got {}",
                params.eta
            )));
        }
        Ok(Operator::Epll(params))
    }

    pub fn gaussian_blur(sigma: f64, boundary: Boundary) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "blur sigma must be positive, got {sigma}"
            )));
        }
        Ok(Operator::GaussianBlur { sigma, boundary })
    }

    pub fn matrix(m: MatrixOperator) -> Self {
        Operator::Matrix(m)
    }

    pub fn complement(op: Operator) -> Self {
        Operator::Complement(Box::new(op))
    }

    pub fn enhance(op: Operator, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "enhance alpha must be > 0, got {alpha}"
            )));
        }
        Ok(Operator::Enhance {
            inner: Box::new(op),
            alpha,
        })
    }

    pub fn shifted(op: Operator, alpha: f64, lambda_max: f64) -> Result<Self> {
        check_shift(alpha, lambda_max)?;
        Ok(Operator::Shifted {
            inner: Box::new(op),
            alpha,
            lambda_max,
        })
    }

    /// Builds one of the parameter-only operators by name: `identity`,
    /// `scale` (factor), `blur` (sigma, boundary), `tv` (eta, inner_iters,
    /// tau). Matrix and EPLL operators carry data and have their own
    /// constructors.
    pub fn from_name(name: &str, params: &[(&str, f64)], boundary: Option<Boundary>) -> Result<Self> {
        let get = |key: &str| params.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let need =
            |key: &str| get(key).ok_or_else(|| Error::InvalidParameter(format!("operator `{name}` needs `{key}`")));
        match name {
            "identity" => Ok(Operator::Identity),
            "scale" => Ok(Operator::Scale(need("factor")?)),
            "blur" => Self::gaussian_blur(need("sigma")?, boundary.unwrap_or(Boundary::Reflect)),
            "tv" => {
                let mut p = TvParams::new(need("eta")?);
                if let Some(n) = get("inner_iters") {
                    p.inner_iters = n as usize;
                }
                if let Some(t) = get("tau") {
                    p.tau = t;
                }
                Self::tv_with(p)
            }
            other => Err(Error::UnknownOperator(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Operator::Identity => "identity",
            Operator::Scale(_) => "scale",
            Operator::Matrix(_) => "matrix",
            Operator::GaussianBlur { .. } => "blur",
            Operator::Tv(_) => "tv",
            Operator::Epll(_) => "epll",
            Operator::Complement(_) => "complement",
            Operator::Enhance { .. } => "enhance",
            Operator::Shifted { .. } => "shifted",
        }
    }

    /// Flat parameter list of this layer, sorted by key. Wrapped operators
    /// appear under `inner`; bulky data (matrix entries, the GMM) is folded
    /// into a SHA-256 hex fingerprint.
    pub fn parameters(&self) -> Vec<(String, ParamValue)> {
        use ParamValue::*;
        let mut p: Vec<(String, ParamValue)> = match self {
            Operator::Identity => vec![],
            Operator::Scale(c) => vec![("factor".into(), Real(*c))],
            Operator::Matrix(m) => vec![
                ("n".into(), Int(m.n as i64)),
                ("entries".into(), Text(fingerprint_reals(&m.entries))),
            ],
            Operator::GaussianBlur { sigma, boundary } => vec![
                ("sigma".into(), Real(*sigma)),
                ("boundary".into(), Text(boundary.name().into())),
            ],
            Operator::Tv(t) => vec![
                ("eta".into(), Real(t.eta)),
                ("inner_iters".into(), Int(t.inner_iters as i64)),
                ("tau".into(), Real(t.tau)),
            ],
            Operator::Epll(e) => vec![
                ("eta".into(), Real(e.eta)),
                (
                    "betas".into(),
                    Text(
                        e.betas
                            .iter()
                            .map(|b| format!("{b:.16e}"))
                            .collect::<Vec<_>>()
                            .join(","),
                    ),
                ),
                ("patch".into(), Int(e.patch as i64)),
                ("components".into(), Int(e.prior.components() as i64)),
                ("prior".into(), Text(fingerprint_text(&e.prior.to_text()))),
            ],
            Operator::Complement(inner) => vec![("inner".into(), Text(inner.canonical()))],
            Operator::Enhance { inner, alpha } => vec![
                ("alpha".into(), Real(*alpha)),
                ("inner".into(), Text(inner.canonical())),
            ],
            Operator::Shifted {
                inner,
                alpha,
                lambda_max,
            } => vec![
                ("alpha".into(), Real(*alpha)),
                ("lambda_max".into(), Real(*lambda_max)),
                ("inner".into(), Text(inner.canonical())),
            ],
        };
        p.sort_by(|a, b| a.0.cmp(&b.0));
        p
    }

    /// Canonical text form, `name{key=value;...}`.
    pub fn canonical(&self) -> String {
        let mut s = format!("{}{{", self.name());
        for (i, (k, v)) in self.parameters().iter().enumerate() {
            if i > 0 {
                s.push(';');
            }
            write!(s, "{k}={v}").unwrap();
        }
        s.push('}');
        s
    }

    /// 64-bit digest of the canonical form: the first eight bytes of its
    /// SHA-256, big-endian.
    pub fn digest(&self) -> u64 {
        let h = Sha256::digest(self.canonical().as_bytes());
        u64::from_be_bytes(h[..8].try_into().unwrap())
    }

    fn validate(&self) -> Result<()> {
        match self {
            Operator::Identity | Operator::Matrix(_) => Ok(()),
            Operator::Scale(c) if c.is_finite() => Ok(()),
            Operator::Scale(c) => Err(Error::InvalidParameter(format!("scale factor {c}"))),
            Operator::GaussianBlur { sigma, .. } if *sigma > 0.0 && sigma.is_finite() => Ok(()),
            Operator::GaussianBlur { sigma, .. } => Err(Error::InvalidParameter(format!(
                "blur sigma must be positive, got {sigma}"
            ))),
            Operator::Tv(t) => tv::validate(t.eta, t.inner_iters, t.tau),
            Operator::Epll(e) if e.eta > 0.0 => Ok(()),
            Operator::Epll(e) => Err(Error::InvalidParameter(format!("EPLL eta {}", e.eta))),
            Operator::Complement(_) => Ok(()),
            Operator::Enhance { alpha, .. } if *alpha > 0.0 => Ok(()),
            Operator::Enhance { alpha, .. } => Err(Error::InvalidParameter(format!(
                "enhance alpha must be > 0, got {alpha}"
            ))),
            Operator::Shifted { alpha, lambda_max, .. } => check_shift(*alpha, *lambda_max),
        }
    }
}

fn check_shift(alpha: f64, lambda_max: f64) -> Result<()> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "shifted operator needs a positive declared lambda_max, got {lambda_max}"
        )));
    }
    if !(alpha > 0.0 && alpha * lambda_max <= 1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "shifted alpha must lie in (0, 1/lambda_max] = (0, {}], got {alpha}",
            1.0 / lambda_max
        )));
    }
    Ok(())
}

fn fingerprint_reals(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

fn fingerprint_text(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl ImageOperator for Operator {
    fn apply(&self, u: &Image) -> Result<Image> {
        self.validate()?;
        let out = match self {
            Operator::Identity => u.clone(),
            Operator::Scale(c) => u.scaled(*c),
            Operator::Matrix(m) => m.apply(u)?,
            Operator::GaussianBlur { sigma, boundary } => gaussian_blur(u, *sigma, *boundary),
            Operator::Tv(t) => tv::tv_denoise(u, t.eta, t.inner_iters, t.tau)?,
            Operator::Epll(e) => epll::epll_denoise(u, &e.prior, e.eta, &e.betas, e.patch)?,
            Operator::Complement(inner) => {
                let t = inner.apply(u)?;
                u.sub(&t)?
            }
            Operator::Enhance { inner, alpha } => {
                let t = inner.apply(u)?;
                u.zip_map(&t, |a, b| a + alpha * (a - b))?
            }
            Operator::Shifted { inner, alpha, .. } => {
                let t = inner.apply(u)?;
                u.axpy(-alpha, &t)?
            }
        };
        out.ensure_finite(self.name())?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(vals: &[f64]) -> Image {
        Image::from_vector(vals.to_vec()).unwrap()
    }

    fn close(a: &Image, b: &Image, tol: f64) -> bool {
        a.sub(b).unwrap().l2_norm() <= tol * b.l2_norm().max(1.0)
    }

    #[test]
    fn identity_and_diagonal_action() {
        let u = v(&[0.3, -1.0, 2.0]);
        assert_eq!(Operator::Identity.apply(&u).unwrap(), u);
        let d = Operator::matrix(MatrixOperator::diagonal(&[0.9, 0.5]).unwrap());
        assert_eq!(d.apply(&v(&[1.0, 1.0])).unwrap().as_slice(), &[0.9, 0.5]);
        assert!(d.apply(&u).is_err());
    }

    #[test]
    fn complement_examples() {
        let u = v(&[0.3, -1.0, 2.0]);
        let zero = Operator::complement(Operator::Identity).apply(&u).unwrap();
        assert!(zero.is_zero());

        let m = Operator::matrix(MatrixOperator::diagonal(&[0.25, 0.6]).unwrap());
        let e1 = v(&[1.0, 0.0]);
        let out = Operator::complement(m).apply(&e1).unwrap();
        assert_eq!(out.as_slice(), &[0.75, 0.0]);
    }

    #[test]
    fn enhance_and_shift_eigenvalues() {
        let e1 = v(&[1.0, 0.0]);
        let diag = |l: f64| Operator::matrix(MatrixOperator::diagonal(&[l, 0.1]).unwrap());
        let out = Operator::enhance(diag(0.9), 2.0).unwrap().apply(&e1).unwrap();
        assert!((out.as_slice()[0] - 1.2).abs() < 1e-15);
        let out = Operator::enhance(diag(0.0), 1.0).unwrap().apply(&e1).unwrap();
        assert_eq!(out.as_slice()[0], 2.0);

        let out = Operator::shifted(diag(1.8), 0.5, 2.0).unwrap().apply(&e1).unwrap();
        assert!((out.as_slice()[0] - 0.1).abs() < 1e-15);
        let out = Operator::shifted(diag(1.0), 1.0, 1.0).unwrap().apply(&e1).unwrap();
        assert_eq!(out.as_slice()[0], 0.0);
        // Endpoint α = 1/λ_max annihilates the top mode; smaller λ stay positive.
        let shifted = Operator::shifted(
            Operator::matrix(MatrixOperator::diagonal(&[2.5, 1.0, 0.2]).unwrap()),
            0.4,
            2.5,
        )
        .unwrap();
        let out = shifted.apply(&v(&[1.0, 1.0, 1.0])).unwrap();
        assert!(out.as_slice()[0].abs() < 1e-15);
        assert!(out.as_slice()[1] > 0.0 && out.as_slice()[2] > 0.0);

        assert!(Operator::enhance(Operator::Identity, 0.0).is_err());
        assert!(Operator::shifted(Operator::Identity, 0.6, 2.0).is_err());
        assert!(Operator::shifted(Operator::Identity, 0.0, 2.0).is_err());
    }

    #[test]
    fn enhance_of_identity_is_identity() {
        let u = v(&[0.3, -1.0, 2.0, 7.5]);
        for alpha in [0.1, 1.0, 13.0] {
            let out = Operator::enhance(Operator::Identity, alpha).unwrap().apply(&u).unwrap();
            assert!(close(&out, &u, 1e-15));
        }
    }

    #[test]
    fn induced_algebra_on_random_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = Operator::tv(3.0).unwrap();
        for _ in 0..5 {
            let u = Image::from_fn(12, 12, |_, _| rng.random_range(-1.0..1.0));
            let t = base.apply(&u).unwrap();
            let twice = Operator::complement(Operator::complement(base.clone()))
                .apply(&u)
                .unwrap();
            assert!(close(&twice, &t, 1e-14));
            let alpha = 0.7;
            let e = Operator::enhance(base.clone(), alpha).unwrap().apply(&u).unwrap();
            let expect = u.scaled(1.0 + alpha).axpy(-alpha, &t).unwrap();
            assert!(close(&e, &expect, 1e-14));
            let s = Operator::shifted(base.clone(), 0.5, 2.0).unwrap().apply(&u).unwrap();
            assert!(close(&s, &u.axpy(-0.5, &t).unwrap(), 1e-14));
        }
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let c = Image::filled(9, 9, 2.0);
        for b in [Boundary::Periodic, Boundary::Reflect] {
            let out = Operator::gaussian_blur(1.2, b).unwrap().apply(&c).unwrap();
            assert!(out.as_slice().iter().all(|x| (x - 2.0).abs() < 1e-12));
        }
        assert!(Operator::gaussian_blur(0.0, Boundary::Reflect).is_err());
    }

    #[test]
    fn digest_tracks_parameters() {
        let a = Operator::tv(1.0).unwrap();
        let b = Operator::tv(1.0).unwrap();
        let c = Operator::tv(4.0).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_ne!(Operator::complement(a.clone()).digest(), a.digest());
        assert_eq!(
            a.canonical(),
            "tv{eta=1.0000000000000000e0;inner_iters=200;tau=1.2500000000000000e-1}"
        );
    }

    #[test]
    fn named_construction() {
        let op = Operator::from_name("tv", &[("eta", 2.0), ("inner_iters", 50.0)], None).unwrap();
        assert_eq!(
            op,
            Operator::Tv(TvParams {
                eta: 2.0,
                inner_iters: 50,
                tau: 0.125
            })
        );
        assert!(matches!(
            Operator::from_name("wavelet", &[], None),
            Err(Error::UnknownOperator(_))
        ));
        assert!(Operator::from_name("tv", &[("tau", 0.5), ("eta", 1.0)], None).is_err());
        assert!(Operator::from_name("scale", &[], None).is_err());
    }
}
