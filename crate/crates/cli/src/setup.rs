//! Builds operators, solver settings and inputs from a [`RunConfig`].

use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use nlpi_core::eigensolver::{Mode, SolverConfig, Tolerance};
use nlpi_core::experiments::{disk, synthetic_scene};
use nlpi_core::image::filter::Boundary;
use nlpi_core::image::io::read_image;
use nlpi_core::operators::epll::{extract_patches, DEFAULT_COMPONENTS, DEFAULT_PATCH};
use nlpi_core::operators::gmm::{fit_gmm_em, EmFit, Gmm, DEFAULT_REG};
use nlpi_core::operators::{EpllParams, MatrixOperator, TvParams};
use nlpi_core::{Image, Operator};

use crate::config::RunConfig;

pub const RUN_KEYS: &[&str] = &["run_dir", "seed"];

pub const OPERATOR_KEYS: &[&str] = &[
    "op",
    "eta",
    "inner_iters",
    "tau",
    "sigma",
    "boundary",
    "factor",
    "diag",
    "matrix",
    "gmm",
    "gmm_components",
    "gmm_iters",
    "patch",
    "induced",
    "alpha",
    "lambda_max",
];

pub const SOLVER_KEYS: &[&str] = &["mode", "max_iters", "tol", "trace_stride"];

pub const INPUT_KEYS: &[&str] = &[
    "input",
    "input_values",
    "synthetic",
    "width",
    "height",
    "radius",
    "amplitude",
];

pub fn seed(cfg: &RunConfig) -> Result<u64> {
    cfg.get_or("seed", 0u64)
}

/// The inner operator named by `op`, wrapped per `induced`.
///
/// An EPLL operator without a `gmm` file fits its prior to `prior_source`.
pub fn operator(cfg: &RunConfig, prior_source: Option<&Image>) -> Result<Operator> {
    let name = cfg.require("op")?;
    let base = match name {
        "identity" => Operator::Identity,
        "scale" => Operator::Scale(cfg.need("factor")?),
        "blur" => {
            let boundary = match cfg.text("boundary") {
                None => Boundary::Reflect,
                Some(b) => Boundary::parse(b).ok_or_else(|| anyhow!("unknown boundary `{b}`"))?,
            };
            Operator::gaussian_blur(cfg.need("sigma")?, boundary)?
        }
        "tv" => {
            let mut p = TvParams::new(cfg.need("eta")?);
            p.inner_iters = cfg.get_or("inner_iters", p.inner_iters)?;
            p.tau = cfg.get_or("tau", p.tau)?;
            Operator::tv_with(p)?
        }
        "matrix" => Operator::matrix(matrix(cfg)?),
        "epll" => {
            let prior = match cfg.path("gmm") {
                Some(p) => Gmm::read(&p).with_context(|| format!("reading prior {}", p.display()))?,
                None => {
                    let src =
                        prior_source.ok_or_else(|| anyhow!("op=epll needs `gmm` or an input to fit a prior to"))?;
                    fit_prior(cfg, std::slice::from_ref(src))?.gmm
                }
            };
            Operator::epll(EpllParams::with_default_schedule(cfg.need("eta")?, Arc::new(prior))?)?
        }
        other => bail!("unknown operator `{other}`"),
    };
    let induced = cfg.text("induced").unwrap_or("none");
    Ok(match induced {
        "none" => base,
        "complement" => Operator::complement(base),
        "enhance" => Operator::enhance(base, cfg.need("alpha")?)?,
        "shifted" => Operator::shifted(base, cfg.need("alpha")?, cfg.need("lambda_max")?)?,
        other => bail!("unknown induced operator `{other}`"),
    })
}

/// Eigenvalue of the inner operator implied by an eigenvalue of the induced one.
pub fn implied_inner_eigenvalue(op: &Operator, lambda: f64) -> Option<f64> {
    match op {
        Operator::Complement(_) => Some(1.0 - lambda),
        Operator::Enhance { alpha, .. } => Some(1.0 - (lambda - 1.0) / alpha),
        Operator::Shifted { alpha, .. } => Some((1.0 - lambda) / alpha),
        _ => None,
    }
}

fn matrix(cfg: &RunConfig) -> Result<MatrixOperator> {
    match (cfg.list("diag")?, cfg.path("matrix")) {
        (Some(d), None) => Ok(MatrixOperator::diagonal(&d)?),
        (None, Some(p)) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading matrix {}", p.display()))?;
            let entries = text
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|e| anyhow!("bad matrix entry `{s}`: {e}")))
                .collect::<Result<Vec<_>>>()?;
            let n = (entries.len() as f64).sqrt().round() as usize;
            if n * n != entries.len() {
                bail!("matrix file has {} entries, not a square count", entries.len());
            }
            Ok(MatrixOperator::new(n, entries)?)
        }
        (Some(_), Some(_)) => bail!("set only one of `diag` and `matrix`"),
        (None, None) => bail!("op=matrix needs `diag` or `matrix`"),
    }
}

pub fn fit_prior(cfg: &RunConfig, images: &[Image]) -> Result<EmFit> {
    let patch = cfg.get_or("patch", DEFAULT_PATCH)?;
    let k = cfg.get_or("gmm_components", DEFAULT_COMPONENTS)?;
    let iters = cfg.get_or("gmm_iters", 30usize)?;
    let mut patches = Vec::new();
    for img in images {
        if img.width() < patch || img.height() < patch {
            bail!(
                "image {}×{} is smaller than the {patch}×{patch} patch",
                img.width(),
                img.height()
            );
        }
        patches.extend(extract_patches(img, patch, true));
    }
    Ok(fit_gmm_em(&patches, k, iters, seed(cfg)?, DEFAULT_REG)?)
}

/// `tol` is absolute in plain mode and relative to the initial norm in
/// zero-mean mode.
pub fn solver(cfg: &RunConfig, default_mode: Mode) -> Result<SolverConfig> {
    let mode = match cfg.text("mode") {
        None => default_mode,
        Some(m) => Mode::parse(m).ok_or_else(|| anyhow!("unknown mode `{m}`"))?,
    };
    let mut s = SolverConfig::for_mode(mode);
    s.max_iters = cfg.get_or("max_iters", s.max_iters)?;
    s.trace_stride = cfg.get_or("trace_stride", s.trace_stride)?;
    if let Some(t) = cfg.get::<f64>("tol")? {
        s.tol = match mode {
            Mode::Plain => Tolerance::Absolute(t),
            Mode::ZeroMean => Tolerance::RelativeToInitialNorm(t),
        };
    }
    s.validate()?;
    Ok(s)
}

/// The starting image: a file, an inline vector, or a generated image.
pub fn input(cfg: &RunConfig) -> Result<Image> {
    let sources = ["input", "input_values", "synthetic"]
        .iter()
        .filter(|k| cfg.has(k))
        .count();
    if sources != 1 {
        bail!("set exactly one of `input`, `input_values`, `synthetic`");
    }
    if let Some(p) = cfg.path("input") {
        return load(&p);
    }
    if let Some(v) = cfg.list("input_values")? {
        return Ok(Image::from_vector(v)?);
    }
    let width = cfg.get_or("width", 64usize)?;
    let height = cfg.get_or("height", width)?;
    match cfg.require("synthetic")? {
        "disk" => {
            let radius = cfg.get_or("radius", width.min(height) as f64 / 4.0)?;
            Ok(disk(width, height, radius, cfg.get_or("amplitude", 1.0)?))
        }
        "scene" => Ok(synthetic_scene(width, height, seed(cfg)?)),
        other => bail!("unknown synthetic image `{other}`"),
    }
}

pub fn load(path: &Path) -> Result<Image> {
    read_image(path).with_context(|| format!("reading image {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text, PathBuf::from(".")).unwrap()
    }

    #[test]
    fn builds_induced_operators() {
        let op = operator(&cfg("op=tv\neta=2\ninduced=complement"), None).unwrap();
        assert_eq!(op.name(), "complement");
        assert_eq!(implied_inner_eigenvalue(&op, 0.75), Some(0.25));
        let op = operator(&cfg("op=scale\nfactor=0.5\ninduced=enhance\nalpha=2"), None).unwrap();
        assert_eq!(implied_inner_eigenvalue(&op, 2.0), Some(0.5));
        assert!(operator(
            &cfg("op=scale\nfactor=0.5\ninduced=shifted\nalpha=2\nlambda_max=1"),
            None
        )
        .is_err());
    }

    #[test]
    fn epll_without_prior_or_input_fails() {
        assert!(operator(&cfg("op=epll\neta=100"), None).is_err());
    }

    #[test]
    fn tolerance_kind_follows_mode() {
        let s = solver(&cfg("mode=zero-mean\ntol=1e-9"), Mode::Plain).unwrap();
        assert_eq!(s.tol, Tolerance::RelativeToInitialNorm(1e-9));
        let s = solver(&cfg("tol=1e-9"), Mode::Plain).unwrap();
        assert_eq!(s.tol, Tolerance::Absolute(1e-9));
        assert!(solver(&cfg("max_iters=0"), Mode::Plain).is_err());
    }

    #[test]
    fn exactly_one_input_source() {
        assert!(input(&cfg("")).is_err());
        assert!(input(&cfg("input_values=1,2\nsynthetic=disk")).is_err());
        assert_eq!(input(&cfg("input_values=1,2,3")).unwrap().len(), 3);
        assert_eq!(input(&cfg("synthetic=disk\nwidth=16")).unwrap().dims(), (16, 16));
    }
}
