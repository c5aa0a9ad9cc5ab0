//! Generalized power iteration for black-box operators.
//!
//! Three drivers share one loop:
//!
//! - [`power_iteration`]: `u ← sign(⟨u,Tu⟩)·Tu/||Tu||` from `f/||f||`, every
//!   iterate of unit norm.
//! - [`power_iteration_zero_mean`]: `u ← Tu`, remove the mean, rescale to the
//!   norm of the centered initializer. Keeps denoisers from collapsing onto
//!   the trivial constant eigenfunction.
//! - [`deflated_power_iteration`]: either of the above with every operator
//!   output projected orthogonal to a set of known eigenfunctions.
//!
//! All stop when the step `||u^{k+1} − u^k||` drops below the tolerance or
//! after `max_iters` operator applications.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::{eigen_residual, rayleigh_quotient};
use crate::operators::ImageOperator;
use crate::{Error, Image, Result};

pub const DEFAULT_MAX_ITERS: usize = 20_000;
pub const DEFAULT_PLAIN_TOL: f64 = 1e-9;
/// Zero-mean tolerance, relative to the norm of the centered initializer.
pub const DEFAULT_ZERO_MEAN_REL_TOL: f64 = 1e-7;
/// Post-hoc eigen-residual below which a deflation result counts as a true
/// eigenfunction rather than a pseudo-eigenfunction.
pub const DEFAULT_PSEUDO_TOL: f64 = 1e-6;
const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Plain,
    ZeroMean,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::ZeroMean => "zero-mean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plain" => Some(Mode::Plain),
            "zero-mean" | "zero_mean" => Some(Mode::ZeroMean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Absolute(f64),
    /// Multiplied by the norm of the (centered) initializer.
    RelativeToInitialNorm(f64),
}

impl Tolerance {
    fn resolve(self, initial_norm: f64) -> f64 {
        match self {
            Tolerance::Absolute(t) => t,
            Tolerance::RelativeToInitialNorm(t) => t * initial_norm,
        }
    }

    fn value(self) -> f64 {
        match self {
            Tolerance::Absolute(t) | Tolerance::RelativeToInitialNorm(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol: Tolerance,
    pub mode: Mode,
    pub record_trace: bool,
    /// Record every `trace_stride`-th iteration (the last one is always kept).
    pub trace_stride: usize,
}

impl SolverConfig {
    pub fn plain() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            tol: Tolerance::Absolute(DEFAULT_PLAIN_TOL),
            mode: Mode::Plain,
            record_trace: true,
            trace_stride: 1,
        }
    }

    pub fn zero_mean() -> Self {
        Self {
            mode: Mode::ZeroMean,
            tol: Tolerance::RelativeToInitialNorm(DEFAULT_ZERO_MEAN_REL_TOL),
            ..Self::plain()
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Plain => Self::plain(),
            Mode::ZeroMean => Self::zero_mean(),
        }
    }

    pub fn with_max_iters(mut self, k: usize) -> Self {
        self.max_iters = k;
        self
    }

    pub fn with_tol(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        let t = self.tol.value();
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {t}")));
        }
        if self.trace_stride == 0 {
            return Err(Error::InvalidParameter("trace_stride must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::plain()
    }
}

/// Measurements of one iteration, taken on the iterate `u^k` before the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// Zero-based index `k` of the iterate.
    pub iter: usize,
    pub rayleigh: f64,
    pub cos_angle: f64,
    /// `||u^{k+1} − u^k||`
    pub residual: f64,
    /// `r_k / r_{k−1}`; absent at the first step or after a zero residual.
    pub lipschitz_ratio: Option<f64>,
    /// `||T(u^k)|| / ||u^k||`, which is `||T(u^k)||` for unit iterates.
    pub operator_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
}

impl IterationTrace {
    pub const CSV_HEADER: &'static str = "iter,rayleigh,cos_angle,residual,lipschitz_ratio,operator_norm";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let l = r.lipschitz_ratio.map(|v| format!("{v:.17e}")).unwrap_or_default();
            writeln!(
                s,
                "{},{:.17e},{:.17e},{:.17e},{},{:.17e}",
                r.iter, r.rayleigh, r.cos_angle, r.residual, l, r.operator_norm
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenfunction: Image,
    pub eigenvalue: f64,
    pub converged: bool,
    /// Number of operator applications inside the loop.
    pub iterations_run: usize,
    pub trace: IterationTrace,
    /// Every step residual `||u^{k+1} − u^k||`, regardless of trace stride.
    pub residuals: Vec<f64>,
    /// Tolerance the run was held to, after scaling.
    pub tol: f64,
    /// `||T(u) − R(u)u|| / ||u||` at the returned eigenfunction.
    pub eigen_residual: f64,
    pub rayleigh: f64,
}

/// Plain power iteration with unit-norm iterates.
///
/// The eigenvalue is `sign(⟨u,Tu⟩)·||Tu||` at the returned unit iterate.
pub fn power_iteration<O: ImageOperator + ?Sized>(op: &O, f: &Image, cfg: &SolverConfig) -> Result<EigenResult> {
    let cfg = SolverConfig {
        mode: Mode::Plain,
        ..cfg.clone()
    };
    run(op, f, &cfg, None)
}

/// Mean-removing power iteration; the eigenvalue is the Rayleigh quotient at exit.
pub fn power_iteration_zero_mean<O: ImageOperator + ?Sized>(
    op: &O,
    f: &Image,
    cfg: &SolverConfig,
) -> Result<EigenResult> {
    let cfg = SolverConfig {
        mode: Mode::ZeroMean,
        ..cfg.clone()
    };
    run(op, f, &cfg, None)
}

/// Removes from `f` its components along `basis`.
///
/// With `orthonormal` set the basis is checked (pairwise inner products
/// within 1e-8 of δᵢⱼ) and the single projection `f − Σ⟨f,vᵢ⟩vᵢ` is
/// returned. Otherwise the components are removed one element at a time
/// against the Gram–Schmidt sequence of the basis, which leaves the result
/// orthogonal to every element even when they overlap.
pub fn project_orthogonal(f: &Image, basis: &[Image], orthonormal: bool) -> Result<Image> {
    let ortho = prepare_basis(basis, orthonormal)?;
    let out = single_projection(f, &ortho)?;
    if out.is_zero() || out.l2_norm() <= 1e-13 * f.l2_norm() {
        return Err(Error::ProjectionAnnihilated { iteration: 0 });
    }
    Ok(out)
}

/// Checks or orthonormalizes a deflation basis.
fn prepare_basis(basis: &[Image], orthonormal: bool) -> Result<Vec<Image>> {
    if basis.is_empty() {
        return Err(Error::InvalidParameter("projection basis is empty".into()));
    }
    for v in &basis[1..] {
        basis[0].same_dims(v)?;
    }
    if orthonormal {
        for i in 0..basis.len() {
            for j in i..basis.len() {
                let g = basis[i].inner(&basis[j])?;
                let want = if i == j { 1.0 } else { 0.0 };
                if (g - want).abs() > ORTHONORMAL_TOL {
                    return Err(Error::NotOrthonormal { i, j, value: g });
                }
            }
        }
        return Ok(basis.to_vec());
    }
    let mut out: Vec<Image> = Vec::with_capacity(basis.len());
    for (i, v) in basis.iter().enumerate() {
        let mut w = v.clone();
        for q in &out {
            w = w.axpy(-w.inner(q)?, q)?;
        }
        let n = w.l2_norm();
        if n <= 1e-12 * v.l2_norm() || n == 0.0 {
            return Err(Error::Degenerate(format!(
                "basis element {i} is linearly dependent on the preceding ones"
            )));
        }
        out.push(w.scaled(1.0 / n));
    }
    Ok(out)
}

fn single_projection(f: &Image, ortho: &[Image]) -> Result<Image> {
    let mut out = f.clone();
    for v in ortho {
        f.same_dims(v)?;
        out = out.axpy(-out.inner(v)?, v)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeflationConfig {
    pub solver: SolverConfig,
    /// The basis is trusted to be orthonormal (and checked); otherwise it is
    /// orthonormalized first.
    pub orthonormal: bool,
    /// Extra projection-free iterations after the deflated run, trading
    /// orthogonality for a closer fit to `T(u) = λu`.
    pub refine_iters: usize,
    pub pseudo_tol: f64,
}

impl DeflationConfig {
    pub fn new(solver: SolverConfig) -> Self {
        Self {
            solver,
            orthonormal: true,
            refine_iters: 0,
            pseudo_tol: DEFAULT_PSEUDO_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeflationResult {
    pub result: EigenResult,
    /// The output failed the post-hoc test `eigen_residual ≤ pseudo_tol`.
    pub pseudo: bool,
    /// `max |⟨vᵢ, u⟩| / ||u||` over the orthonormalized basis.
    pub max_overlap: f64,
    /// Set when refinement ran; the result above is then the refined one.
    pub refined: bool,
}

/// Power iteration with every operator output projected orthogonal to `basis`.
///
/// In plain mode the same sign correction as [`power_iteration`] is applied,
/// so eigenpairs with negative eigenvalues converge too. The reported
/// eigenvalue is the Rayleigh quotient at exit.
pub fn deflated_power_iteration<O: ImageOperator + ?Sized>(
    op: &O,
    basis: &[Image],
    f: &Image,
    cfg: &DeflationConfig,
) -> Result<DeflationResult> {
    let ortho = prepare_basis(basis, cfg.orthonormal)?;
    let mut result = run(op, f, &cfg.solver, Some(&ortho))?;
    let mut refined = false;
    if cfg.refine_iters > 0 {
        let refine_cfg = SolverConfig {
            max_iters: cfg.refine_iters,
            ..cfg.solver.clone()
        };
        let mut more = run(op, &result.eigenfunction, &refine_cfg, None)?;
        let offset = result.iterations_run;
        more.trace.records.iter_mut().for_each(|r| r.iter += offset);
        result.trace.records.append(&mut more.trace.records);
        result.residuals.append(&mut more.residuals);
        more.trace = result.trace;
        more.residuals = result.residuals;
        more.iterations_run += offset;
        result = more;
        refined = true;
    }
    let u = &result.eigenfunction;
    let un = u.l2_norm();
    let mut max_overlap: f64 = 0.0;
    for v in &ortho {
        max_overlap = max_overlap.max(v.inner(u)?.abs() / un);
    }
    Ok(DeflationResult {
        pseudo: !(result.eigen_residual <= cfg.pseudo_tol),
        result,
        max_overlap,
        refined,
    })
}

/// `sign(⟨u,Tu⟩)·||Tu|| / ||u||`, plus a flag that is set when `T(u) = 0`
/// (the estimate is then 0).
pub fn estimate_eigenvalue<O: ImageOperator + ?Sized>(op: &O, u: &Image) -> Result<(f64, bool)> {
    let n = u.l2_norm();
    if n == 0.0 {
        return Err(Error::Degenerate(
            "cannot estimate an eigenvalue at the zero image".into(),
        ));
    }
    let tu = op.apply(u)?;
    u.same_dims(&tu)?;
    if tu.is_zero() {
        return Ok((0.0, true));
    }
    let c = u.inner(&tu)?;
    Ok((sign(c) * tu.l2_norm() / n, false))
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Shared loop. `ortho` switches on deflation.
fn run<O: ImageOperator + ?Sized>(
    op: &O,
    f: &Image,
    cfg: &SolverConfig,
    ortho: Option<&[Image]>,
) -> Result<EigenResult> {
    cfg.validate()?;
    f.ensure_finite("initializer")?;
    if f.is_zero() {
        return Err(Error::Degenerate("initializer is the zero image".into()));
    }
    let zero_mean = cfg.mode == Mode::ZeroMean;

    // Normalization step applied to every raw operator output.
    let (target_norm, start) = if zero_mean {
        let f0 = f.centered();
        let norm0 = f0.l2_norm();
        if norm0 <= 1e-14 * f.l2_norm() {
            return Err(Error::Degenerate("initializer is constant".into()));
        }
        (norm0, f0)
    } else {
        (1.0, f.clone())
    };
    let project = |v: Image, iteration: usize| -> Result<Image> {
        match ortho {
            None => Ok(v),
            Some(basis) => {
                let p = single_projection(&v, basis)?;
                if p.is_zero() || p.l2_norm() <= 1e-13 * v.l2_norm() {
                    return Err(Error::ProjectionAnnihilated { iteration });
                }
                Ok(p)
            }
        }
    };
    let rescale = |v: Image, iteration: usize| -> Result<Image> {
        let n = v.l2_norm();
        if n == 0.0 {
            return Err(if zero_mean {
                Error::ConstantIterate { iteration }
            } else {
                Error::ZeroOperatorOutput { iteration }
            });
        }
        Ok(v.scaled(target_norm / n))
    };

    let mut u = rescale(project(start, 0)?, 0)?;
    let tol = cfg.tol.resolve(target_norm);
    let mut residuals = Vec::new();
    let mut trace = IterationTrace::default();
    let mut converged = false;
    let mut prev_residual: Option<f64> = None;

    for k in 0..cfg.max_iters {
        let tu = op.apply(&u)?;
        u.same_dims(&tu)?;
        if tu.is_zero() {
            return Err(Error::ZeroOperatorOutput { iteration: k });
        }
        let corr = u.inner(&tu)?;
        let tu_norm = tu.l2_norm();
        let u_norm = u.l2_norm();

        let next = if zero_mean {
            let centered = tu.centered();
            if centered.l2_norm() <= 1e-14 * tu_norm {
                return Err(Error::ConstantIterate { iteration: k });
            }
            let p = project(centered, k)?;
            center_rescale(p, target_norm, k)?
        } else {
            let v = project(tu.clone(), k)?;
            let c = if ortho.is_some() { u.inner(&v)? } else { corr };
            if c == 0.0 {
                if ortho.is_none() {
                    return Err(Error::ZeroCorrelation { iteration: k });
                }
                rescale(v, k)?
            } else {
                rescale(v, k)?.scaled(sign(c))
            }
        };
        let residual = next.sub(&u)?.l2_norm();
        residuals.push(residual);

        let lipschitz_ratio = match prev_residual {
            Some(p) if p > 0.0 => Some(residual / p),
            _ => None,
        };
        prev_residual = Some(residual);
        let last = residual < tol || k + 1 == cfg.max_iters;
        if cfg.record_trace && (k % cfg.trace_stride == 0 || last) {
            trace.records.push(TraceRecord {
                iter: k,
                rayleigh: corr / (u_norm * u_norm),
                cos_angle: corr / (u_norm * tu_norm),
                residual,
                lipschitz_ratio,
                operator_norm: tu_norm / u_norm,
            });
        }
        u = next;
        if residual < tol {
            converged = true;
            break;
        }
    }

    let tu = op.apply(&u)?;
    let rayleigh = rayleigh_quotient(&u, &tu)?;
    let eigenvalue = if zero_mean || ortho.is_some() {
        rayleigh
    } else {
        let c = u.inner(&tu)?;
        sign(c) * tu.l2_norm() / u.l2_norm()
    };
    let eigen_residual = eigen_residual(&u, &tu)?;
    Ok(EigenResult {
        iterations_run: residuals.len(),
        eigenfunction: u,
        eigenvalue,
        converged,
        trace,
        residuals,
        tol,
        eigen_residual,
        rayleigh,
    })
}

fn center_rescale(v: Image, target_norm: f64, iteration: usize) -> Result<Image> {
    v.center_and_scale(target_norm)
        .map_err(|_| Error::ConstantIterate { iteration })
}
