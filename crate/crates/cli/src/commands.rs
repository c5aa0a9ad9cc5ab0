//! One function per subcommand.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use nlpi_core::diagnostics::{
    contraction_trace, cos_angle, decay_profiles, eigen_residual, ratio_map, rayleigh_monotonicity, rayleigh_quotient,
    RatioMap, DEFAULT_CONTRACTION_THRESHOLD, DEFAULT_MASK_EPS, DEFAULT_REL_TOL,
};
use nlpi_core::eigensolver::{
    deflated_power_iteration, estimate_eigenvalue, power_iteration, power_iteration_zero_mean, DeflationConfig,
    EigenResult, Mode, DEFAULT_PSEUDO_TOL,
};
use nlpi_core::experiments::{psnr_gain, psnr_gain_csv, robustness, robustness_csv};
use nlpi_core::image::io::{binarize_mid_range, RAW_MAGIC};
use nlpi_core::image::Degradation;
use nlpi_core::stego::{checkerboard, message_accuracy, steg_decode, steg_encode, DEFAULT_THRESHOLD_FRAC};
use nlpi_core::{Image, ImageOperator, Operator};

use crate::config::RunConfig;
use crate::output::Run;
use crate::setup::{self, INPUT_KEYS, OPERATOR_KEYS, RUN_KEYS, SOLVER_KEYS};

const RATIO_KEYS: &[&str] = &["mask_eps", "ratio_tol"];

fn allow(cfg: &RunConfig, groups: &[&[&str]]) -> Result<()> {
    let keys: BTreeSet<&str> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    cfg.check_keys(&keys)
}

fn describe(run: &mut Run, op: &Operator) {
    run.note("operator", op.canonical());
    run.note("digest", format!("{:016x}", op.digest()));
}

fn ratio(cfg: &RunConfig, u: &Image, tu: &Image) -> Result<RatioMap> {
    let mask_eps = cfg.get_or("mask_eps", DEFAULT_MASK_EPS)?;
    let rel_tol = cfg.get_or("ratio_tol", DEFAULT_REL_TOL)?;
    Ok(ratio_map(u, tu, mask_eps, rel_tol)?)
}

fn write_ratio(run: &mut Run, map: &RatioMap) -> Result<()> {
    run.file("ratio_map.csv", map.to_csv())?;
    run.file("ratio_map.pgm", map.to_pgm())?;
    run.number("ratio_mean", map.stats.mean);
    run.number("ratio_std", map.stats.std);
    run.number("ratio_fraction", map.stats.fraction_within);
    Ok(())
}

fn solve<O: ImageOperator + ?Sized>(
    op: &O,
    f: &Image,
    cfg: &nlpi_core::eigensolver::SolverConfig,
) -> Result<EigenResult> {
    Ok(match cfg.mode {
        Mode::Plain => power_iteration(op, f, cfg)?,
        Mode::ZeroMean => power_iteration_zero_mean(op, f, cfg)?,
    })
}

fn note_result(run: &mut Run, r: &EigenResult) {
    run.number("lambda", r.eigenvalue);
    run.note("converged", r.converged);
    run.note("iterations", r.iterations_run);
    run.number("eigen_residual", r.eigen_residual);
    run.number("rayleigh", r.rayleigh);
    run.number("tol", r.tol);
}

pub fn eigen(cfg: &RunConfig) -> Result<()> {
    allow(cfg, &[RUN_KEYS, OPERATOR_KEYS, SOLVER_KEYS, INPUT_KEYS, RATIO_KEYS])?;
    let f = setup::input(cfg)?;
    let op = setup::operator(cfg, Some(&f))?;
    let solver = setup::solver(cfg, Mode::Plain)?;
    let mut run = Run::create(cfg, "eigen")?;
    describe(&mut run, &op);
    run.note("mode", solver.mode.name());

    let r = solve(&op, &f, &solver)?;
    run.image("eigenfunction", &r.eigenfunction)?;
    r.trace.write_csv(run.dir().join("trace.csv"))?;
    note_result(&mut run, &r);
    if let Some(inner) = setup::implied_inner_eigenvalue(&op, r.eigenvalue) {
        run.number("implied_inner_lambda", inner);
    }
    let tu = op.apply(&r.eigenfunction)?;
    run.number("cos_angle", cos_angle(&r.eigenfunction, &tu)?);
    write_ratio(&mut run, &ratio(cfg, &r.eigenfunction, &tu)?)?;
    run.note("rayleigh_monotone", rayleigh_monotonicity(&r.trace, 1e-12).monotone);
    if r.residuals.len() >= 3 {
        let c = contraction_trace(&r.residuals, DEFAULT_CONTRACTION_THRESHOLD)?;
        run.note("weak_contraction", c.weak_condition_met);
    }
    run.finish()
}

pub fn deflate(cfg: &RunConfig) -> Result<()> {
    allow(
        cfg,
        &[
            RUN_KEYS,
            OPERATOR_KEYS,
            SOLVER_KEYS,
            INPUT_KEYS,
            &["basis", "non_orthonormal", "refine_iters", "pseudo_tol"],
        ],
    )?;
    let f = setup::input(cfg)?;
    let op = setup::operator(cfg, Some(&f))?;
    let mut dcfg = DeflationConfig::new(setup::solver(cfg, Mode::Plain)?);
    dcfg.orthonormal = !cfg.get_or("non_orthonormal", false)?;
    dcfg.refine_iters = cfg.get_or("refine_iters", 0usize)?;
    dcfg.pseudo_tol = cfg.get_or("pseudo_tol", DEFAULT_PSEUDO_TOL)?;
    let paths = cfg.paths("basis");
    if paths.is_empty() {
        bail!("deflate needs at least one `basis` image");
    }
    let basis = paths.iter().map(|p| setup::load(p)).collect::<Result<Vec<_>>>()?;

    let mut run = Run::create(cfg, "deflate")?;
    describe(&mut run, &op);
    run.note("mode", dcfg.solver.mode.name());
    let d = deflated_power_iteration(&op, &basis, &f, &dcfg)?;
    run.image("eigenfunction", &d.result.eigenfunction)?;
    d.result.trace.write_csv(run.dir().join("trace.csv"))?;
    note_result(&mut run, &d.result);
    run.note("pseudo", d.pseudo);
    run.note("refined", d.refined);
    run.number("max_overlap", d.max_overlap);
    let u = &d.result.eigenfunction;
    let mut report = String::from("basis,path,overlap\n");
    for (i, (v, p)) in basis.iter().zip(&paths).enumerate() {
        let overlap = (v.inner(u)? / (v.l2_norm() * u.l2_norm())).abs();
        writeln!(report, "{i},{},{overlap:.17e}", p.display()).unwrap();
    }
    run.file("orthogonality.csv", report)?;
    run.finish()
}

pub fn diagnose(cfg: &RunConfig) -> Result<()> {
    allow(cfg, &[RUN_KEYS, OPERATOR_KEYS, INPUT_KEYS, RATIO_KEYS])?;
    let u = setup::input(cfg)?;
    let op = setup::operator(cfg, Some(&u))?;
    let mut run = Run::create(cfg, "diagnose")?;
    describe(&mut run, &op);
    let tu = op.apply(&u)?;
    run.image("applied", &tu)?;
    let (estimate, zero) = estimate_eigenvalue(&op, &u)?;
    run.number("lambda_estimate", estimate);
    run.note("zero_output", zero);
    run.number("rayleigh", rayleigh_quotient(&u, &tu)?);
    run.number("cos_angle", cos_angle(&u, &tu)?);
    run.number("eigen_residual", eigen_residual(&u, &tu)?);
    write_ratio(&mut run, &ratio(cfg, &u, &tu)?)?;
    run.finish()
}

pub fn decay(cfg: &RunConfig) -> Result<()> {
    allow(cfg, &[RUN_KEYS, OPERATOR_KEYS, INPUT_KEYS, &["steps", "truncate"]])?;
    let u = setup::input(cfg)?;
    let op = setup::operator(cfg, Some(&u))?;
    let steps = cfg.get_or("steps", 10usize)?;
    let truncate = cfg.get_or("truncate", 0usize)?;
    let mut run = Run::create(cfg, "decay")?;
    describe(&mut run, &op);
    let profiles = decay_profiles(&op, &u, steps, truncate)?;
    run.file("decay.csv", profiles.to_csv())?;
    run.image("final", profiles.steps.last().unwrap())?;

    // Per-pixel geometric mean ratio over the whole trajectory, averaged.
    let rates: Vec<f64> = (0..profiles.pixels())
        .filter_map(|i| {
            let raw = profiles.raw(i);
            let q = raw[steps] / raw[0];
            (raw[0] != 0.0 && q > 0.0).then(|| q.powf(1.0 / steps as f64))
        })
        .collect();
    run.note("steps", steps);
    run.note("pixels", profiles.pixels());
    if !rates.is_empty() {
        run.number("mean_step_ratio", rates.iter().sum::<f64>() / rates.len() as f64);
    }
    run.finish()
}

/// `none; noise(σ); blur(σ); shift(dx,dy); message(amplitude,row,col)`
fn degradations(cfg: &RunConfig, message: Option<&Image>) -> Result<Vec<Degradation>> {
    let Some(text) = cfg.text("degradations") else {
        return Ok(Vec::new());
    };
    let base_seed = setup::seed(cfg)?;
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(i, item)| {
            let (name, args) = match item.split_once('(') {
                Some((n, rest)) => {
                    let inner = rest
                        .strip_suffix(')')
                        .ok_or_else(|| anyhow!("unclosed `(` in `{item}`"))?;
                    let args = inner
                        .split(',')
                        .map(|a| {
                            a.trim()
                                .parse::<f64>()
                                .map_err(|e| anyhow!("bad argument in `{item}`: {e}"))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    (n.trim(), args)
                }
                None => (item, Vec::new()),
            };
            let arity = |n: usize| -> Result<()> {
                if args.len() != n {
                    bail!("`{name}` takes {n} argument(s), got {}", args.len());
                }
                Ok(())
            };
            let seed = base_seed.wrapping_add(i as u64);
            Ok(match name {
                "none" => {
                    arity(0)?;
                    Degradation::GaussianNoise { sigma: 0.0, seed }
                }
                "noise" => {
                    arity(1)?;
                    Degradation::GaussianNoise { sigma: args[0], seed }
                }
                "blur" => {
                    arity(1)?;
                    Degradation::GaussianBlur { sigma: args[0] }
                }
                "shift" => {
                    arity(2)?;
                    Degradation::CircularShift {
                        dx: args[0] as i64,
                        dy: args[1] as i64,
                    }
                }
                "message" => {
                    arity(3)?;
                    let message = message.ok_or_else(|| anyhow!("`message(...)` needs a `message` image"))?;
                    Degradation::MessageOverlay {
                        amplitude: args[0],
                        row: args[1] as usize,
                        col: args[2] as usize,
                        message: message.clone(),
                    }
                }
                other => bail!("unknown degradation `{other}`"),
            })
        })
        .collect()
}

pub fn robustness_cmd(cfg: &RunConfig) -> Result<()> {
    allow(
        cfg,
        &[
            RUN_KEYS,
            OPERATOR_KEYS,
            SOLVER_KEYS,
            INPUT_KEYS,
            &["degradations", "message", "checkerboard", "psnr_images", "psnr_ratio"],
        ],
    )?;
    let u = setup::input(cfg)?;
    let op = setup::operator(cfg, Some(&u))?;
    let mut solver = setup::solver(cfg, Mode::ZeroMean)?;
    if !cfg.has("max_iters") {
        solver.max_iters = 500;
    }
    let message = message(cfg)?;
    let degs = degradations(cfg, message.as_ref())?;
    let psnr_paths = cfg.paths("psnr_images");
    if degs.is_empty() && psnr_paths.is_empty() {
        bail!("robustness needs `degradations` and/or `psnr_images`");
    }

    let mut run = Run::create(cfg, "robustness")?;
    describe(&mut run, &op);
    if !degs.is_empty() {
        let rows = robustness(&op, &u, &degs, &solver)?;
        for (i, r) in rows.iter().enumerate() {
            run.image(&format!("corrected_{i}"), &r.corrected)?;
            run.image(&format!("difference_{i}"), &r.difference)?;
            run.image(&format!("degraded_{i}"), &r.degraded)?;
            run.note(format!("label_{i}"), &r.label);
            run.number(format!("pre_residual_{i}"), r.pre_residual);
            run.number(format!("post_residual_{i}"), r.post_residual);
        }
        run.file("robustness.csv", robustness_csv(&rows))?;
    }
    if !psnr_paths.is_empty() {
        let images = psnr_paths
            .iter()
            .map(|p| {
                let label = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok((label, setup::load(p)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = psnr_gain(&op, &images, cfg.get_or("psnr_ratio", 5.0)?, setup::seed(cfg)?)?;
        for r in &rows {
            run.number(format!("gain_{}", r.label), r.gain);
        }
        run.file("psnr_gain.csv", psnr_gain_csv(&rows))?;
    }
    run.finish()
}

/// The message image: generated from `checkerboard`, or read from
/// `message` (binary raw files as-is, anything else thresholded at mid-range).
fn message(cfg: &RunConfig) -> Result<Option<Image>> {
    match (cfg.get::<usize>("checkerboard")?, cfg.path("message")) {
        (Some(_), Some(_)) => bail!("set only one of `message` and `checkerboard`"),
        (Some(n), None) => Ok(Some(checkerboard(n))),
        (None, Some(p)) => {
            let bytes = std::fs::read(&p).with_context(|| format!("reading message {}", p.display()))?;
            let img = setup::load(&p)?;
            Ok(Some(if bytes.starts_with(RAW_MAGIC) {
                img
            } else {
                binarize_mid_range(&img)
            }))
        }
        (None, None) => Ok(None),
    }
}

const PACKAGE_FILE: &str = "package.txt";

pub fn steg_encode_cmd(cfg: &RunConfig) -> Result<()> {
    allow(
        cfg,
        &[
            RUN_KEYS,
            INPUT_KEYS,
            &["message", "checkerboard", "amplitude_frac", "row", "col"],
        ],
    )?;
    let eig = setup::input(cfg)?;
    let msg = message(cfg)?.ok_or_else(|| anyhow!("steg-encode needs `message` or `checkerboard`"))?;
    // `amplitude` belongs to the synthetic-input keys, so the embedding
    // strength is given relative to the carrier's peak.
    let frac: f64 = cfg.need("amplitude_frac")?;
    let amplitude = frac * eig.max_abs();
    let (row, col) = (cfg.get_or("row", 0usize)?, cfg.get_or("col", 0usize)?);
    let pkg = steg_encode(&eig, &msg, amplitude, row, col)?;

    let mut run = Run::create(cfg, "steg-encode")?;
    run.image("carrier", &pkg.carrier)?;
    run.image("message", &msg)?;
    let (r, c, w, h) = pkg.region();
    run.file(
        PACKAGE_FILE,
        format!("amplitude = {:e}\nregion = {r},{c},{w},{h}\n", pkg.amplitude),
    )?;
    run.number("amplitude", pkg.amplitude);
    run.note("region", format!("{r},{c},{w},{h}"));
    run.finish()
}

fn region(cfg: &RunConfig) -> Result<Option<(usize, usize, usize, usize)>> {
    let parse = |v: Vec<f64>| -> Result<(usize, usize, usize, usize)> {
        match v.as_slice() {
            &[r, c, w, h] if v.iter().all(|x| *x >= 0.0 && x.fract() == 0.0) => {
                Ok((r as usize, c as usize, w as usize, h as usize))
            }
            _ => bail!("region must be four non-negative integers `row,col,width,height`"),
        }
    };
    if let Some(v) = cfg.list("region")? {
        return parse(v).map(Some);
    }
    if let Some(p) = cfg.path("package") {
        let pkg = RunConfig::load(&p)?;
        return pkg.list("region")?.map(parse).transpose();
    }
    Ok(None)
}

pub fn steg_decode_cmd(cfg: &RunConfig) -> Result<()> {
    allow(
        cfg,
        &[
            RUN_KEYS,
            OPERATOR_KEYS,
            &[
                "input",
                "iters",
                "threshold_frac",
                "package",
                "region",
                "message",
                "checkerboard",
            ],
        ],
    )?;
    let carrier = setup::load(&cfg.require_path("input")?)?;
    let op = setup::operator(cfg, Some(&carrier))?;
    let iters = cfg.get_or("iters", 500usize)?;
    let threshold = cfg.get_or("threshold_frac", DEFAULT_THRESHOLD_FRAC)?;
    let window = region(cfg)?;

    let mut run = Run::create(cfg, "steg-decode")?;
    describe(&mut run, &op);
    let d = steg_decode(&carrier, &op, iters, threshold, window)?;
    run.image("recovered", &d.recovered)?;
    run.image("difference", &d.difference)?;
    run.image("message_estimate", &d.message_estimate)?;
    run.note("iterations", d.iterations_run);
    run.note("converged", d.converged);
    if let Some(msg) = message(cfg)? {
        run.number("accuracy", message_accuracy(&d.message_estimate, &msg)?);
    }
    run.finish()
}

pub fn fit_gmm(cfg: &RunConfig) -> Result<()> {
    allow(
        cfg,
        &[
            RUN_KEYS,
            INPUT_KEYS,
            &["images", "patch", "gmm_components", "gmm_iters"],
        ],
    )?;
    let paths: Vec<PathBuf> = cfg.paths("images");
    let images = if paths.is_empty() {
        vec![setup::input(cfg)?]
    } else {
        paths.iter().map(|p| setup::load(p)).collect::<Result<Vec<_>>>()?
    };
    let mut run = Run::create(cfg, "fit-gmm")?;
    let fit = setup::fit_prior(cfg, &images)?;
    let gmm = &fit.gmm;
    gmm.write(run.dir().join("gmm.txt"))?;
    let mut trace = String::from("iter,mean_log_likelihood\n");
    for (i, ll) in fit.log_likelihood.iter().enumerate() {
        writeln!(trace, "{i},{ll:.17e}").unwrap();
    }
    run.file("em_trace.csv", trace)?;
    if let Some(last) = fit.log_likelihood.last() {
        run.number("log_likelihood", *last);
    }
    run.note("components", gmm.components());
    run.note("dim", gmm.dim());
    run.number("min_covariance_eigenvalue", gmm.min_covariance_eigenvalue());
    run.finish()
}
