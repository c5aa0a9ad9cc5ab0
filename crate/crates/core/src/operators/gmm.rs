//! Gaussian mixture prior over image patches and its EM fit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Covariance regularization added after every M-step (unit-scale intensities).
pub const DEFAULT_REG: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl Gmm {
    /// Validates and builds a mixture: weights positive and summing to one
    /// (1e-12), covariances symmetric (1e-12) and positive definite.
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidParameter("a GMM needs at least one component".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::InvalidParameter(format!(
                "{k} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("GMM weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("GMM weights sum to {total}, not 1")));
        }
        let d = means[0].len();
        for (i, (m, c)) in means.iter().zip(&covariances).enumerate() {
            if m.len() != d || c.nrows() != d || c.ncols() != d {
                return Err(Error::InvalidParameter(format!(
                    "component {i} does not have dimension {d}"
                )));
            }
            if m.iter().chain(c.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("GMM component {i}")));
            }
            let asym = (c - c.transpose()).amax();
            if asym > 1e-12 * c.amax().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "covariance {i} is not symmetric (max deviation {asym:e})"
                )));
            }
            if c.clone().cholesky().is_none() {
                return Err(Error::InvalidParameter(format!(
                    "covariance {i} is not positive definite"
                )));
            }
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    /// Single zero-mean isotropic component `N(0, s·I)` in dimension `d`.
    pub fn isotropic(d: usize, s: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![DVector::zeros(d)], vec![DMatrix::identity(d, d) * s])
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Smallest eigenvalue over all component covariances.
    pub fn min_covariance_eigenvalue(&self) -> f64 {
        self.covariances
            .iter()
            .map(|c| c.clone().symmetric_eigen().eigenvalues.min())
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean log-likelihood of `samples` under the mixture.
    pub fn mean_log_likelihood(&self, samples: &[DVector<f64>]) -> Result<f64> {
        let comps = self.factorized()?;
        let total: f64 = samples
            .iter()
            .map(|x| {
                let logs: Vec<f64> = comps.iter().map(|c| c.log_density(x)).collect();
                log_sum_exp(&logs)
            })
            .sum();
        Ok(total / samples.len() as f64)
    }

    fn factorized(&self) -> Result<Vec<FactoredGaussian>> {
        self.means
            .iter()
            .zip(&self.covariances)
            .zip(&self.weights)
            .map(|((m, c), &w)| FactoredGaussian::new(m, c, w.ln()))
            .collect()
    }

    /// Text format: a header line `K d`, then the weights, then one mean per
    /// line, then each covariance row-major (one row per line), all written
    /// with 17 significant digits so values round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let fmt = |v: f64| format!("{v:.16e}");
        writeln!(s, "{} {}", self.components(), self.dim()).unwrap();
        let line = |vals: &mut dyn Iterator<Item = f64>| vals.map(fmt).collect::<Vec<_>>().join(" ");
        writeln!(s, "{}", line(&mut self.weights.iter().copied())).unwrap();
        for m in &self.means {
            writeln!(s, "{}", line(&mut m.iter().copied())).unwrap();
        }
        for c in &self.covariances {
            for r in 0..c.nrows() {
                writeln!(s, "{}", line(&mut c.row(r).iter().copied())).unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next_usize = |what: &str| -> Result<usize> {
            tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Format(format!("GMM header: missing {what}")))
        };
        let k = next_usize("component count")?;
        let d = next_usize("dimension")?;
        let values: Vec<f64> = text
            .split_whitespace()
            .skip(2)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Format(format!("GMM: bad number `{t}`")))
            })
            .collect::<Result<_>>()?;
        let expected = k + k * d + k * d * d;
        if values.len() != expected {
            return Err(Error::Format(format!(
                "GMM with K={k}, d={d} needs {expected} values, found {}",
                values.len()
            )));
        }
        let weights = values[..k].to_vec();
        let means = (0..k)
            .map(|i| DVector::from_column_slice(&values[k + i * d..k + (i + 1) * d]))
            .collect();
        let base = k + k * d;
        let covs = (0..k)
            .map(|i| DMatrix::from_row_slice(d, d, &values[base + i * d * d..base + (i + 1) * d * d]))
            .collect();
        Self::new(weights, means, covs)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// A Gaussian with its Cholesky factor precomputed.
pub(crate) struct FactoredGaussian {
    mean: DVector<f64>,
    /// Inverse of the lower Cholesky factor; `||L⁻¹(x−μ)||²` is the Mahalanobis distance.
    l_inv: DMatrix<f64>,
    /// `ln π − ½ ln det Σ − (d/2) ln 2π`
    log_norm: f64,
}

impl FactoredGaussian {
    pub(crate) fn new(mean: &DVector<f64>, cov: &DMatrix<f64>, log_weight: f64) -> Result<Self> {
        let d = mean.len();
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Degenerate("covariance lost positive definiteness".into()))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::Degenerate("singular Cholesky factor".into()))?;
        Ok(Self {
            mean: mean.clone(),
            l_inv,
            log_norm: log_weight - 0.5 * log_det - 0.5 * d as f64 * LN_2PI,
        })
    }

    pub(crate) fn log_density(&self, x: &DVector<f64>) -> f64 {
        let r = x - &self.mean;
        let y = &self.l_inv * r;
        self.log_norm - 0.5 * y.norm_squared()
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Result of [`fit_gmm_em`]: the mixture and the mean log-likelihood
/// evaluated at the start of every EM iteration.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub gmm: Gmm,
    pub log_likelihood: Vec<f64>,
}

/// Fits a `k`-component full-covariance mixture by EM.
///
/// Means are seeded k-means++ style (first uniformly, the rest with
/// probability proportional to squared distance to the nearest chosen
/// center) from a ChaCha8 stream seeded with `seed`; covariances start at
/// the pooled sample covariance and weights at `1/k`. Each M-step uses
/// maximum-likelihood (divide-by-count) covariances plus `reg·I`.
pub fn fit_gmm_em(patches: &[Vec<f64>], k: usize, iters: usize, seed: u64, reg: f64) -> Result<EmFit> {
    if k < 1 {
        return Err(Error::InvalidParameter("GMM needs K >= 1".into()));
    }
    if patches.is_empty() {
        return Err(Error::InvalidParameter("cannot fit a GMM to an empty patch set".into()));
    }
    if patches.len() < k {
        return Err(Error::InvalidParameter(format!(
            "{} patches are fewer than K={k} components",
            patches.len()
        )));
    }
    if !(reg > 0.0 && reg.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "regularization must be positive, got {reg}"
        )));
    }
    let d = patches[0].len();
    if d == 0 || patches.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidParameter(
            "patches must share a positive dimension".into(),
        ));
    }
    let data: Vec<DVector<f64>> = patches.iter().map(|p| DVector::from_column_slice(p)).collect();
    let n = data.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = kmeans_pp_seeds(&data, k, &mut rng);
    let pooled = weighted_covariance(&data, &vec![1.0; n], &mean_of(&data), reg);
    let mut covs = vec![pooled; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut log_likelihood = Vec::with_capacity(iters);
    let mut resp = vec![vec![0.0; k]; n];
    for _ in 0..iters {
        // E-step
        let comps: Vec<FactoredGaussian> = means
            .iter()
            .zip(&covs)
            .zip(&weights)
            .map(|((m, c), &w)| FactoredGaussian::new(m, c, w.ln()))
            .collect::<Result<_>>()?;
        let mut ll = 0.0;
        let mut logs = vec![0.0; k];
        for (x, r) in data.iter().zip(resp.iter_mut()) {
            for (l, c) in logs.iter_mut().zip(&comps) {
                *l = c.log_density(x);
            }
            let lse = log_sum_exp(&logs);
            ll += lse;
            for (rj, l) in r.iter_mut().zip(&logs) {
                *rj = (l - lse).exp();
            }
        }
        log_likelihood.push(ll / n as f64);

        // M-step
        for j in 0..k {
            let w: Vec<f64> = resp.iter().map(|r| r[j]).collect();
            let nk: f64 = w.iter().sum();
            if nk <= 1e-10 * n as f64 {
                // Starved component: keep its previous mean and covariance.
                weights[j] = f64::MIN_POSITIVE;
                continue;
            }
            let mut mean = DVector::zeros(d);
            for (x, &wi) in data.iter().zip(&w) {
                mean.axpy(wi, x, 1.0);
            }
            mean /= nk;
            covs[j] = weighted_covariance(&data, &w, &mean, reg);
            means[j] = mean;
            weights[j] = nk / n as f64;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }

    let gmm = Gmm::new(weights, means, covs)?;
    Ok(EmFit { gmm, log_likelihood })
}

fn mean_of(data: &[DVector<f64>]) -> DVector<f64> {
    let mut m = DVector::zeros(data[0].len());
    for x in data {
        m += x;
    }
    m / data.len() as f64
}

fn weighted_covariance(data: &[DVector<f64>], w: &[f64], mean: &DVector<f64>, reg: f64) -> DMatrix<f64> {
    let d = mean.len();
    let mut cov = DMatrix::zeros(d, d);
    let mut total = 0.0;
    for (x, &wi) in data.iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        let r = x - mean;
        cov.ger(wi, &r, &r, 1.0);
        total += wi;
    }
    cov /= total;
    // Exact symmetry, then the floor.
    let sym = (&cov + cov.transpose()) * 0.5;
    sym + DMatrix::identity(d, d) * reg
}

fn kmeans_pp_seeds(data: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)].clone()];
    let mut dist: Vec<f64> = data.iter().map(|x| (x - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &dv) in dist.iter().enumerate() {
                if target < dv {
                    chosen = i;
                    break;
                }
                target -= dv;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data[idx].clone();
        for (dv, x) in dist.iter_mut().zip(data) {
            *dv = dv.min((x - &c).norm_squared());
        }
        centers.push(c);
    }
    centers
}
