//! Closed-form risk predictions for linear message passing on the latent
//! space model, and a Monte-Carlo harness that measures the same risks.
//!
//! Every covariance here is a spectral function of `sigma`: with
//! `sigma = V diag(l) V^T` and `a(l) = l / (1 + l)` (the eigenvalues of the
//! smoothing operator `A = (I + sigma^-1)^-1`),
//!
//! ```text
//! baseline, k rounds             a^(2k) l
//! half-hop closed form, odd k    1/2 a^(k-1) (1 + ((1 - alpha) + alpha a)^2) l
//! half-hop original nodes        a^(k-1) ((1 - alpha) + alpha a)^2 l     k odd
//!                                a^k l                                   k even
//! ```
//!
//! The last row is the covariance of the original-node embeddings obtained
//! by unrolling `x(t+1) = AGG(slow(t))`, `slow(t+1) = x_source(t)` on the
//! directed (`Hh1`) variant.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::Variant;
use crate::diffusion::{half_hop_trajectory, propagate, DiffusionOperator, OperatorKind};
use crate::error::{Error, Result};
use crate::regression::{fit_ridge, test_risk};
use crate::synth::{sample_latent_graph, seeded_rng, split_masks, LatentModel};

/// Eigenvalues below this are treated as zero when taking roots and inverses.
pub const EIGEN_CLAMP: f64 = 1e-12;
/// Most negative eigenvalue tolerated in a PSD argument (relative to scale).
const PSD_TOLERANCE: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// `A = (I + sigma^-1)^-1` with the eigenbasis it shares with `sigma`.
#[derive(Debug, Clone)]
pub struct SmoothingOperator {
    matrix: DMatrix<f64>,
    sigma_eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SmoothingOperator {
    pub fn new(model: &LatentModel) -> Self {
        let eig = SymmetricEigen::new(model.sigma().clone());
        let mut op = SmoothingOperator {
            matrix: DMatrix::zeros(0, 0),
            sigma_eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        };
        op.matrix = op.spectral(|l| l / (1.0 + l));
        op
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Eigenvalues of sigma, in the order of [`Self::eigenvectors`].
    pub fn sigma_eigenvalues(&self) -> &DVector<f64> {
        &self.sigma_eigenvalues
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        self.sigma_eigenvalues.map(|l| l / (1.0 + l))
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// `V diag(f(l)) V^T` over the eigenvalues `l` of sigma.
    pub fn spectral(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let d = self.sigma_eigenvalues.map(f);
        let out = v * DMatrix::from_diagonal(&d) * v.transpose();
        (&out + out.transpose()) * 0.5
    }
}

/// Eigenvalue of `A^(2k) sigma` for a sigma eigenvalue `l`.
pub fn baseline_eigenvalue(l: f64, k: usize) -> f64 {
    (l / (1.0 + l)).powi(2 * k as i32) * l
}

/// Eigenvalue of `1/2 A^(k-1) (I + ((1-alpha) I + alpha A)^2) sigma`.
pub fn halfhop_eigenvalue(l: f64, k: usize, alpha: f64) -> f64 {
    let a = l / (1.0 + l);
    let mix = (1.0 - alpha) + alpha * a;
    0.5 * a.powi(k as i32 - 1) * (1.0 + mix * mix) * l
}

/// Eigenvalue of the original-node covariance after `k` half-hop rounds.
pub fn halfhop_recursion_eigenvalue(l: f64, k: usize, alpha: f64) -> f64 {
    let a = l / (1.0 + l);
    if k.is_multiple_of(2) {
        a.powi(k as i32) * l
    } else {
        let mix = (1.0 - alpha) + alpha * a;
        a.powi(k as i32 - 1) * mix * mix * l
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_odd(k: usize) -> Result<()> {
    if k.is_multiple_of(2) {
        return Err(Error::EvenOrder(k));
    }
    Ok(())
}

/// `A^(2k) sigma`.
pub fn predicted_cov_baseline(model: &LatentModel, k: usize) -> DMatrix<f64> {
    SmoothingOperator::new(model).spectral(|l| baseline_eigenvalue(l, k))
}

/// `1/2 A^(k-1) (I + ((1-alpha) I + alpha A)^2) sigma`, odd `k` only.
pub fn predicted_cov_halfhop(model: &LatentModel, k: usize, alpha: f64) -> Result<DMatrix<f64>> {
    check_odd(k)?;
    check_alpha(alpha)?;
    Ok(SmoothingOperator::new(model).spectral(|l| halfhop_eigenvalue(l, k, alpha)))
}

/// Covariance of the original-node embeddings after `k` rounds on the
/// directed half-hopped graph (any `k`).
pub fn predicted_cov_halfhop_recursion(
    model: &LatentModel,
    k: usize,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    check_alpha(alpha)?;
    Ok(SmoothingOperator::new(model).spectral(|l| halfhop_recursion_eigenvalue(l, k, alpha)))
}

fn symmetric_function(
    s: &DMatrix<f64>,
    op: &'static str,
    f: impl Fn(f64) -> Result<f64>,
) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(s.clone());
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        *v = f(*v).map_err(|e| match e {
            Error::Numerical { reason, .. } => Error::numerical(op, reason),
            other => other,
        })?;
    }
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&d) * v.transpose())
}

/// Ridge risk functional of an effective feature covariance `s`:
///
/// `(sigma^1/2 b)^T K (sigma^1/2 b)` with
/// `K = (I - s^1/2 M (gamma I + M^T s M)^-1 M^T s^1/2)^2`.
pub fn r_reg(s: &DMatrix<f64>, model: &LatentModel) -> Result<f64> {
    let d = model.latent_dim();
    if s.nrows() != d || s.ncols() != d {
        return Err(Error::Dimension {
            context: "r_reg argument size vs latent dimension",
            expected: d,
            found: s.nrows(),
        });
    }
    let scale = s.amax().max(1.0);
    if (s - s.transpose()).amax() > SYMMETRY_TOLERANCE * scale {
        return Err(Error::numerical("r_reg", "argument is not symmetric"));
    }
    let s = (s + s.transpose()) * 0.5;
    let s_half = symmetric_function(&s, "r_reg", |l| {
        if l < -PSD_TOLERANCE * scale {
            Err(Error::numerical(
                "r_reg",
                format!("argument is not positive semi-definite (eigenvalue {l:e})"),
            ))
        } else if l < EIGEN_CLAMP {
            Ok(0.0)
        } else {
            Ok(l.sqrt())
        }
    })?;
    let m = model.projection();
    let p = m.ncols();
    let inner = DMatrix::identity(p, p) * model.ridge_gamma() + m.transpose() * &s * m;
    let inner = (&inner + inner.transpose()) * 0.5;
    let inner_inv = symmetric_function(&inner, "r_reg", |l| {
        if l < EIGEN_CLAMP {
            Err(Error::numerical("r_reg", "gamma I + M^T S M is singular"))
        } else {
            Ok(1.0 / l)
        }
    })?;
    let proj = &s_half * m * inner_inv * m.transpose() * &s_half;
    let half_k = DMatrix::identity(d, d) - proj;
    let k_mat = &half_k * &half_k;
    let sigma_half = SmoothingOperator::new(model).spectral(f64::sqrt);
    let v = sigma_half * model.beta_star();
    Ok((v.transpose() * k_mat * &v)[(0, 0)].max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub lambda: f64,
    pub baseline: f64,
    pub halfhop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenTable {
    pub k: usize,
    pub alpha: f64,
    /// One row per eigendirection of sigma, ascending eigenvalue.
    pub rows: Vec<EigenRow>,
    /// Log-log slope of the baseline eigenvalue map over the fit range.
    pub baseline_slope: f64,
    pub halfhop_slope: f64,
    pub slope_range: (f64, f64),
}

pub const SLOPE_RANGE: (f64, f64) = (1e-4, 1e-2);
const SLOPE_POINTS: usize = 41;

/// Least-squares slope of `ln f(l)` against `ln l` on a log-spaced grid.
pub fn log_log_slope(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let xs: Vec<f64> = (0..points)
        .map(|i| llo + (lhi - llo) * i as f64 / (points - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x.exp()).ln()).collect();
    let mx = xs.iter().sum::<f64>() / points as f64;
    let my = ys.iter().sum::<f64>() / points as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Per-direction eigenvalues after `k` rounds with and without Half-Hop, plus
/// small-eigenvalue decay exponents over [`SLOPE_RANGE`].
pub fn eigen_decay_table(model: &LatentModel, k: usize, alpha: f64) -> Result<EigenTable> {
    check_odd(k)?;
    check_alpha(alpha)?;
    let mut lambdas: Vec<f64> = SmoothingOperator::new(model)
        .sigma_eigenvalues()
        .iter()
        .copied()
        .collect();
    lambdas.sort_by(f64::total_cmp);
    let rows = lambdas
        .into_iter()
        .map(|l| EigenRow {
            lambda: l,
            baseline: baseline_eigenvalue(l, k),
            halfhop: halfhop_eigenvalue(l, k, alpha),
        })
        .collect();
    let (lo, hi) = SLOPE_RANGE;
    Ok(EigenTable {
        k,
        alpha,
        rows,
        baseline_slope: log_log_slope(|l| baseline_eigenvalue(l, k), lo, hi, SLOPE_POINTS),
        halfhop_slope: log_log_slope(|l| halfhop_eigenvalue(l, k, alpha), lo, hi, SLOPE_POINTS),
        slope_range: SLOPE_RANGE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Baseline,
    HalfHop,
}

/// One measured configuration inside a Monte-Carlo sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskQuery {
    pub arm: Arm,
    pub k: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            n: 3000,
            trials: 20,
            seed: 0,
            train_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub query: RiskQuery,
    pub mean: f64,
    pub stderr: f64,
    pub trial_risks: Vec<f64>,
}

/// Seed of trial `t`; depends only on `(seed, t)`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seeded_rng(seed, 1 << 32 | trial as u64).random()
}

/// Empirical test risk for several configurations, each trial drawing one
/// latent graph shared by every query.
///
/// Baseline: `k` rounds of mean aggregation over `W` without self-loops.
/// Half-hop: `k` rounds on the `Hh1`-augmented weighted graph with
/// interpolated slow nodes, slow nodes discarded. Ridge is fit on the train
/// split with penalty `ridge_gamma / 2` in the `1/(2n)` objective, which has
/// normal equations `X^T X / n + ridge_gamma I`, the form `r_reg` assumes.
pub fn monte_carlo_sweep(
    model: &LatentModel,
    cfg: &MonteCarloConfig,
    queries: &[RiskQuery],
) -> Result<Vec<MonteCarloEstimate>> {
    if cfg.trials == 0 {
        return Err(Error::param("monte carlo needs at least one trial"));
    }
    for q in queries {
        check_alpha(q.alpha)?;
    }
    let per_trial: Vec<Vec<f64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(model, cfg, queries, trial_seed(cfg.seed, t)))
        .collect::<Result<_>>()?;

    Ok(queries
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let risks: Vec<f64> = per_trial.iter().map(|r| r[qi]).collect();
            let (mean, stderr) = mean_stderr(&risks);
            MonteCarloEstimate {
                query: *q,
                mean,
                stderr,
                trial_risks: risks,
            }
        })
        .collect())
}

/// Single-configuration form of [`monte_carlo_sweep`].
pub fn monte_carlo_risk(
    model: &LatentModel,
    cfg: &MonteCarloConfig,
    arm: Arm,
    k: usize,
    alpha: f64,
) -> Result<MonteCarloEstimate> {
    let mut v = monte_carlo_sweep(model, cfg, &[RiskQuery { arm, k, alpha }])?;
    Ok(v.remove(0))
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn run_trial(
    model: &LatentModel,
    cfg: &MonteCarloConfig,
    queries: &[RiskQuery],
    seed: u64,
) -> Result<Vec<f64>> {
    let sample = sample_latent_graph(model, cfg.n, seed)?;
    let (train, test) = split_masks(cfg.n, cfg.train_fraction, seed)?;
    let idx = |m: &[bool]| -> Vec<usize> {
        m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    };
    let (train, test) = (idx(&train), idx(&test));
    let y = DMatrix::from_column_slice(cfg.n, 1, &sample.labels);
    let y_tr = y.select_rows(&train);
    let y_te = y.select_rows(&test);
    let op = DiffusionOperator::from_dense_weights(&sample.weights, OperatorKind::MeanRowNorm, false);
    drop(sample.weights);
    let gamma = model.ridge_gamma() / 2.0;

    queries
        .iter()
        .map(|q| {
            let x = match q.arm {
                Arm::Baseline => propagate(&op, &sample.features, q.k)?,
                Arm::HalfHop => half_hop_trajectory(&op, &sample.features, q.alpha, Variant::Hh1, q.k)?
                    .pop()
                    .expect("trajectory has k + 1 entries"),
            };
            let est = fit_ridge(&x.select_rows(&train), &y_tr, gamma)?;
            test_risk(&est, &x.select_rows(&test), &y_te)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub k: usize,
    pub alpha: f64,
    pub predicted_cov_baseline: Vec<Vec<f64>>,
    pub predicted_cov_hh: Vec<Vec<f64>>,
    pub predicted_risk_baseline: f64,
    pub predicted_risk_hh: f64,
    /// Risk of the original-node covariance from the half-hop recursion.
    pub predicted_risk_hh_recursion: f64,
    pub empirical_baseline: Option<MonteCarloEstimate>,
    pub empirical_hh: Option<MonteCarloEstimate>,
    pub monte_carlo: Option<MonteCarloConfig>,
    pub eigen_table: EigenTable,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Predictions for `(k, alpha)` and, when `mc` is given, measurements of the
/// same two arms.
pub fn spectral_report(
    model: &LatentModel,
    k: usize,
    alpha: f64,
    mc: Option<&MonteCarloConfig>,
) -> Result<SpectralReport> {
    let cov_hh = predicted_cov_halfhop(model, k, alpha)?;
    let cov_base = predicted_cov_baseline(model, k);
    let cov_rec = predicted_cov_halfhop_recursion(model, k, alpha)?;
    let (empirical_baseline, empirical_hh) = match mc {
        Some(cfg) => {
            let mut est = monte_carlo_sweep(
                model,
                cfg,
                &[
                    RiskQuery { arm: Arm::Baseline, k, alpha },
                    RiskQuery { arm: Arm::HalfHop, k, alpha },
                ],
            )?;
            let hh = est.pop();
            (est.pop(), hh)
        }
        None => (None, None),
    };
    Ok(SpectralReport {
        k,
        alpha,
        predicted_risk_baseline: r_reg(&cov_base, model)?,
        predicted_risk_hh: r_reg(&cov_hh, model)?,
        predicted_risk_hh_recursion: r_reg(&cov_rec, model)?,
        predicted_cov_baseline: rows_of(&cov_base),
        predicted_cov_hh: rows_of(&cov_hh),
        empirical_baseline,
        empirical_hh,
        monte_carlo: mc.cloned(),
        eigen_table: eigen_decay_table(model, k, alpha)?,
    })
}
