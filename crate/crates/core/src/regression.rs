//! Ridge regression on diffused features and test-risk curves over the number
//! of message-passing rounds.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::augment::{HalfHopConfig, SlowInit, Variant};
use crate::diffusion::{
    build_operator, half_hop_trajectory, half_hop_trajectory_materialized, trajectory, OperatorKind,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, Labels};

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeEstimate {
    /// `feature_dim x outputs`
    pub beta: DMatrix<f64>,
    pub gamma: f64,
    /// Smoothing order of the features the estimate was fit on.
    pub k: usize,
    pub train_size: usize,
}

/// Minimises `1/(2 n) |Y - X b|^2 + gamma |b|^2`, i.e. solves
/// `(X^T X + 2 gamma n I) b = X^T Y` by Cholesky factorisation.
///
/// `gamma = 0` is accepted when `X^T X` is numerically positive definite.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<RidgeEstimate> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::param("ridge fit needs at least one training row"));
    }
    if y.nrows() != n {
        return Err(Error::Dimension {
            context: "target rows vs design rows",
            expected: n,
            found: y.nrows(),
        });
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::param(format!("ridge penalty must be >= 0, got {gamma}")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numerical("fit_ridge", "non-finite value in inputs"));
    }
    let d = x.ncols();
    let mut gram = x.tr_mul(x);
    let shift = 2.0 * gamma * n as f64;
    for i in 0..d {
        gram[(i, i)] += shift;
    }
    let rhs = x.tr_mul(y);
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("fit_ridge", "normal equations are singular"))?;
    if gamma == 0.0 {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
            (lo.min(v.abs()), hi.max(v.abs()))
        });
        if !(lo > 1e-10 * hi) {
            return Err(Error::numerical(
                "fit_ridge",
                "normal equations are numerically rank deficient at gamma = 0",
            ));
        }
    }
    let beta = chol.solve(&rhs);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("fit_ridge", "solution is not finite"));
    }
    Ok(RidgeEstimate {
        beta,
        gamma,
        k: 0,
        train_size: n,
    })
}

/// Mean over test rows of the squared prediction error (summed over outputs).
pub fn test_risk(est: &RidgeEstimate, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::param("test set is empty"));
    }
    if x.ncols() != est.beta.nrows() {
        return Err(Error::Dimension {
            context: "test feature columns vs estimate",
            expected: est.beta.nrows(),
            found: x.ncols(),
        });
    }
    if y.nrows() != x.nrows() || y.ncols() != est.beta.ncols() {
        return Err(Error::Dimension {
            context: "test target shape",
            expected: x.nrows(),
            found: y.nrows(),
        });
    }
    let resid = y - x * &est.beta;
    Ok(resid.norm_squared() / x.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelEncoding {
    /// One target column holding the label value.
    #[default]
    Raw,
    /// One indicator column per class (classes in ascending order).
    OneHot,
}

impl fmt::Display for LabelEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelEncoding::Raw => "raw",
            LabelEncoding::OneHot => "onehot",
        })
    }
}

impl FromStr for LabelEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(LabelEncoding::Raw),
            "onehot" | "one-hot" => Ok(LabelEncoding::OneHot),
            _ => Err(Error::param(format!("unknown label encoding `{s}` (raw, onehot)"))),
        }
    }
}

/// Target matrix for the given labels.
pub fn encode_labels(labels: &Labels, encoding: LabelEncoding) -> Result<DMatrix<f64>> {
    match (labels, encoding) {
        (l, LabelEncoding::Raw) => {
            let v = l.to_real();
            Ok(DMatrix::from_column_slice(v.len(), 1, &v))
        }
        (Labels::Class(c), LabelEncoding::OneHot) => {
            let classes: Vec<i64> = c.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            Ok(DMatrix::from_fn(c.len(), classes.len(), |i, j| {
                if c[i] == classes[j] {
                    1.0
                } else {
                    0.0
                }
            }))
        }
        (Labels::Real(_), LabelEncoding::OneHot) => Err(Error::RealLabels),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub operator: OperatorKind,
    pub self_loops: bool,
    pub gamma: f64,
    pub k_max: usize,
    pub encoding: LabelEncoding,
    pub intercept: bool,
    pub train_mask: String,
    pub test_mask: String,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            operator: OperatorKind::MeanRowNorm,
            self_loops: false,
            gamma: 0.05,
            k_max: 16,
            encoding: LabelEncoding::Raw,
            intercept: false,
            train_mask: "train".into(),
            test_mask: "test".into(),
        }
    }
}

/// Which computation produced the half-hop arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HalfHopRoute {
    /// Closed recurrence on the input operator, no slow nodes built.
    Recurrence,
    /// Message passing on the materialised augmented graph.
    Materialized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveProvenance {
    pub curve: CurveConfig,
    pub halfhop: HalfHopConfig,
    pub route: HalfHopRoute,
    pub train_size: usize,
    pub test_size: usize,
    /// FNV-1a digest of the train/test row indices each arm was fit and
    /// scored on.
    pub baseline_split_digest: String,
    pub halfhop_split_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub ks: Vec<usize>,
    pub baseline_mse: Vec<f64>,
    pub halfhop_mse: Vec<f64>,
    pub provenance: CurveProvenance,
}

impl RiskCurve {
    /// Oversmoothing onset: the first `k` at or after the curve's minimum
    /// whose MSE exceeds `factor` times that minimum.
    pub fn onset(values: &[f64], factor: f64) -> Option<usize> {
        let (argmin, min) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
        (argmin..values.len()).find(|&k| values[k] > factor * min)
    }
}

struct Split {
    train: Vec<usize>,
    test: Vec<usize>,
}

impl Split {
    fn from_graph(g: &Graph, cfg: &CurveConfig) -> Result<Self> {
        let train = g
            .mask(&cfg.train_mask)
            .ok_or_else(|| Error::MissingMask(cfg.train_mask.clone()))?;
        let test = g
            .mask(&cfg.test_mask)
            .ok_or_else(|| Error::MissingMask(cfg.test_mask.clone()))?;
        let idx = |m: &[bool]| m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        Ok(Split {
            train: idx(train),
            test: idx(test),
        })
    }

    fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for &i in &self.train {
            eat(i as u64);
        }
        eat(u64::MAX);
        for &i in &self.test {
            eat(i as u64);
        }
        format!("{h:016x}")
    }
}

fn risk_at(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    split: &Split,
    gamma: f64,
    intercept: bool,
    k: usize,
) -> Result<f64> {
    let design = if intercept {
        features.clone().insert_column(features.ncols(), 1.0)
    } else {
        features.clone()
    };
    let x_tr = design.select_rows(&split.train);
    let y_tr = targets.select_rows(&split.train);
    let mut est = fit_ridge(&x_tr, &y_tr, gamma)?;
    est.k = k;
    test_risk(&est, &design.select_rows(&split.test), &targets.select_rows(&split.test))
}

/// Test MSE against the number of rounds `k = 0..=k_max` for the plain graph
/// and for the fully half-hopped graph (`hh.p` is ignored), with the same
/// split and penalty for both arms. Slow nodes are discarded before fitting.
///
/// For mean aggregation without self-loops and interpolated `Hh`/`Hh1` slow
/// nodes the half-hop arm uses the slow-node-free recurrence; otherwise the
/// augmented graph is built.
pub fn mse_curve(g: &Graph, hh: &HalfHopConfig, cfg: &CurveConfig) -> Result<RiskCurve> {
    hh.validate()?;
    let labels = g.labels().ok_or(Error::MissingLabels)?;
    let targets = encode_labels(labels, cfg.encoding)?;
    let split = Split::from_graph(g, cfg)?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::param("train and test masks must both be non-empty"));
    }

    let op = build_operator(g, cfg.operator, cfg.self_loops);
    let base = trajectory(&op, g.features(), cfg.k_max)?;

    let recurrence_ok = cfg.operator == OperatorKind::MeanRowNorm
        && !cfg.self_loops
        && hh.init == SlowInit::Interpolate
        && hh.variant != Variant::Hh2;
    let (route, hh_traj) = if recurrence_ok {
        (
            HalfHopRoute::Recurrence,
            half_hop_trajectory(&op, g.features(), hh.alpha, hh.variant, cfg.k_max)?,
        )
    } else {
        (
            HalfHopRoute::Materialized,
            half_hop_trajectory_materialized(g, hh, cfg.operator, cfg.self_loops, cfg.k_max)?,
        )
    };

    let mut baseline_mse = Vec::with_capacity(cfg.k_max + 1);
    let mut halfhop_mse = Vec::with_capacity(cfg.k_max + 1);
    for k in 0..=cfg.k_max {
        baseline_mse.push(risk_at(&base[k], &targets, &split, cfg.gamma, cfg.intercept, k)?);
        halfhop_mse.push(risk_at(&hh_traj[k], &targets, &split, cfg.gamma, cfg.intercept, k)?);
    }
    let digest = split.digest();
    Ok(RiskCurve {
        ks: (0..=cfg.k_max).collect(),
        baseline_mse,
        halfhop_mse,
        provenance: CurveProvenance {
            curve: cfg.clone(),
            halfhop: HalfHopConfig { p: 1.0, ..*hh },
            route,
            train_size: split.train.len(),
            test_size: split.test.len(),
            baseline_split_digest: digest.clone(),
            halfhop_split_digest: digest,
        },
    })
}
