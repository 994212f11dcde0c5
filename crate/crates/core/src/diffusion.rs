//! Parameter-free linear message passing.
//!
//! A [`DiffusionOperator`] is an `n x n` propagation matrix `L` whose row `i`
//! aggregates over the in-neighbours of node `i`, so one round of message
//! passing is `H <- L H`. Two normalisations are available:
//!
//! * `MeanRowNorm`: `L = D^-1 A`, rows sum to one (mean aggregation);
//! * `SymNorm`: `L = D^-1/2 A D^-1/2` with `D` the weighted in-degree.
//!
//! Here `A[i][j]` is the (summed) weight of edges `j -> i`. A node whose row
//! ends up empty keeps an all-zero row.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::augment::{half_hop, AugmentedGraph, HalfHopConfig, SlowInit, Variant};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    #[default]
    MeanRowNorm,
    SymNorm,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::MeanRowNorm => "mean",
            OperatorKind::SymNorm => "sym",
        })
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "mean_rownorm" => Ok(OperatorKind::MeanRowNorm),
            "sym" | "sym_norm" => Ok(OperatorKind::SymNorm),
            _ => Err(Error::param(format!("unknown operator `{s}` (mean, sym)"))),
        }
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<NodeId>,
    vals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Sparse(Csr),
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOperator {
    kind: OperatorKind,
    self_loops: bool,
    n: usize,
    storage: Storage,
    zero_rows: Vec<NodeId>,
}

/// Dense storage is used once a quarter of the matrix is populated.
const DENSE_FILL: f64 = 0.25;
const DENSE_MAX_N: usize = 16_384;

/// Builds the propagation matrix of `g`.
///
/// With `self_loops = false` existing self-loop edges are dropped. With
/// `self_loops = true` every node gets a self-loop: nodes that already have
/// one keep its weight, the others get weight 1.
pub fn build_operator(g: &Graph, kind: OperatorKind, self_loops: bool) -> DiffusionOperator {
    let n = g.num_nodes();
    let mut rows: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n];
    let mut has_loop = vec![false; n];
    for (idx, &(s, t)) in g.edges().iter().enumerate() {
        if s == t {
            if !self_loops {
                continue;
            }
            has_loop[s] = true;
        }
        rows[t].push((s, g.weight(idx)));
    }
    if self_loops {
        for (v, r) in rows.iter_mut().enumerate() {
            if !has_loop[v] {
                r.push((v, 1.0));
            }
        }
    }
    for r in rows.iter_mut() {
        r.sort_by_key(|&(c, _)| c);
        r.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
    }
    DiffusionOperator::from_rows(rows, kind, self_loops)
}

impl DiffusionOperator {
    /// Builds from a dense weight matrix where `weights[(i, j)]` is the weight
    /// of edge `i -> j`; the diagonal is kept only when `self_loops` is set.
    pub fn from_dense_weights(weights: &DMatrix<f64>, kind: OperatorKind, self_loops: bool) -> Self {
        let n = weights.nrows();
        let mut a = weights.transpose();
        if !self_loops {
            a.fill_diagonal(0.0);
        } else {
            for i in 0..n {
                if a[(i, i)] == 0.0 {
                    a[(i, i)] = 1.0;
                }
            }
        }
        let degree: Vec<f64> = a.row_iter().map(|r| r.sum()).collect();
        let zero_rows = zero_rows_of(&degree);
        normalize_dense(&mut a, &degree, kind);
        warn_zero_rows(&zero_rows);
        DiffusionOperator {
            kind,
            self_loops,
            n,
            storage: Storage::Dense(a),
            zero_rows,
        }
    }

    fn from_rows(rows: Vec<Vec<(NodeId, f64)>>, kind: OperatorKind, self_loops: bool) -> Self {
        let n = rows.len();
        let degree: Vec<f64> = rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
        let zero_rows = zero_rows_of(&degree);
        warn_zero_rows(&zero_rows);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let scale = |i: usize, j: usize, w: f64| -> f64 {
            match kind {
                OperatorKind::MeanRowNorm => {
                    if degree[i] > 0.0 {
                        w / degree[i]
                    } else {
                        0.0
                    }
                }
                OperatorKind::SymNorm => {
                    let d = degree[i] * degree[j];
                    if d > 0.0 {
                        w / d.sqrt()
                    } else {
                        0.0
                    }
                }
            }
        };
        let storage = if n > 0 && n <= DENSE_MAX_N && nnz as f64 >= DENSE_FILL * (n * n) as f64 {
            let mut m = DMatrix::zeros(n, n);
            for (i, r) in rows.iter().enumerate() {
                for &(j, w) in r {
                    m[(i, j)] = scale(i, j, w);
                }
            }
            Storage::Dense(m)
        } else {
            let mut row_ptr = Vec::with_capacity(n + 1);
            let mut cols = Vec::with_capacity(nnz);
            let mut vals = Vec::with_capacity(nnz);
            row_ptr.push(0);
            for (i, r) in rows.iter().enumerate() {
                for &(j, w) in r {
                    cols.push(j);
                    vals.push(scale(i, j, w));
                }
                row_ptr.push(cols.len());
            }
            Storage::Sparse(Csr {
                row_ptr,
                cols,
                vals,
            })
        };
        DiffusionOperator {
            kind,
            self_loops,
            n,
            storage,
            zero_rows,
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Nodes with no in-neighbours under the self-loop policy.
    pub fn zero_rows(&self) -> &[NodeId] {
        &self.zero_rows
    }

    /// 1 for rows with at least one in-neighbour, 0 otherwise.
    pub fn row_indicator(&self) -> DVector<f64> {
        let mut r = DVector::from_element(self.n, 1.0);
        for &v in &self.zero_rows {
            r[v] = 0.0;
        }
        r
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m[(i, j)],
            Storage::Sparse(c) => {
                let span = c.row_ptr[i]..c.row_ptr[i + 1];
                match c.cols[span.clone()].binary_search(&j) {
                    Ok(pos) => c.vals[span.start + pos],
                    Err(_) => 0.0,
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(c) => {
                let mut m = DMatrix::zeros(self.n, self.n);
                for i in 0..self.n {
                    for p in c.row_ptr[i]..c.row_ptr[i + 1] {
                        m[(i, c.cols[p])] = c.vals[p];
                    }
                }
                m
            }
        }
    }

    /// One round of message passing, `L h`.
    pub fn apply(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if h.nrows() != self.n {
            return Err(Error::Dimension {
                context: "feature rows vs operator dimension",
                expected: self.n,
                found: h.nrows(),
            });
        }
        Ok(match &self.storage {
            Storage::Dense(m) => m * h,
            Storage::Sparse(c) => {
                let mut out = DMatrix::zeros(self.n, h.ncols());
                for col in 0..h.ncols() {
                    let src = h.column(col);
                    let mut dst = out.column_mut(col);
                    for i in 0..self.n {
                        let mut acc = 0.0;
                        for p in c.row_ptr[i]..c.row_ptr[i + 1] {
                            acc += c.vals[p] * src[c.cols[p]];
                        }
                        dst[i] = acc;
                    }
                }
                out
            }
        })
    }

    /// Row vector times operator, `v^T L`, returned as a column.
    pub fn apply_left(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n {
            return Err(Error::Dimension {
                context: "vector length vs operator dimension",
                expected: self.n,
                found: v.len(),
            });
        }
        Ok(match &self.storage {
            Storage::Dense(m) => m.tr_mul(v),
            Storage::Sparse(c) => {
                let mut out = DVector::zeros(self.n);
                for i in 0..self.n {
                    let vi = v[i];
                    if vi == 0.0 {
                        continue;
                    }
                    for p in c.row_ptr[i]..c.row_ptr[i + 1] {
                        out[c.cols[p]] += vi * c.vals[p];
                    }
                }
                out
            }
        })
    }
}

fn zero_rows_of(degree: &[f64]) -> Vec<NodeId> {
    degree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= 0.0)
        .map(|(i, _)| i)
        .collect()
}

fn warn_zero_rows(zero_rows: &[NodeId]) {
    if !zero_rows.is_empty() {
        log::warn!(
            "{} node(s) have no in-neighbours and keep an all-zero propagation row (first: {})",
            zero_rows.len(),
            zero_rows[0]
        );
    }
}

fn normalize_dense(a: &mut DMatrix<f64>, degree: &[f64], kind: OperatorKind) {
    let n = a.nrows();
    match kind {
        OperatorKind::MeanRowNorm => {
            for i in 0..n {
                let inv = if degree[i] > 0.0 { 1.0 / degree[i] } else { 0.0 };
                a.row_mut(i).scale_mut(inv);
            }
        }
        OperatorKind::SymNorm => {
            let inv_sqrt: Vec<f64> = degree
                .iter()
                .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
                .collect();
            for j in 0..n {
                for i in 0..n {
                    a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
                }
            }
        }
    }
}

/// `L^k h` by `k` successive applications.
pub fn propagate(op: &DiffusionOperator, features: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let mut h = features.clone();
    if h.nrows() != op.dim() {
        return Err(Error::Dimension {
            context: "feature rows vs operator dimension",
            expected: op.dim(),
            found: h.nrows(),
        });
    }
    for _ in 0..k {
        h = op.apply(&h)?;
    }
    Ok(h)
}

/// Features after `0..=k_max` rounds, one matrix per round.
pub fn trajectory(op: &DiffusionOperator, features: &DMatrix<f64>, k_max: usize) -> Result<Vec<DMatrix<f64>>> {
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(propagate(op, features, 0)?);
    for k in 1..=k_max {
        let next = op.apply(&out[k - 1])?;
        out.push(next);
    }
    Ok(out)
}

/// Row `center` of `L^k`: the weight each node contributes to the center's
/// embedding after `k` rounds.
pub fn receptive_field(op: &DiffusionOperator, center: NodeId, k: usize) -> Result<DVector<f64>> {
    if center >= op.dim() {
        return Err(Error::param(format!(
            "center {center} outside [0, {})",
            op.dim()
        )));
    }
    let mut v = DVector::zeros(op.dim());
    v[center] = 1.0;
    for _ in 0..k {
        v = op.apply_left(&v)?;
    }
    Ok(v)
}

/// Receptive field of an original node on an augmented graph, read back onto
/// original nodes. Slow-node mass is split between the endpoints of the edge
/// the slow node replaced: `alpha` to the source, `1 - alpha` to the target,
/// mirroring interpolated slow-node features.
pub fn attributed_receptive_field(
    ag: &AugmentedGraph,
    op: &DiffusionOperator,
    center: NodeId,
    k: usize,
    alpha: f64,
) -> Result<DVector<f64>> {
    let n = ag.original_count();
    if center >= n {
        return Err(Error::param(format!(
            "center {center} is not an original node (< {n})"
        )));
    }
    let full = receptive_field(op, center, k)?;
    Ok(attribute(ag, &full, alpha))
}

fn attribute(ag: &AugmentedGraph, full: &DVector<f64>, alpha: f64) -> DVector<f64> {
    let n = ag.original_count();
    let mut w = full.rows(0, n).into_owned();
    for (s, p) in ag.provenance().iter().enumerate() {
        let mass = full[n + s];
        w[p.source] += alpha * mass;
        w[p.target] += (1.0 - alpha) * mass;
    }
    w
}

/// Center self-weight per round for the plain graph and for the fully
/// half-hopped graph at each `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfWeightTable {
    pub center: NodeId,
    pub self_loops: bool,
    pub alphas: Vec<f64>,
    /// `baseline[k]` for `k = 0..=k_max`.
    pub baseline: Vec<f64>,
    /// `halfhop[a][k]` for alpha index `a`.
    pub halfhop: Vec<Vec<f64>>,
}

impl SelfWeightTable {
    pub fn k_max(&self) -> usize {
        self.baseline.len() - 1
    }
}

/// Self-weight curves with mean aggregation. Half-Hop columns use variant
/// `Hh` with interpolated slow nodes and the attribution of
/// [`attributed_receptive_field`].
pub fn self_weight_curve(
    g: &Graph,
    center: NodeId,
    alphas: &[f64],
    k_max: usize,
    self_loops: bool,
) -> Result<SelfWeightTable> {
    let op = build_operator(g, OperatorKind::MeanRowNorm, self_loops);
    let baseline = rf_self_series(&op, center, k_max, |v| v[center])?;
    let mut halfhop = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let cfg = HalfHopConfig::new(alpha, 1.0)
            .with_variant(Variant::Hh)
            .with_init(SlowInit::Interpolate);
        let ag = half_hop(g, &cfg)?;
        let aug_op = build_operator(ag.graph(), OperatorKind::MeanRowNorm, self_loops);
        halfhop.push(rf_self_series(&aug_op, center, k_max, |v| {
            attribute(&ag, v, alpha)[center]
        })?);
    }
    Ok(SelfWeightTable {
        center,
        self_loops,
        alphas: alphas.to_vec(),
        baseline,
        halfhop,
    })
}

fn rf_self_series(
    op: &DiffusionOperator,
    center: NodeId,
    k_max: usize,
    read: impl Fn(&DVector<f64>) -> f64,
) -> Result<Vec<f64>> {
    let mut v = receptive_field(op, center, 0)?;
    let mut out = vec![read(&v)];
    for _ in 0..k_max {
        v = op.apply_left(&v)?;
        out.push(read(&v));
    }
    Ok(out)
}

/// Original-node features after `0..=k_max` rounds of mean aggregation
/// (self-loops dropped) on the fully half-hopped graph, without building the
/// slow nodes.
///
/// Slow nodes start from interpolated features. Under `Hh1` a slow node only
/// hears its source, under `Hh` it averages source and target, which gives
///
/// ```text
/// x1      = (1 - alpha) r*x0 + alpha L x0
/// Hh1:  x(t+1) = L x(t-1)
/// Hh:   x(t+1) = (L x(t-1) + r*x(t-1)) / 2
/// ```
///
/// with `L` the operator of the input graph and `r` its row indicator.
pub fn half_hop_trajectory(
    op: &DiffusionOperator,
    features: &DMatrix<f64>,
    alpha: f64,
    variant: Variant,
    k_max: usize,
) -> Result<Vec<DMatrix<f64>>> {
    if op.kind() != OperatorKind::MeanRowNorm || op.self_loops() {
        return Err(Error::param(
            "half-hop recurrence needs a mean operator without self-loops",
        ));
    }
    if variant == Variant::Hh2 {
        return Err(Error::param("half-hop recurrence supports variants hh and hh1"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let r = op.row_indicator();
    let mask = |x: &DMatrix<f64>| {
        let mut y = x.clone();
        for (i, mut row) in y.row_iter_mut().enumerate() {
            if r[i] == 0.0 {
                row.fill(0.0);
            }
        }
        y
    };
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(propagate(op, features, 0)?);
    if k_max == 0 {
        return Ok(out);
    }
    let lx = op.apply(&out[0])?;
    out.push(mask(&out[0]) * (1.0 - alpha) + lx * alpha);
    for t in 1..k_max {
        let prev = &out[t - 1];
        let l_prev = op.apply(prev)?;
        let next = match variant {
            Variant::Hh1 => l_prev,
            _ => (l_prev + mask(prev)) * 0.5,
        };
        out.push(next);
    }
    Ok(out)
}

/// Same quantity as [`half_hop_trajectory`] for any configuration, computed on
/// the materialised augmented graph. `cfg.p` is ignored.
pub fn half_hop_trajectory_materialized(
    g: &Graph,
    cfg: &HalfHopConfig,
    kind: OperatorKind,
    self_loops: bool,
    k_max: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let ag = half_hop(g, cfg)?;
    let op = build_operator(ag.graph(), kind, self_loops);
    let n = g.num_nodes();
    Ok(trajectory(&op, ag.graph().features(), k_max)?
        .into_iter()
        .map(|h| h.rows(0, n).into_owned())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{symmetrize, DedupPolicy};
    use crate::synth::grid_graph;

    fn path3() -> Graph {
        let g = Graph::build(3, vec![(0, 1), (1, 2)], DMatrix::identity(3, 3), None, DedupPolicy::Dedup)
            .unwrap();
        symmetrize(&g)
    }

    #[test]
    fn single_undirected_edge_mean_with_loops() {
        let g = symmetrize(
            &Graph::build(2, vec![(0, 1)], DMatrix::identity(2, 2), None, DedupPolicy::Dedup).unwrap(),
        );
        let op = build_operator(&g, OperatorKind::MeanRowNorm, true);
        assert_eq!(op.to_dense(), DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn isolated_node_with_loop_is_unit_row() {
        let g = Graph::build(2, vec![], DMatrix::identity(2, 2), None, DedupPolicy::Dedup).unwrap();
        let op = build_operator(&g, OperatorKind::MeanRowNorm, true);
        assert_eq!(op.to_dense(), DMatrix::identity(2, 2));
        let op = build_operator(&g, OperatorKind::MeanRowNorm, false);
        assert_eq!(op.zero_rows(), &[0, 1]);
        assert_eq!(op.to_dense(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn path_middle_row() {
        let op = build_operator(&path3(), OperatorKind::MeanRowNorm, true);
        for j in 0..3 {
            assert!((op.get(1, j) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(op.get(0, 2), 0.0);
    }

    #[test]
    fn existing_self_loop_weight_kept() {
        let g = Graph::build_weighted(
            2,
            vec![(0, 0), (1, 0)],
            Some(vec![3.0, 1.0]),
            DMatrix::identity(2, 2),
            None,
            DedupPolicy::Dedup,
        )
        .unwrap();
        let op = build_operator(&g, OperatorKind::MeanRowNorm, true);
        assert_eq!(op.get(0, 0), 0.75);
        assert_eq!(op.get(0, 1), 0.25);
        let op = build_operator(&g, OperatorKind::MeanRowNorm, false);
        assert_eq!(op.get(0, 0), 0.0);
        assert_eq!(op.get(0, 1), 1.0);
    }

    #[test]
    fn sym_norm_matches_definition() {
        let g = path3();
        let op = build_operator(&g, OperatorKind::SymNorm, true);
        // degrees with self-loops: 2, 3, 2
        let d = [2.0f64, 3.0, 2.0];
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        let expected = DMatrix::from_fn(3, 3, |i, j| a[(i, j)] / (d[i] * d[j]).sqrt());
        assert!((op.to_dense() - expected).amax() < 1e-15);
        assert_eq!(op.to_dense(), op.to_dense().transpose());
    }

    #[test]
    fn dense_and_sparse_storage_agree() {
        let g = grid_graph(5, 5).unwrap();
        let sparse = build_operator(&g, OperatorKind::MeanRowNorm, true);
        assert!(!sparse.is_dense());
        let mut w = DMatrix::zeros(25, 25);
        for &(s, t) in g.edges() {
            w[(s, t)] = 1.0;
        }
        let dense = DiffusionOperator::from_dense_weights(&w, OperatorKind::MeanRowNorm, true);
        assert!(dense.is_dense());
        assert!((sparse.to_dense() - dense.to_dense()).amax() < 1e-15);
        let h = DMatrix::from_fn(25, 2, |i, j| (i * 3 + j) as f64);
        assert!((sparse.apply(&h).unwrap() - dense.apply(&h).unwrap()).amax() < 1e-12);

        let v = DVector::from_fn(25, |i, _| i as f64);
        assert!((sparse.apply_left(&v).unwrap() - dense.apply_left(&v).unwrap()).amax() < 1e-12);

        let sym_s = build_operator(&g, OperatorKind::SymNorm, false);
        let sym_d = DiffusionOperator::from_dense_weights(&w, OperatorKind::SymNorm, false);
        assert!((sym_s.to_dense() - sym_d.to_dense()).amax() < 1e-15);
    }

    #[test]
    fn propagate_cases() {
        let g = path3();
        let op = build_operator(&g, OperatorKind::MeanRowNorm, true);
        let h = DMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        assert_eq!(propagate(&op, &h, 0).unwrap(), h);

        let ones = DMatrix::from_element(3, 1, 1.0);
        let out = propagate(&op, &ones, 7).unwrap();
        assert!((out - &ones).amax() < 1e-14);

        let out = propagate(&op, &DMatrix::identity(3, 3), 1).unwrap();
        for j in 0..3 {
            assert!((out[(1, j)] - 1.0 / 3.0).abs() < 1e-15);
        }

        assert!(propagate(&op, &DMatrix::zeros(4, 1), 1).is_err());
    }

    #[test]
    fn receptive_field_cases() {
        let op = build_operator(&path3(), OperatorKind::MeanRowNorm, true);
        let rf = receptive_field(&op, 1, 0).unwrap();
        assert_eq!(rf, DVector::from_column_slice(&[0.0, 1.0, 0.0]));
        let rf = receptive_field(&op, 1, 1).unwrap();
        assert!((rf - DVector::from_element(3, 1.0 / 3.0)).amax() < 1e-15);
        assert!(receptive_field(&op, 3, 1).is_err());
    }

    #[test]
    fn receptive_field_is_row_of_power() {
        let g = grid_graph(3, 4).unwrap();
        let op = build_operator(&g, OperatorKind::MeanRowNorm, true);
        let l = op.to_dense();
        let mut p = DMatrix::identity(12, 12);
        for _ in 0..5 {
            p = &p * &l;
        }
        let rf = receptive_field(&op, 5, 5).unwrap();
        assert!((rf.transpose() - p.row(5)).amax() < 1e-14);
    }

    #[test]
    fn grid_self_weight_at_one_step() {
        let g = grid_graph(15, 15).unwrap();
        let t = self_weight_curve(&g, 112, &[0.5], 3, true).unwrap();
        assert_eq!(t.baseline[0], 1.0);
        assert_eq!(t.halfhop[0][0], 1.0);
        assert_eq!(t.baseline[1], 0.2);
        // four slow in-neighbours plus self, each slow node returns half its
        // mass to the center: 1/5 + 4 * 1/5 * 1/2
        assert!((t.halfhop[0][1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn attribution_conserves_mass() {
        let g = grid_graph(5, 5).unwrap();
        let ag = half_hop(&g, &HalfHopConfig::new(0.3, 1.0)).unwrap();
        let op = build_operator(ag.graph(), OperatorKind::MeanRowNorm, true);
        for k in 0..8 {
            let w = attributed_receptive_field(&ag, &op, 12, k, 0.3).unwrap();
            assert!((w.sum() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
        assert!(attributed_receptive_field(&ag, &op, 25, 1, 0.3).is_err());
    }

    fn random_weighted(n: usize, seed: u64) -> Graph {
        use rand::Rng;
        let mut rng = crate::synth::seeded_rng(seed, 9);
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for s in 0..n {
            for t in 0..n {
                if rng.random::<f64>() < 0.3 {
                    edges.push((s, t));
                    weights.push(rng.random::<f64>() * 2.0);
                }
            }
        }
        let x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() - 0.5);
        Graph::build_weighted(n, edges, Some(weights), x, None, DedupPolicy::Dedup).unwrap()
    }

    #[test]
    fn recurrence_matches_materialized_graph() {
        for seed in 0..6 {
            let g = random_weighted(12, seed);
            let op = build_operator(&g, OperatorKind::MeanRowNorm, false);
            for variant in [Variant::Hh, Variant::Hh1] {
                for alpha in [0.0, 0.3, 1.0] {
                    let cfg = HalfHopConfig::new(alpha, 1.0).with_variant(variant);
                    let fast = half_hop_trajectory(&op, g.features(), alpha, variant, 7).unwrap();
                    let slow = half_hop_trajectory_materialized(
                        &g,
                        &cfg,
                        OperatorKind::MeanRowNorm,
                        false,
                        7,
                    )
                    .unwrap();
                    for (a, b) in fast.iter().zip(&slow) {
                        assert!((a - b).amax() < 1e-12, "seed {seed} {variant} alpha {alpha}");
                    }
                }
            }
        }
    }

    #[test]
    fn recurrence_rejects_unsupported_setups() {
        let g = random_weighted(5, 1);
        let op = build_operator(&g, OperatorKind::MeanRowNorm, true);
        assert!(half_hop_trajectory(&op, g.features(), 0.5, Variant::Hh, 2).is_err());
        let op = build_operator(&g, OperatorKind::MeanRowNorm, false);
        assert!(half_hop_trajectory(&op, g.features(), 0.5, Variant::Hh2, 2).is_err());
    }
}
