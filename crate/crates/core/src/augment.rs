//! Half-Hop: upsampling a graph by inserting a slow node on directed edges.
//!
//! For a non-self edge `i -> j` a new node `k` is appended and the edge is
//! replaced by a connectivity motif:
//!
//! ```text
//! Hh   i -> k <-> j      edges i->k, j->k, k->j
//! Hh1  i -> k  -> j      edges i->k, k->j
//! Hh2  i <-> k <-> j     edges i->k, k->i, j->k, k->j
//! ```
//!
//! Slow nodes get ids after every original node, in the order of the edges
//! they replace, so original ids are stable across independently sampled
//! views.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Labels, NodeId};
use crate::synth::seeded_rng;

const SAMPLING_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Hh,
    Hh1,
    Hh2,
}

impl Variant {
    /// Edges of the motif per half-hopped edge.
    pub fn edges_per_hop(self) -> usize {
        match self {
            Variant::Hh => 3,
            Variant::Hh1 => 2,
            Variant::Hh2 => 4,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Hh => "hh",
            Variant::Hh1 => "hh1",
            Variant::Hh2 => "hh2",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hh" => Ok(Variant::Hh),
            "hh1" => Ok(Variant::Hh1),
            "hh2" => Ok(Variant::Hh2),
            _ => Err(Error::param(format!("unknown variant `{s}` (hh, hh1, hh2)"))),
        }
    }
}

/// How slow-node features are initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SlowInit {
    /// `(1 - alpha) * x_target + alpha * x_source`
    #[default]
    Interpolate,
    Zero,
    /// i.i.d. uniform on [0, 1) per entry.
    Random,
}

impl fmt::Display for SlowInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlowInit::Interpolate => "interpolate",
            SlowInit::Zero => "zero",
            SlowInit::Random => "random",
        })
    }
}

impl FromStr for SlowInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "interpolate" => Ok(SlowInit::Interpolate),
            "zero" => Ok(SlowInit::Zero),
            "random" => Ok(SlowInit::Random),
            _ => Err(Error::param(format!(
                "unknown init `{s}` (interpolate, zero, random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfHopConfig {
    pub alpha: f64,
    pub p: f64,
    pub variant: Variant,
    pub init: SlowInit,
    pub seed: u64,
}

impl Default for HalfHopConfig {
    fn default() -> Self {
        HalfHopConfig {
            alpha: 0.5,
            p: 1.0,
            variant: Variant::Hh,
            init: SlowInit::Interpolate,
            seed: 0,
        }
    }
}

impl HalfHopConfig {
    pub fn new(alpha: f64, p: f64) -> Self {
        HalfHopConfig {
            alpha,
            p,
            ..Default::default()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_init(mut self, init: SlowInit) -> Self {
        self.init = init;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::param(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param(format!("p must lie in [0, 1], got {}", self.p)));
        }
        Ok(())
    }
}

/// The directed edge a slow node was inserted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlowNode {
    pub source: NodeId,
    pub target: NodeId,
}

/// A half-hopped graph. Nodes `0..original_count` are the input nodes, node
/// `original_count + s` is the slow node described by `provenance[s]`.
/// Labels are held for original nodes only; masks are padded with `false`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph {
    graph: Graph,
    original_count: usize,
    provenance: Vec<SlowNode>,
    labels: Option<Labels>,
}

impl AugmentedGraph {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn original_count(&self) -> usize {
        self.original_count
    }

    pub fn provenance(&self) -> &[SlowNode] {
        &self.provenance
    }

    pub fn num_slow_nodes(&self) -> usize {
        self.provenance.len()
    }

    /// Labels of the original nodes.
    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn is_slow(&self, v: NodeId) -> bool {
        v >= self.original_count
    }

    /// Replaces the node features, e.g. with the output of message passing.
    pub fn set_features(&mut self, features: DMatrix<f64>) -> Result<()> {
        self.graph = self.graph.with_features(features)?;
        Ok(())
    }

    /// Reassembles an augmented graph from its parts, checking that the
    /// provenance is consistent with the node count.
    pub fn from_parts(
        graph: Graph,
        original_count: usize,
        provenance: Vec<SlowNode>,
        labels: Option<Labels>,
    ) -> Result<Self> {
        let ag = AugmentedGraph {
            graph,
            original_count,
            provenance,
            labels,
        };
        ag.check_provenance()?;
        Ok(ag)
    }

    fn check_provenance(&self) -> Result<()> {
        let n = self.original_count;
        if self.graph.num_nodes() != n + self.provenance.len() {
            return Err(Error::Provenance(format!(
                "graph has {} nodes but {} original + {} slow were recorded",
                self.graph.num_nodes(),
                n,
                self.provenance.len()
            )));
        }
        for (s, p) in self.provenance.iter().enumerate() {
            if p.source >= n || p.target >= n {
                return Err(Error::Provenance(format!(
                    "slow node {} refers to edge {} -> {} outside the {} original nodes",
                    n + s,
                    p.source,
                    p.target,
                    n
                )));
            }
            if p.source == p.target {
                return Err(Error::Provenance(format!(
                    "slow node {} records a self-loop on {}",
                    n + s,
                    p.source
                )));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != n {
                return Err(Error::Provenance(format!(
                    "{} labels for {} original nodes",
                    l.len(),
                    n
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic full Half-Hop: every non-self edge is half-hopped (`p` is
/// ignored). Equal to [`half_hop_sampled`] with `p = 1`.
pub fn half_hop(g: &Graph, cfg: &HalfHopConfig) -> Result<AugmentedGraph> {
    half_hop_sampled(g, &HalfHopConfig { p: 1.0, ..*cfg })
}

/// Node-sampled Half-Hop: each node joins the selected set with probability
/// `p` (one Bernoulli draw per node, ascending id) and every non-self edge
/// pointing at a selected node is half-hopped.
pub fn half_hop_sampled(g: &Graph, cfg: &HalfHopConfig) -> Result<AugmentedGraph> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed, SAMPLING_STREAM);
    let selected: Vec<bool> = (0..g.num_nodes())
        .map(|_| rng.random::<f64>() < cfg.p)
        .collect();
    apply(g, &selected, cfg, &mut rng)
}

/// Half-hops the non-self in-edges of every node flagged in `selected`.
pub fn half_hop_nodes(g: &Graph, selected: &[bool], cfg: &HalfHopConfig) -> Result<AugmentedGraph> {
    cfg.validate()?;
    if selected.len() != g.num_nodes() {
        return Err(Error::Dimension {
            context: "selection length vs node count",
            expected: g.num_nodes(),
            found: selected.len(),
        });
    }
    let mut rng = seeded_rng(cfg.seed, SAMPLING_STREAM);
    apply(g, selected, cfg, &mut rng)
}

fn apply<R: Rng>(
    g: &Graph,
    selected: &[bool],
    cfg: &HalfHopConfig,
    rng: &mut R,
) -> Result<AugmentedGraph> {
    let n = g.num_nodes();
    let hopped = |s: NodeId, t: NodeId| s != t && selected[t];
    let m = g.edges().iter().filter(|&&(s, t)| hopped(s, t)).count();
    let per_hop = cfg.variant.edges_per_hop();
    let untouched = g.num_edges() - m;

    let mut edges = Vec::with_capacity(per_hop * m + untouched);
    let mut weights = g.weights().map(|_| Vec::with_capacity(per_hop * m + untouched));
    let mut provenance = Vec::with_capacity(m);

    for (idx, &(i, j)) in g.edges().iter().enumerate() {
        let w = g.weight(idx);
        if !hopped(i, j) {
            edges.push((i, j));
            if let Some(ws) = weights.as_mut() {
                ws.push(w);
            }
            continue;
        }
        let k = n + provenance.len();
        provenance.push(SlowNode {
            source: i,
            target: j,
        });
        let before = edges.len();
        match cfg.variant {
            Variant::Hh => edges.extend([(i, k), (j, k), (k, j)]),
            Variant::Hh1 => edges.extend([(i, k), (k, j)]),
            Variant::Hh2 => edges.extend([(i, k), (k, i), (j, k), (k, j)]),
        }
        if let Some(ws) = weights.as_mut() {
            ws.extend(std::iter::repeat_n(w, edges.len() - before));
        }
    }

    let x = g.features();
    let dim = x.ncols();
    let mut features = DMatrix::zeros(n + m, dim);
    features.rows_mut(0, n).copy_from(x);
    match cfg.init {
        SlowInit::Interpolate => {
            let a = cfg.alpha;
            for (s, p) in provenance.iter().enumerate() {
                let row = x.row(p.target) * (1.0 - a) + x.row(p.source) * a;
                features.row_mut(n + s).copy_from(&row);
            }
        }
        SlowInit::Zero => {}
        SlowInit::Random => {
            for s in 0..m {
                for c in 0..dim {
                    features[(n + s, c)] = rng.random::<f64>();
                }
            }
        }
    }

    let masks: BTreeMap<String, Vec<bool>> = g
        .masks()
        .iter()
        .map(|(name, mask)| {
            let mut padded = mask.clone();
            padded.resize(n + m, false);
            (name.clone(), padded)
        })
        .collect();

    let graph = Graph::from_parts_unchecked(n + m, edges, weights, features, None, masks);
    Ok(AugmentedGraph {
        graph,
        original_count: n,
        provenance,
        labels: g.labels().cloned(),
    })
}

/// Collapses every slow node back onto the edge it came from and returns the
/// original-node graph carrying the current feature rows of the original
/// nodes. Edge order of the input is restored exactly.
pub fn strip_slow_nodes(ag: &AugmentedGraph) -> Result<Graph> {
    ag.check_provenance()?;
    let n = ag.original_count;
    let g = &ag.graph;
    let mut restored = vec![false; ag.provenance.len()];
    let mut edges = Vec::with_capacity(g.num_edges());
    let mut weights = g.weights().map(|_| Vec::with_capacity(g.num_edges()));

    for (idx, &(s, t)) in g.edges().iter().enumerate() {
        let keep = match (s < n, t < n) {
            (true, true) => Some((s, t)),
            (true, false) => {
                let slot = t - n;
                let p = ag.provenance[slot];
                if p.source == s {
                    if restored[slot] {
                        return Err(Error::Provenance(format!(
                            "slow node {t} has more than one edge from its source {s}"
                        )));
                    }
                    restored[slot] = true;
                    Some((p.source, p.target))
                } else if p.target == s {
                    None
                } else {
                    return Err(Error::Provenance(format!(
                        "edge {s} -> {t} does not touch the recorded edge {} -> {}",
                        p.source, p.target
                    )));
                }
            }
            (false, true) => {
                let p = ag.provenance[s - n];
                if t != p.source && t != p.target {
                    return Err(Error::Provenance(format!(
                        "edge {s} -> {t} does not touch the recorded edge {} -> {}",
                        p.source, p.target
                    )));
                }
                None
            }
            (false, false) => {
                return Err(Error::Provenance(format!(
                    "edge {s} -> {t} joins two slow nodes"
                )))
            }
        };
        if let Some(e) = keep {
            edges.push(e);
            if let Some(ws) = weights.as_mut() {
                ws.push(g.weight(idx));
            }
        }
    }
    if let Some(slot) = restored.iter().position(|r| !r) {
        return Err(Error::Provenance(format!(
            "slow node {} has no edge from its source",
            n + slot
        )));
    }

    let features = g.features().rows(0, n).into_owned();
    let masks = g
        .masks()
        .iter()
        .map(|(name, mask)| (name.clone(), mask[..n].to_vec()))
        .collect();
    let labels = ag.labels.as_ref().map(|l| l.truncated(n));
    Ok(Graph::from_parts_unchecked(
        n, edges, weights, features, labels, masks,
    ))
}

/// Two independent node-sampled views of `g`. Original node ids coincide in
/// both views, so positive pairs are simply equal ids below `g.num_nodes()`.
pub fn make_views(
    g: &Graph,
    first: &HalfHopConfig,
    second: &HalfHopConfig,
) -> Result<(AugmentedGraph, AugmentedGraph)> {
    Ok((half_hop_sampled(g, first)?, half_hop_sampled(g, second)?))
}

/// Derives two view seeds from one base seed.
pub fn split_seed(base: u64) -> (u64, u64) {
    let mut rng = seeded_rng(base, SAMPLING_STREAM + 1);
    (rng.random(), rng.random())
}
