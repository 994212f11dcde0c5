//! Graph representation, validation and graph-level statistics.
//!
//! A [`Graph`] is a directed edge list over dense 0-based node ids with one
//! feature row per node. Edge weights default to 1. Graphs are immutable once
//! built; every transform in this crate returns a fresh graph.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Per-node targets: integer classes or real regression values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Class(Vec<i64>),
    Real(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class(v) => v.len(),
            Labels::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Labels as reals (class ids are cast).
    pub fn to_real(&self) -> Vec<f64> {
        match self {
            Labels::Class(v) => v.iter().map(|&c| c as f64).collect(),
            Labels::Real(v) => v.clone(),
        }
    }

    pub(crate) fn truncated(&self, n: usize) -> Labels {
        match self {
            Labels::Class(v) => Labels::Class(v[..n].to_vec()),
            Labels::Real(v) => Labels::Real(v[..n].to_vec()),
        }
    }
}

/// What to do with repeated `(source, target)` pairs at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DedupPolicy {
    /// Keep the first occurrence of each directed pair.
    #[default]
    Dedup,
    /// Keep every edge as given.
    Keep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(NodeId, NodeId)>,
    weights: Option<Vec<f64>>,
    features: DMatrix<f64>,
    labels: Option<Labels>,
    masks: BTreeMap<String, Vec<bool>>,
}

impl Graph {
    /// Builds an unweighted graph.
    pub fn build(
        num_nodes: usize,
        edges: Vec<(NodeId, NodeId)>,
        features: DMatrix<f64>,
        labels: Option<Labels>,
        policy: DedupPolicy,
    ) -> Result<Self> {
        Self::build_weighted(num_nodes, edges, None, features, labels, policy)
    }

    /// Builds a graph with optional per-edge weights. With [`DedupPolicy::Dedup`]
    /// the weight of the first occurrence of a repeated edge is kept.
    pub fn build_weighted(
        num_nodes: usize,
        edges: Vec<(NodeId, NodeId)>,
        weights: Option<Vec<f64>>,
        features: DMatrix<f64>,
        labels: Option<Labels>,
        policy: DedupPolicy,
    ) -> Result<Self> {
        for (index, &(s, t)) in edges.iter().enumerate() {
            if s >= num_nodes || t >= num_nodes {
                return Err(Error::EdgeOutOfRange {
                    index,
                    source_node: s,
                    target: t,
                    num_nodes,
                });
            }
        }
        if features.nrows() != num_nodes {
            return Err(Error::Dimension {
                context: "feature rows vs node count",
                expected: num_nodes,
                found: features.nrows(),
            });
        }
        if let Some(w) = &weights {
            if w.len() != edges.len() {
                return Err(Error::Dimension {
                    context: "edge weights vs edge count",
                    expected: edges.len(),
                    found: w.len(),
                });
            }
            if let Some((index, &weight)) = w
                .iter()
                .enumerate()
                .find(|(_, w)| !w.is_finite() || **w < 0.0)
            {
                return Err(Error::InvalidWeight { index, weight });
            }
        }
        if let Some(l) = &labels {
            if l.len() != num_nodes {
                return Err(Error::Dimension {
                    context: "label count vs node count",
                    expected: num_nodes,
                    found: l.len(),
                });
            }
        }

        let (edges, weights) = match policy {
            DedupPolicy::Keep => (edges, weights),
            DedupPolicy::Dedup => dedup_edges(edges, weights),
        };

        Ok(Graph {
            num_nodes,
            edges,
            weights,
            features,
            labels,
            masks: BTreeMap::new(),
        })
    }

    /// Attaches a named boolean mask. Masks must cover every node and be
    /// pairwise disjoint.
    pub fn with_mask(mut self, name: impl Into<String>, mask: Vec<bool>) -> Result<Self> {
        let name = name.into();
        if mask.len() != self.num_nodes {
            return Err(Error::Dimension {
                context: "mask length vs node count",
                expected: self.num_nodes,
                found: mask.len(),
            });
        }
        for (other, existing) in &self.masks {
            if other == &name {
                continue;
            }
            if let Some(node) = (0..self.num_nodes).find(|&i| mask[i] && existing[i]) {
                return Err(Error::OverlappingMasks {
                    first: other.clone(),
                    second: name,
                    node,
                });
            }
        }
        self.masks.insert(name, mask);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::Dimension {
                context: "label count vs node count",
                expected: self.num_nodes,
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Returns a copy with the feature matrix replaced (same node count).
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Self> {
        if features.nrows() != self.num_nodes {
            return Err(Error::Dimension {
                context: "feature rows vs node count",
                expected: self.num_nodes,
                found: features.nrows(),
            });
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    /// Weight of edge `index` (1 for unweighted graphs).
    pub fn weight(&self, index: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[index])
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn masks(&self) -> &BTreeMap<String, Vec<bool>> {
        &self.masks
    }

    pub fn mask(&self, name: &str) -> Option<&[bool]> {
        self.masks.get(name).map(Vec::as_slice)
    }

    pub(crate) fn from_parts_unchecked(
        num_nodes: usize,
        edges: Vec<(NodeId, NodeId)>,
        weights: Option<Vec<f64>>,
        features: DMatrix<f64>,
        labels: Option<Labels>,
        masks: BTreeMap<String, Vec<bool>>,
    ) -> Self {
        debug_assert_eq!(features.nrows(), num_nodes);
        Graph {
            num_nodes,
            edges,
            weights,
            features,
            labels,
            masks,
        }
    }
}

fn dedup_edges(
    edges: Vec<(NodeId, NodeId)>,
    weights: Option<Vec<f64>>,
) -> (Vec<(NodeId, NodeId)>, Option<Vec<f64>>) {
    let mut seen = HashSet::with_capacity(edges.len());
    let mut kept_edges = Vec::with_capacity(edges.len());
    let mut kept_weights = weights.as_ref().map(|w| Vec::with_capacity(w.len()));
    for (i, e) in edges.into_iter().enumerate() {
        if seen.insert(e) {
            kept_edges.push(e);
            if let (Some(kw), Some(w)) = (kept_weights.as_mut(), weights.as_ref()) {
                kw.push(w[i]);
            }
        }
    }
    (kept_edges, kept_weights)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeView {
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
    /// Neighbors with edge direction ignored. A node is never its own
    /// undirected neighbor, so self-loops only show up in the directed degrees.
    pub undirected_neighbors: Vec<BTreeSet<NodeId>>,
}

pub fn degree_view(g: &Graph) -> DegreeView {
    let n = g.num_nodes();
    let mut in_degree = vec![0; n];
    let mut out_degree = vec![0; n];
    let mut undirected_neighbors = vec![BTreeSet::new(); n];
    for &(s, t) in g.edges() {
        out_degree[s] += 1;
        in_degree[t] += 1;
        if s != t {
            undirected_neighbors[s].insert(t);
            undirected_neighbors[t].insert(s);
        }
    }
    DegreeView {
        in_degree,
        out_degree,
        undirected_neighbors,
    }
}

/// Node homophily ratio: the mean, over nodes with at least one undirected
/// neighbor, of the fraction of neighbors sharing the node's class.
/// Isolated nodes are left out of the average.
pub fn homophily_ratio(g: &Graph) -> Result<f64> {
    let labels = match g.labels() {
        None => return Err(Error::MissingLabels),
        Some(Labels::Real(_)) => return Err(Error::RealLabels),
        Some(Labels::Class(c)) => c,
    };
    let view = degree_view(g);
    let mut total = 0.0;
    let mut counted = 0usize;
    for (v, nbrs) in view.undirected_neighbors.iter().enumerate() {
        if nbrs.is_empty() {
            continue;
        }
        let same = nbrs.iter().filter(|&&w| labels[w] == labels[v]).count();
        total += same as f64 / nbrs.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::AllIsolated);
    }
    Ok(total / counted as f64)
}

/// Adds the reverse of every edge that lacks one. Surviving edges keep their
/// order; added reverse edges follow, in the order of the edges that caused
/// them, carrying the same weight.
pub fn symmetrize(g: &Graph) -> Graph {
    let present: HashSet<(NodeId, NodeId)> = g.edges().iter().copied().collect();
    let mut edges = Vec::with_capacity(g.num_edges() * 2);
    let mut weights = g.weights().map(|_| Vec::with_capacity(g.num_edges() * 2));
    let mut seen = HashSet::with_capacity(g.num_edges() * 2);
    for (i, &e) in g.edges().iter().enumerate() {
        if seen.insert(e) {
            edges.push(e);
            if let Some(w) = weights.as_mut() {
                w.push(g.weight(i));
            }
        }
    }
    for (i, &(s, t)) in g.edges().iter().enumerate() {
        let rev = (t, s);
        if !present.contains(&rev) && seen.insert(rev) {
            edges.push(rev);
            if let Some(w) = weights.as_mut() {
                w.push(g.weight(i));
            }
        }
    }
    Graph {
        num_nodes: g.num_nodes,
        edges,
        weights,
        features: g.features.clone(),
        labels: g.labels.clone(),
        masks: g.masks.clone(),
    }
}
