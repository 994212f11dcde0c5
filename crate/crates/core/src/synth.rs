//! Synthetic graphs: the planar grid and the latent-space random graph model.
//!
//! All randomness goes through ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`, with a fixed stream per purpose, so a seed reproduces the
//! same sample on every platform.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DedupPolicy, Graph, Labels};

const LATENT_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 1;

/// Deterministic generator for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// 4-neighbour lattice with node id `r * cols + c`, both edge directions and
/// a single all-ones feature column.
pub fn grid_graph(rows: usize, cols: usize) -> Result<Graph> {
    if rows == 0 || cols == 0 {
        return Err(Error::param(format!(
            "grid dimensions must be positive, got {rows}x{cols}"
        )));
    }
    let n = rows * cols;
    let mut edges = Vec::with_capacity(4 * n);
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
                edges.push((v + 1, v));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
                edges.push((v + cols, v));
            }
        }
    }
    Graph::build(n, edges, DMatrix::from_element(n, 1, 1.0), None, DedupPolicy::Keep)
}

/// Parameters of the latent-space model: `z ~ N(0, sigma)`, observed features
/// `x = projection^T z`, labels `y = z . beta_star`, edge weights
/// `epsilon + exp(-|z_i - z_j|^2 / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatentModelRepr", into = "LatentModelRepr")]
pub struct LatentModel {
    sigma: DMatrix<f64>,
    projection: DMatrix<f64>,
    beta_star: DVector<f64>,
    epsilon: f64,
    ridge_gamma: f64,
}

impl LatentModel {
    pub fn new(
        sigma: DMatrix<f64>,
        projection: DMatrix<f64>,
        beta_star: DVector<f64>,
        epsilon: f64,
        ridge_gamma: f64,
    ) -> Result<Self> {
        let d = sigma.nrows();
        if d == 0 || sigma.ncols() != d {
            return Err(Error::param(format!(
                "sigma must be square and non-empty, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > 1e-10 * sigma.amax().max(1.0) {
            return Err(Error::param("sigma is not symmetric"));
        }
        let min_eig = sigma.clone().symmetric_eigenvalues().min();
        if !(min_eig > 0.0) {
            return Err(Error::param(format!(
                "sigma must be positive definite (smallest eigenvalue {min_eig:e})"
            )));
        }
        if projection.nrows() != d || projection.ncols() == 0 {
            return Err(Error::Dimension {
                context: "projection rows vs latent dimension",
                expected: d,
                found: projection.nrows(),
            });
        }
        if beta_star.len() != d {
            return Err(Error::Dimension {
                context: "beta_star length vs latent dimension",
                expected: d,
                found: beta_star.len(),
            });
        }
        if beta_star.iter().chain(projection.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("beta_star and projection must be finite"));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::param(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if !(ridge_gamma > 0.0) || !ridge_gamma.is_finite() {
            return Err(Error::param(format!(
                "ridge_gamma must be > 0, got {ridge_gamma}"
            )));
        }
        Ok(LatentModel {
            sigma: (&sigma + sigma.transpose()) * 0.5,
            projection,
            beta_star,
            epsilon,
            ridge_gamma,
        })
    }

    /// Diagonal covariance, identity projection.
    pub fn diagonal(
        variances: &[f64],
        beta_star: &[f64],
        epsilon: f64,
        ridge_gamma: f64,
    ) -> Result<Self> {
        let d = variances.len();
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
            DMatrix::identity(d, d),
            DVector::from_column_slice(beta_star),
            epsilon,
            ridge_gamma,
        )
    }

    pub fn latent_dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn beta_star(&self) -> &DVector<f64> {
        &self.beta_star
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn ridge_gamma(&self) -> f64 {
        self.ridge_gamma
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(
            self.sigma.clone(),
            self.projection.clone(),
            self.beta_star.clone(),
            epsilon,
            self.ridge_gamma,
        )
    }

    /// Kernel weight between two latent positions.
    pub fn kernel(&self, zi: &[f64], zj: &[f64]) -> f64 {
        let sq: f64 = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
        self.epsilon + (-0.5 * sq).exp()
    }
}

#[derive(Serialize, Deserialize)]
struct LatentModelRepr {
    sigma: Vec<Vec<f64>>,
    projection: Vec<Vec<f64>>,
    beta_star: Vec<f64>,
    epsilon: f64,
    ridge_gamma: f64,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<LatentModel> for LatentModelRepr {
    fn from(m: LatentModel) -> Self {
        LatentModelRepr {
            sigma: rows_of(&m.sigma),
            projection: rows_of(&m.projection),
            beta_star: m.beta_star.iter().copied().collect(),
            epsilon: m.epsilon,
            ridge_gamma: m.ridge_gamma,
        }
    }
}

impl TryFrom<LatentModelRepr> for LatentModel {
    type Error = String;

    fn try_from(r: LatentModelRepr) -> std::result::Result<Self, String> {
        LatentModel::new(
            matrix_from_rows(&r.sigma)?,
            matrix_from_rows(&r.projection)?,
            DVector::from_vec(r.beta_star),
            r.epsilon,
            r.ridge_gamma,
        )
        .map_err(|e| e.to_string())
    }
}

/// One draw from the latent model. The weight matrix is dense and symmetric
/// with `W_ii = epsilon + 1`; whether the diagonal takes part in aggregation
/// is decided by the diffusion self-loop policy.
#[derive(Debug, Clone)]
pub struct LatentSample {
    pub latents: DMatrix<f64>,
    pub weights: DMatrix<f64>,
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
}

impl LatentSample {
    /// Computes weights, features and labels for given latent positions
    /// (one row per node).
    pub fn from_latents(model: &LatentModel, latents: DMatrix<f64>) -> Result<Self> {
        if latents.ncols() != model.latent_dim() {
            return Err(Error::Dimension {
                context: "latent columns vs latent dimension",
                expected: model.latent_dim(),
                found: latents.ncols(),
            });
        }
        let n = latents.nrows();
        let rows: Vec<Vec<f64>> = rows_of(&latents);
        let mut weights = DMatrix::zeros(n, n);
        for i in 0..n {
            weights[(i, i)] = model.epsilon + 1.0;
            for j in (i + 1)..n {
                let w = model.kernel(&rows[i], &rows[j]);
                weights[(i, j)] = w;
                weights[(j, i)] = w;
            }
        }
        let features = &latents * &model.projection;
        let labels = (&latents * &model.beta_star).iter().copied().collect();
        Ok(LatentSample {
            latents,
            weights,
            features,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.latents.nrows()
    }

    /// Dense weighted edge list, row-major, diagonal included, with real labels.
    pub fn to_graph(&self) -> Result<Graph> {
        let n = self.num_nodes();
        let mut edges = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                edges.push((i, j));
                weights.push(self.weights[(i, j)]);
            }
        }
        Graph::build_weighted(
            n,
            edges,
            Some(weights),
            self.features.clone(),
            Some(Labels::Real(self.labels.clone())),
            DedupPolicy::Keep,
        )
    }
}

/// Draws `n` latent positions i.i.d. from `N(0, sigma)` via the Cholesky
/// factor of sigma, node by node.
pub fn sample_latent_graph(model: &LatentModel, n: usize, seed: u64) -> Result<LatentSample> {
    if n < 2 {
        return Err(Error::param(format!("latent graph needs n >= 2, got {n}")));
    }
    let d = model.latent_dim();
    let chol = model
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("sample_latent_graph", "sigma is not positive definite"))?;
    let lower = chol.l();
    let mut rng = seeded_rng(seed, LATENT_STREAM);
    let mut latents = DMatrix::zeros(n, d);
    let mut g = DVector::zeros(d);
    for i in 0..n {
        for v in g.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let z = &lower * &g;
        latents.row_mut(i).copy_from(&z.transpose());
    }
    LatentSample::from_latents(model, latents)
}

/// Disjoint, exhaustive train/test masks with `round(train_fraction * n)`
/// training nodes chosen by a seeded shuffle.
pub fn split_masks(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<bool>, Vec<bool>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param(format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::param(format!(
            "train fraction {train_fraction} of {n} nodes leaves an empty split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed, SPLIT_STREAM));
    let mut train = vec![false; n];
    for &i in &order[..n_train] {
        train[i] = true;
    }
    let test = train.iter().map(|t| !t).collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::degree_view;

    #[test]
    fn grid_small_cases() {
        let g = grid_graph(1, 2).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.edges(), &[(0, 1), (1, 0)]);

        let g = grid_graph(2, 2).unwrap();
        assert_eq!(g.num_nodes(), 4);
        assert_eq!(g.num_edges(), 8);

        let g = grid_graph(3, 3).unwrap();
        let d = degree_view(&g);
        assert_eq!(d.undirected_neighbors[4].len(), 4);
        assert_eq!(d.undirected_neighbors[0].len(), 2);
        assert!(g.features().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn grid_rejects_zero_dimension() {
        assert!(grid_graph(0, 3).is_err());
        assert!(grid_graph(3, 0).is_err());
    }

    fn model2() -> LatentModel {
        LatentModel::diagonal(&[1.0, 1.0], &[1.0, 0.0], 0.1, 0.5).unwrap()
    }

    #[test]
    fn model_validation() {
        assert!(LatentModel::diagonal(&[1.0, -1.0], &[1.0, 0.0], 0.1, 0.5).is_err());
        assert!(LatentModel::diagonal(&[1.0, 1.0], &[1.0, 0.0], -0.1, 0.5).is_err());
        assert!(LatentModel::diagonal(&[1.0, 1.0], &[1.0, 0.0], 0.1, 0.0).is_err());
        assert!(LatentModel::diagonal(&[1.0, 1.0], &[1.0], 0.1, 0.5).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(LatentModel::new(
            asym,
            DMatrix::identity(2, 2),
            DVector::from_element(2, 1.0),
            0.1,
            0.5
        )
        .is_err());
    }

    #[test]
    fn model_json_roundtrip() {
        let m = model2();
        let s = serde_json::to_string(&m).unwrap();
        let back: LatentModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let bad = s.replace("\"ridge_gamma\":0.5", "\"ridge_gamma\":-1.0");
        assert!(serde_json::from_str::<LatentModel>(&bad).is_err());
    }

    #[test]
    fn coincident_latents_get_full_weight() {
        let m = model2();
        let z = DMatrix::from_row_slice(3, 2, &[0.3, -0.2, 0.3, -0.2, 50.0, 50.0]);
        let s = LatentSample::from_latents(&m, z).unwrap();
        assert_eq!(s.weights[(0, 1)], 1.1);
        // far apart: kernel underflows to the offset
        assert_eq!(s.weights[(0, 2)], 0.1);
        assert_eq!(s.weights[(1, 1)], 1.1);
    }

    #[test]
    fn identity_projection_labels_are_first_coordinate() {
        let s = sample_latent_graph(&model2(), 50, 7).unwrap();
        for i in 0..50 {
            assert_eq!(s.labels[i], s.latents[(i, 0)]);
            assert_eq!(s.features[(i, 0)], s.latents[(i, 0)]);
            assert_eq!(s.features[(i, 1)], s.latents[(i, 1)]);
        }
    }

    #[test]
    fn weights_symmetric_and_bounded() {
        let m = LatentModel::diagonal(&[2.0, 0.5, 1.0], &[1.0, 1.0, 1.0], 0.2, 0.1).unwrap();
        let s = sample_latent_graph(&m, 80, 3).unwrap();
        assert_eq!(s.weights, s.weights.transpose());
        for i in 0..80 {
            for j in 0..80 {
                let w = s.weights[(i, j)];
                assert!((0.2..=1.2).contains(&w));
            }
        }
        assert_eq!(s.features, &s.latents * m.projection());
    }

    #[test]
    fn same_seed_same_sample() {
        let m = model2();
        let a = sample_latent_graph(&m, 30, 11).unwrap();
        let b = sample_latent_graph(&m, 30, 11).unwrap();
        let c = sample_latent_graph(&m, 30, 12).unwrap();
        assert_eq!(a.latents, b.latents);
        assert_eq!(a.weights, b.weights);
        assert_ne!(a.latents, c.latents);
    }

    #[test]
    fn sample_needs_two_nodes() {
        assert!(sample_latent_graph(&model2(), 1, 0).is_err());
    }

    #[test]
    fn empirical_covariance_converges() {
        let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 0.5]);
        let m = LatentModel::new(
            sigma.clone(),
            DMatrix::identity(3, 3),
            DVector::from_element(3, 1.0),
            0.1,
            0.1,
        )
        .unwrap();
        let n = 1500;
        let s = sample_latent_graph(&m, n, 5).unwrap();
        let emp = s.latents.transpose() * &s.latents / n as f64;
        let err = (emp - sigma).norm();
        assert!(err <= 3.0 * 3.0 / (n as f64).sqrt(), "frobenius error {err}");
    }

    #[test]
    fn to_graph_is_dense() {
        let s = sample_latent_graph(&model2(), 4, 1).unwrap();
        let g = s.to_graph().unwrap();
        assert_eq!(g.num_edges(), 16);
        assert!(matches!(g.labels(), Some(Labels::Real(_))));
    }

    #[test]
    fn split_cases() {
        let (tr, te) = split_masks(10, 0.5, 3).unwrap();
        assert_eq!(tr.iter().filter(|&&b| b).count(), 5);
        assert!(tr.iter().zip(&te).all(|(a, b)| a != b));
        assert_eq!(split_masks(10, 0.5, 3).unwrap(), (tr, te));

        let (tr, _) = split_masks(4, 0.25, 9).unwrap();
        assert_eq!(tr.iter().filter(|&&b| b).count(), 1);

        assert!(split_masks(10, 0.0, 1).is_err());
        assert!(split_masks(10, 1.0, 1).is_err());
        assert!(split_masks(10, 0.01, 1).is_err());
    }
}
