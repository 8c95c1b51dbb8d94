//! The five-marker graph, its normalized Laplacian and Chebyshev spectral
//! filtering.
//!
//! Node `i` (0-based) carries marker number `i + 1`. The markers form a
//! weighted 5-cycle where the closing edge between markers 5 and 1 has a
//! larger weight than the four others.

mod eigen;

pub use eigen::{jacobi_eigen, SymmetricEigen};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Number of markers sewn on a stent segment.
pub const MARKER_COUNT: usize = 5;

/// Weight of the cycle edges 1-2, 2-3, 3-4 and 4-5.
pub fn chain_edge_weight() -> f64 {
    (-(5.0f64 / 4.0).powi(2)).exp()
}

/// Weight of the closing edge 5-1.
pub fn closing_edge_weight() -> f64 {
    (-(5.0f64 / 8.0).powi(2)).exp()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {node} has zero degree; the normalized Laplacian is undefined")]
    ZeroDegreeNode { node: usize },
    #[error("adjacency matrix is invalid: {0}")]
    InvalidAdjacency(String),
    #[error("dimension mismatch: expected {expected} rows, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("filter needs at least one coefficient")]
    EmptyFilter,
}

/// Signal on the graph nodes: one row per node, one column per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures(pub DMatrix<f64>);

impl NodeFeatures {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(nodes: usize, channels: usize) -> Self {
        Self(DMatrix::zeros(nodes, channels))
    }

    pub fn nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn channels(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Weighted undirected graph with its spectral data cached.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct MarkerGraph {
    weights: DMatrix<f64>,
    degree: DVector<f64>,
    laplacian: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    lambda_max: f64,
    scaled_laplacian: DMatrix<f64>,
}

/// The shipped five-marker graph.
pub fn build_marker_graph() -> MarkerGraph {
    let a = chain_edge_weight();
    let b = closing_edge_weight();
    let mut w = DMatrix::zeros(MARKER_COUNT, MARKER_COUNT);
    for i in 0..MARKER_COUNT - 1 {
        w[(i, i + 1)] = a;
        w[(i + 1, i)] = a;
    }
    w[(0, MARKER_COUNT - 1)] = b;
    w[(MARKER_COUNT - 1, 0)] = b;
    MarkerGraph::from_weights(w).expect("the marker graph is connected")
}

fn validate_adjacency(w: &DMatrix<f64>) -> Result<(), GraphError> {
    let n = w.nrows();
    if n != w.ncols() || n == 0 {
        return Err(GraphError::InvalidAdjacency(format!(
            "expected a non-empty square matrix, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    for i in 0..n {
        if w[(i, i)] != 0.0 {
            return Err(GraphError::InvalidAdjacency(format!("non-zero diagonal at {i}")));
        }
        for j in 0..n {
            let v = w[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(GraphError::InvalidAdjacency(format!(
                    "entry ({i}, {j}) = {v} is not a finite non-negative weight"
                )));
            }
            if v != w[(j, i)] {
                return Err(GraphError::InvalidAdjacency(format!("not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// `D^{-1/2} (D - W) D^{-1/2}` for a symmetric non-negative adjacency.
pub fn normalized_laplacian(w: &DMatrix<f64>) -> Result<DMatrix<f64>, GraphError> {
    validate_adjacency(w)?;
    let n = w.nrows();
    let degree: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    if let Some(node) = degree.iter().position(|&d| d <= 0.0) {
        return Err(GraphError::ZeroDegreeNode { node });
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let dw = if i == j { degree[i] - w[(i, j)] } else { -w[(i, j)] };
        inv_sqrt[i] * dw * inv_sqrt[j]
    }))
}

impl MarkerGraph {
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self, GraphError> {
        let laplacian = normalized_laplacian(&weights)?;
        let n = weights.nrows();
        let degree = DVector::from_iterator(n, (0..n).map(|i| weights.row(i).sum()));
        let eig = jacobi_eigen(&laplacian);
        let lambda_max = eig.values[n - 1];
        if lambda_max <= 0.0 {
            return Err(GraphError::InvalidAdjacency("graph has no edges".into()));
        }
        let scaled_laplacian = &laplacian * (2.0 / lambda_max) - DMatrix::identity(n, n);
        Ok(Self {
            weights,
            degree,
            laplacian,
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
            lambda_max,
            scaled_laplacian,
        })
    }

    pub fn node_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Diagonal of the degree matrix.
    pub fn degree(&self) -> &DVector<f64> {
        &self.degree
    }

    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degree)
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Eigenvalues of the normalized Laplacian, ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns, matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `2 L / λ_max − I`.
    pub fn scaled_laplacian(&self) -> &DMatrix<f64> {
        &self.scaled_laplacian
    }

    fn check_rows(&self, rows: usize) -> Result<(), GraphError> {
        if rows != self.node_count() {
            return Err(GraphError::DimensionMismatch {
                expected: self.node_count(),
                found: rows,
            });
        }
        Ok(())
    }

    /// Chebyshev basis signals `T_k(L̃) F` for `k = 0..order`, built with the
    /// three-term recursion using matrix-vector products only.
    pub fn chebyshev_basis(&self, features: &DMatrix<f64>, order: usize) -> Result<Vec<DMatrix<f64>>, GraphError> {
        self.check_rows(features.nrows())?;
        let mut basis = Vec::with_capacity(order);
        if order == 0 {
            return Ok(basis);
        }
        basis.push(features.clone());
        if order > 1 {
            basis.push(&self.scaled_laplacian * features);
        }
        for k in 2..order {
            let next = (&self.scaled_laplacian * &basis[k - 1]) * 2.0 - &basis[k - 2];
            basis.push(next);
        }
        Ok(basis)
    }

    /// `Σ_k T_k(L̃) G_k` by Clenshaw's recurrence; used for backpropagating
    /// through a Chebyshev filter since `T_k(L̃)` is symmetric.
    pub fn chebyshev_combine(&self, terms: &[DMatrix<f64>]) -> Result<DMatrix<f64>, GraphError> {
        let Some(first) = terms.first() else {
            return Err(GraphError::EmptyFilter);
        };
        self.check_rows(first.nrows())?;
        let zeros = DMatrix::zeros(first.nrows(), first.ncols());
        let mut b1 = zeros.clone();
        let mut b2 = zeros;
        for term in terms.iter().skip(1).rev() {
            self.check_rows(term.nrows())?;
            let b0 = term + (&self.scaled_laplacian * &b1) * 2.0 - &b2;
            b2 = b1;
            b1 = b0;
        }
        Ok(first + &self.scaled_laplacian * &b1 - b2)
    }
}

/// Chebyshev-parametrized spectral filter `Σ_k θ_k T_k(L̃) F`.
///
/// Applied independently to each channel of `features`.
pub fn chebyshev_apply(graph: &MarkerGraph, theta: &[f64], features: &NodeFeatures) -> Result<NodeFeatures, GraphError> {
    if theta.is_empty() {
        return Err(GraphError::EmptyFilter);
    }
    graph.check_rows(features.nodes())?;
    let l = graph.scaled_laplacian();
    let mut prev = features.0.clone();
    let mut out = &prev * theta[0];
    if theta.len() == 1 {
        return Ok(NodeFeatures(out));
    }
    let mut curr = l * &prev;
    out += &curr * theta[1];
    for &coef in &theta[2..] {
        let next = (l * &curr) * 2.0 - &prev;
        out += &next * coef;
        prev = curr;
        curr = next;
    }
    Ok(NodeFeatures(out))
}

/// Chebyshev polynomial `T_k(x)` by the three-term recursion.
fn chebyshev_scalar(theta: &[f64], x: f64) -> f64 {
    let mut prev = 1.0;
    let mut curr = x;
    let mut sum = theta[0];
    if theta.len() > 1 {
        sum += theta[1] * x;
    }
    for &coef in theta.iter().skip(2) {
        let next = 2.0 * x * curr - prev;
        sum += coef * next;
        prev = curr;
        curr = next;
    }
    sum
}

/// Reference filter evaluated in the graph Fourier basis: `U ĝ(Λ) Uᵀ F`.
///
/// Intended as a test oracle for [`chebyshev_apply`].
pub fn spectral_conv_direct(graph: &MarkerGraph, theta: &[f64], features: &NodeFeatures) -> Result<NodeFeatures, GraphError> {
    if theta.is_empty() {
        return Err(GraphError::EmptyFilter);
    }
    graph.check_rows(features.nodes())?;
    let u = graph.eigenvectors();
    let response = graph
        .eigenvalues()
        .map(|lambda| chebyshev_scalar(theta, 2.0 * lambda / graph.lambda_max() - 1.0));
    let spectrum = u.transpose() * features.values();
    let filtered = DMatrix::from_diagonal(&response) * spectrum;
    Ok(NodeFeatures(u * filtered))
}
