//! Weighted undirected communication graphs: Laplacian construction,
//! connectivity checks and the spectral quantities used by the controller
//! parameter bounds, plus the positive definite matrix satisfying
//! `Gamma * L = Pi` used inside the Lyapunov function.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

const ZERO_EIG_TOL: f64 = 1e-9;

/// Weighted undirected graph with precomputed Laplacian and spectrum.
///
/// The spectrum is sorted ascending; for a connected graph the smallest
/// eigenvalue is (numerically) zero and the second smallest is the algebraic
/// connectivity.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    n: usize,
    adjacency: DMatrix<f64>,
    laplacian: DMatrix<f64>,
    spectrum: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl NetworkGraph {
    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Laplacian eigenvalues, ascending.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Algebraic connectivity (second smallest Laplacian eigenvalue).
    pub fn lambda2(&self) -> f64 {
        if self.n >= 2 {
            self.spectrum[1]
        } else {
            0.0
        }
    }

    /// Largest Laplacian eigenvalue.
    pub fn lambda_max(&self) -> f64 {
        *self.spectrum.last().unwrap()
    }

    /// Weighted out-degree of node `i` (row sum of the adjacency matrix).
    pub fn d_out(&self, i: usize) -> f64 {
        self.adjacency.row(i).sum()
    }

    /// Neighbors of `i` with their edge weights.
    pub fn neighbors(&self, i: usize) -> Vec<(usize, f64)> {
        (0..self.n)
            .filter(|&j| self.adjacency[(i, j)] > 0.0)
            .map(|j| (j, self.adjacency[(i, j)]))
            .collect()
    }
}

/// Build a graph from an edge list. Edges are undirected; each pair may
/// appear at most once and self-loops are rejected.
pub fn build_graph(n: usize, edges: &[(usize, usize, f64)]) -> Result<NetworkGraph> {
    let mut adjacency = DMatrix::zeros(n, n);
    for &(i, j, w) in edges {
        if i >= n || j >= n {
            return Err(Error::NodeOutOfRange(i, j, n));
        }
        if i == j {
            return Err(Error::SelfLoop(i));
        }
        if w <= 0.0 {
            return Err(Error::NonPositiveWeight(i, j, w));
        }
        if adjacency[(i, j)] != 0.0 {
            return Err(Error::DuplicateEdge(i, j));
        }
        adjacency[(i, j)] = w;
        adjacency[(j, i)] = w;
    }
    Ok(from_parts(n, adjacency))
}

/// Build a graph from a dense adjacency matrix, validating symmetry and a
/// zero diagonal.
pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<NetworkGraph> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "adjacency matrix must be square, got {}x{}",
            adjacency.nrows(),
            adjacency.ncols()
        )));
    }
    for i in 0..n {
        if adjacency[(i, i)] != 0.0 {
            return Err(Error::SelfLoop(i));
        }
        for j in (i + 1)..n {
            if adjacency[(i, j)] != adjacency[(j, i)] {
                return Err(Error::AsymmetricAdjacency(i, j));
            }
            if adjacency[(i, j)] < 0.0 {
                return Err(Error::NonPositiveWeight(i, j, adjacency[(i, j)]));
            }
        }
    }
    Ok(from_parts(n, adjacency))
}

fn from_parts(n: usize, adjacency: DMatrix<f64>) -> NetworkGraph {
    let degrees = DVector::from_iterator(n, (0..n).map(|i| adjacency.row(i).sum()));
    let laplacian = DMatrix::from_diagonal(&degrees) - &adjacency;
    let eig = SymmetricEigen::new(laplacian.clone());
    // sort eigenpairs ascending
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let spectrum: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        eigenvectors.set_column(col, &eig.eigenvectors.column(k));
    }
    NetworkGraph {
        n,
        adjacency,
        laplacian,
        spectrum,
        eigenvectors,
    }
}

/// Path connectivity by breadth-first search over positive-weight edges.
///
/// This is the authoritative check; `lambda2 > 0` is the spectral
/// cross-validation of the same property.
pub fn is_connected(g: &NetworkGraph) -> bool {
    let n = g.n;
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for (j, seen_j) in seen.iter_mut().enumerate() {
            if !*seen_j && g.adjacency[(i, j)] > 0.0 {
                *seen_j = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

/// Spectral connectivity test: algebraic connectivity strictly positive.
pub fn is_connected_spectral(g: &NetworkGraph) -> bool {
    g.n == 1 || (g.n >= 2 && g.lambda2() > ZERO_EIG_TOL)
}

/// Positive definite matrix `Gamma` with `Gamma * L = L * Gamma = Pi`,
/// where `Pi = I - (1/N) * ones * ones^T`.
///
/// Its eigenvalues are `lambda_gamma` (on the consensus direction) together
/// with the reciprocals of the nonzero Laplacian eigenvalues.
#[derive(Debug, Clone)]
pub struct GammaMatrix {
    pub matrix: DMatrix<f64>,
    pub lambda_gamma: f64,
}

/// Construct `Gamma` by eigendecomposition of the Laplacian:
/// the consensus eigenvector gets eigenvalue `lambda_gamma`, every other
/// eigenvector `v_k` gets `1 / lambda_k`.
pub fn gamma_matrix(g: &NetworkGraph, lambda_gamma: f64) -> Result<GammaMatrix> {
    if lambda_gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda_gamma must be positive, got {lambda_gamma}"
        )));
    }
    if !is_connected(g) {
        return Err(Error::Disconnected);
    }
    let n = g.n;
    let mut matrix = DMatrix::zeros(n, n);
    for k in 0..n {
        let v = g.eigenvectors.column(k);
        let scale = if g.spectrum[k].abs() <= ZERO_EIG_TOL {
            lambda_gamma
        } else {
            1.0 / g.spectrum[k]
        };
        matrix += scale * v * v.transpose();
    }
    Ok(GammaMatrix {
        matrix,
        lambda_gamma,
    })
}

/// Projector `Pi = I - (1/N) * ones * ones^T` onto the disagreement space.
pub fn disagreement_projector(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}
