//! Network topologies and consensus (mixing) matrices.
//!
//! A [`ConsensusMatrix`] is always symmetric, doubly stochastic and supported
//! on the edges of its [`Graph`] plus the diagonal. Its eigenvalues and the
//! spectral quantity `beta = max(|λ₂|, |λ_N|)` are computed once at
//! construction.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Tolerance for symmetry and row/column sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Tolerance for the unit eigenvalue and the open end of the spectrum.
pub const SPECTRAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected: node {0} unreachable from node 0")]
    Disconnected(usize),
}

/// Reasons an explicit matrix is rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixViolation {
    #[error("dimension mismatch: matrix is {rows}x{cols}, graph has {n} nodes")]
    Dimension { rows: usize, cols: usize, n: usize },
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("symmetry violated at ({i}, {j}): {a} vs {b}")]
    Symmetry { i: usize, j: usize, a: f64, b: f64 },
    #[error("negative entry {value} at ({i}, {j})")]
    Negative { i: usize, j: usize, value: f64 },
    #[error("sparsity violated: positive entry {value} at non-edge ({i}, {j})")]
    Sparsity { i: usize, j: usize, value: f64 },
    #[error("doubly stochastic violated: row {index} sums to {sum}")]
    RowSum { index: usize, sum: f64 },
    #[error("doubly stochastic violated: column {index} sums to {sum}")]
    ColumnSum { index: usize, sum: f64 },
    #[error("spectrum violated: {0}")]
    Spectrum(String),
}

/// Undirected, connected graph without self-loops or duplicate edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Validates and builds a graph. Edges are stored normalized as `(min, max)`.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::InvalidTopology("graph needs at least one node".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut normalized = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::NodeOutOfRange(u, v, n));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            let e = (u.min(v), u.max(v));
            if adjacency[e.0].contains(&e.1) {
                return Err(GraphError::DuplicateEdge(e.0, e.1));
            }
            adjacency[e.0].push(e.1);
            adjacency[e.1].push(e.0);
            normalized.push(e);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        let g = Self { n, edges: normalized, adjacency };
        if let Some(unreached) = g.first_unreachable() {
            return Err(GraphError::Disconnected(unreached));
        }
        Ok(g)
    }

    /// Cycle over `n >= 3` nodes with edges `(i, (i + 1) mod n)`.
    pub fn ring(n: usize) -> Result<Self, GraphError> {
        if n < 3 {
            return Err(GraphError::InvalidTopology(format!("ring needs n >= 3, got {n}")));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::new(n, &edges)
    }

    /// Star with hub 0 and leaves `1..n`.
    pub fn star(n: usize) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::InvalidTopology(format!("star needs n >= 2, got {n}")));
        }
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::new(n, &edges)
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::InvalidTopology(format!("path needs n >= 2, got {n}")));
        }
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Self::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbors of `i`, excluding `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.adjacency[i].binary_search(&j).is_ok()
    }

    /// Number of directed transmissions when every node sends one message to
    /// each neighbor.
    pub fn directed_edge_count(&self) -> usize {
        2 * self.edges.len()
    }

    fn first_unreachable(&self) -> Option<usize> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().position(|s| !s)
    }
}

/// Symmetric doubly stochastic mixing matrix with cached spectrum.
#[derive(Debug, Clone)]
pub struct ConsensusMatrix {
    graph: Graph,
    entries: DMatrix<f64>,
    /// Nonzero entries of each row as `(column, weight)`, ascending column,
    /// including the diagonal.
    support: Vec<Vec<(usize, f64)>>,
    /// Eigenvalues sorted descending.
    eigenvalues: Vec<f64>,
    beta: f64,
}

impl ConsensusMatrix {
    /// Metropolis weights: `W[i][j] = 1 / (1 + max(deg i, deg j))` on edges,
    /// diagonal fills each row to 1.
    pub fn metropolis(graph: &Graph) -> Result<Self, MatrixViolation> {
        let n = graph.n();
        let mut w = DMatrix::<f64>::zeros(n, n);
        for &(i, j) in graph.edges() {
            let weight = 1.0 / (1.0 + graph.degree(i).max(graph.degree(j)) as f64);
            w[(i, j)] = weight;
            w[(j, i)] = weight;
        }
        for i in 0..n {
            let off: f64 = graph.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
            w[(i, i)] = 1.0 - off;
        }
        Self::from_dmatrix(graph.clone(), w)
    }

    /// Validates user-supplied entries against `graph`.
    pub fn explicit(entries: &[Vec<f64>], graph: &Graph) -> Result<Self, MatrixViolation> {
        let n = graph.n();
        let rows = entries.len();
        if rows != n {
            return Err(MatrixViolation::Dimension { rows, cols: entries.first().map_or(0, Vec::len), n });
        }
        if let Some(bad) = entries.iter().find(|r| r.len() != n) {
            return Err(MatrixViolation::Dimension { rows, cols: bad.len(), n });
        }
        let w = DMatrix::from_fn(n, n, |i, j| entries[i][j]);
        Self::from_dmatrix(graph.clone(), w)
    }

    fn from_dmatrix(graph: Graph, w: DMatrix<f64>) -> Result<Self, MatrixViolation> {
        let n = graph.n();
        for i in 0..n {
            for j in 0..n {
                let v = w[(i, j)];
                if !v.is_finite() {
                    return Err(MatrixViolation::NonFinite(i, j));
                }
                if (v - w[(j, i)]).abs() > STOCHASTIC_TOL {
                    return Err(MatrixViolation::Symmetry { i, j, a: v, b: w[(j, i)] });
                }
                if v < 0.0 {
                    return Err(MatrixViolation::Negative { i, j, value: v });
                }
                if v > 0.0 && i != j && !graph.has_edge(i, j) {
                    return Err(MatrixViolation::Sparsity { i, j, value: v });
                }
            }
        }
        for i in 0..n {
            let row: f64 = w.row(i).iter().sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MatrixViolation::RowSum { index: i, sum: row });
            }
            let col: f64 = w.column(i).iter().sum();
            if (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MatrixViolation::ColumnSum { index: i, sum: col });
            }
        }

        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(w.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let top = eigenvalues[0];
        if (top - 1.0).abs() > SPECTRAL_TOL {
            return Err(MatrixViolation::Spectrum(format!("largest eigenvalue {top} is not 1")));
        }
        if n > 1 && eigenvalues[1] > 1.0 - SPECTRAL_TOL {
            return Err(MatrixViolation::Spectrum(format!(
                "eigenvalue 1 is not simple (second eigenvalue {})",
                eigenvalues[1]
            )));
        }
        let bottom = eigenvalues[n - 1];
        if bottom <= -1.0 + SPECTRAL_TOL {
            return Err(MatrixViolation::Spectrum(format!("smallest eigenvalue {bottom} not above -1")));
        }
        let beta = if n == 1 { 0.0 } else { eigenvalues[1].abs().max(bottom.abs()) };

        let support = (0..n).map(|i| (0..n).filter(|&j| w[(i, j)] > 0.0).map(|j| (j, w[(i, j)])).collect()).collect();
        Ok(Self { graph, entries: w, support, eigenvalues, beta })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.entries.row(i).iter().copied().collect()).collect()
    }

    /// Positive entries of row `i` in ascending column order, diagonal included.
    pub fn row_support(&self, i: usize) -> &[(usize, f64)] {
        &self.support[i]
    }

    /// Eigenvalues sorted descending; the first is 1.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Smallest eigenvalue `λ_N(W)`.
    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }

    /// `max(|λ₂|, |λ_N|)`, in `[0, 1)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Applies `W` to per-node vectors: `out_i = Σ_j W[i][j] x_j`, summing
    /// over the row support in ascending column order.
    pub fn mix(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| {
                let mut acc = vec![0.0; x[i].len()];
                for &(j, w) in self.row_support(i) {
                    for (a, v) in acc.iter_mut().zip(&x[j]) {
                        *a += w * v;
                    }
                }
                acc
            })
            .collect()
    }
}

/// Free-function form of [`ConsensusMatrix::beta`].
pub fn spectral_beta(w: &ConsensusMatrix) -> f64 {
    w.beta()
}

impl fmt::Display for ConsensusMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n() {
            let row: Vec<String> = self.entries.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", row.join(", "))?;
        }
        Ok(())
    }
}
