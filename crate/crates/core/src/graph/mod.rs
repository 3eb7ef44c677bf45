//! Simple undirected graphs with dense adjacency and per-vertex features.
//!
//! A [`Graph`] is immutable once built. Everything that changes a graph
//! (relabelling, rewiring, attaching features) returns a new value.

mod random;
mod wl;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub use random::{double_edge_swap, er_sample};
pub use wl::{wl_hash, WlHash};

/// A simple undirected graph with a feature row per vertex and a class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    features: DMatrix<f64>,
    label: usize,
}

impl Graph {
    /// Validates and wraps an adjacency matrix and feature matrix.
    ///
    /// The adjacency must be square, symmetric, 0/1 valued and have a zero
    /// diagonal; `features` must have one row per vertex (zero columns is
    /// allowed for graphs whose features are assigned later).
    pub fn new(adjacency: DMatrix<f64>, features: DMatrix<f64>, label: usize) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 {
            return Err(Error::Parameter("a graph needs at least one vertex".into()));
        }
        if adjacency.ncols() != n {
            return Err(Error::dim(
                "Graph::new",
                format!("adjacency is {}x{}", n, adjacency.ncols()),
            ));
        }
        if features.nrows() != n {
            return Err(Error::dim(
                "Graph::new",
                format!("{} feature rows for {} vertices", features.nrows(), n),
            ));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::Contract(format!("self-loop at vertex {i}")));
            }
            for j in (i + 1)..n {
                let a = adjacency[(i, j)];
                if a != 0.0 && a != 1.0 {
                    return Err(Error::Contract(format!(
                        "adjacency entry ({i},{j}) = {a} is not 0 or 1"
                    )));
                }
                if a != adjacency[(j, i)] {
                    return Err(Error::Contract(format!(
                        "adjacency is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Graph {
            adjacency,
            features,
            label,
        })
    }

    /// Builds a graph from an undirected edge list over `n` vertices.
    ///
    /// Repeated edges and self-loops are rejected.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        features: DMatrix<f64>,
        label: usize,
    ) -> Result<Self> {
        let mut adjacency = DMatrix::zeros(n, n);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Parameter(format!(
                    "edge ({a},{b}) out of range for {n} vertices"
                )));
            }
            if a == b {
                return Err(Error::Contract(format!("self-loop at vertex {a}")));
            }
            if adjacency[(a, b)] != 0.0 {
                return Err(Error::Contract(format!("parallel edge ({a},{b})")));
            }
            adjacency[(a, b)] = 1.0;
            adjacency[(b, a)] = 1.0;
        }
        Graph::new(adjacency, features, label)
    }

    /// Structure-only graph: `n` vertices, no feature columns, label 0.
    pub fn unlabeled(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Graph::from_edges(n, edges, DMatrix::zeros(n, 0), 0)
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    /// Edges as `(i, j)` pairs with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.num_vertices();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[(a, b)] != 0.0
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_vertices()).filter(move |&u| self.adjacency[(v, u)] != 0.0)
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_vertices())
            .map(|v| self.neighbors(v).count())
            .collect()
    }

    /// Degrees in ascending order; equal for graphs with the same degree multiset.
    pub fn sorted_degrees(&self) -> Vec<usize> {
        let mut d = self.degrees();
        d.sort_unstable();
        d
    }

    pub fn with_features(self, features: DMatrix<f64>) -> Result<Self> {
        if features.nrows() != self.num_vertices() {
            return Err(Error::dim(
                "Graph::with_features",
                format!(
                    "{} feature rows for {} vertices",
                    features.nrows(),
                    self.num_vertices()
                ),
            ));
        }
        Ok(Graph { features, ..self })
    }

    pub fn with_label(self, label: usize) -> Self {
        Graph { label, ..self }
    }

    /// Replaces edges `(a,b)` and `(c,d)` by `(a,d)` and `(c,b)`.
    ///
    /// Returns `None` unless both input edges exist, the four endpoints are
    /// distinct and neither replacement edge is already present.
    pub fn swap_edges(&self, (a, b): (usize, usize), (c, d): (usize, usize)) -> Option<Graph> {
        let n = self.num_vertices();
        if [a, b, c, d].iter().any(|&v| v >= n) {
            return None;
        }
        if a == b || a == c || a == d || b == c || b == d || c == d {
            return None;
        }
        if !self.has_edge(a, b) || !self.has_edge(c, d) {
            return None;
        }
        if self.has_edge(a, d) || self.has_edge(c, b) {
            return None;
        }
        let mut adj = self.adjacency.clone();
        for (x, y, w) in [(a, b, 0.0), (c, d, 0.0), (a, d, 1.0), (c, b, 1.0)] {
            adj[(x, y)] = w;
            adj[(y, x)] = w;
        }
        Some(Graph {
            adjacency: adj,
            features: self.features.clone(),
            label: self.label,
        })
    }
}

/// A bijection on `0..n`, used to relabel vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &m in &mapping {
            if m >= mapping.len() || seen[m] {
                return Err(Error::Parameter(format!(
                    "{mapping:?} is not a permutation"
                )));
            }
            seen[m] = true;
        }
        Ok(Permutation { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            mapping: (0..n).collect(),
        }
    }

    /// Uniformly random permutation (Fisher-Yates).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut mapping: Vec<usize> = (0..n).collect();
        mapping.shuffle(rng);
        Permutation { mapping }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// Image of `i`.
    pub fn apply(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.mapping.len()];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m] = i;
        }
        Permutation { mapping: inv }
    }

    /// The matrix `P` with `P[perm(i)][i] = 1`, so that `P·X` moves row `i` to `perm(i)`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut p = DMatrix::zeros(n, n);
        for (i, &m) in self.mapping.iter().enumerate() {
            p[(m, i)] = 1.0;
        }
        p
    }

    /// Moves row `i` of `m` to row `perm(i)`.
    pub fn permute_rows(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.len() {
            return Err(Error::dim(
                "permute_rows",
                format!("{} rows, permutation of {}", m.nrows(), self.len()),
            ));
        }
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (i, &pi) in self.mapping.iter().enumerate() {
            out.set_row(pi, &m.row(i));
        }
        Ok(out)
    }
}

/// Diagonal matrix of row sums.
pub fn degree_matrix(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !adjacency.is_square() {
        return Err(Error::dim(
            "degree_matrix",
            format!("adjacency is {}x{}", adjacency.nrows(), adjacency.ncols()),
        ));
    }
    let sums: Vec<f64> = adjacency.row_iter().map(|r| r.sum()).collect();
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sums)))
}

/// Relabels the vertices of `g`: vertex `i` becomes `perm(i)`.
pub fn permute(g: &Graph, perm: &Permutation) -> Result<Graph> {
    let n = g.num_vertices();
    if perm.len() != n {
        return Err(Error::dim(
            "permute",
            format!("permutation of {} for {} vertices", perm.len(), n),
        ));
    }
    let mut adjacency = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            adjacency[(perm.apply(i), perm.apply(j))] = g.adjacency[(i, j)];
        }
    }
    Ok(Graph {
        adjacency,
        features: perm.permute_rows(&g.features)?,
        label: g.label,
    })
}
