//! Random graph primitives: G(n, p) sampling and degree-preserving rewiring.

use nalgebra::DMatrix;
use rand::Rng;

use super::Graph;
use crate::error::{Error, Result};

/// Samples an Erdős–Rényi graph: every unordered pair is an edge
/// independently with probability `p_edge`. The result has no feature columns.
pub fn er_sample<R: Rng + ?Sized>(n: usize, p_edge: f64, rng: &mut R) -> Result<Graph> {
    if n == 0 {
        return Err(Error::Parameter("er_sample needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p_edge) {
        return Err(Error::Parameter(format!(
            "edge probability {p_edge} outside [0, 1]"
        )));
    }
    let mut adj = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            // gen::<f64>() is in [0, 1), so p = 0 and p = 1 are exact
            if rng.gen::<f64>() < p_edge {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
    }
    Graph::new(adj, DMatrix::zeros(n, 0), 0)
}

/// One degree-preserving double edge swap.
///
/// Draws two distinct edges (the second in a random orientation) up to
/// `max_tries` times and applies the first valid swap
/// `(a,b),(c,d) -> (a,d),(c,b)`. Returns a copy of `g` when no valid swap
/// turns up, including when `g` has fewer than two edges.
pub fn double_edge_swap<R: Rng + ?Sized>(g: &Graph, rng: &mut R, max_tries: usize) -> Graph {
    let edges = g.edges();
    if edges.len() < 2 {
        return g.clone();
    }
    for _ in 0..max_tries {
        let i = rng.gen_range(0..edges.len());
        let mut j = rng.gen_range(0..edges.len() - 1);
        if j >= i {
            j += 1;
        }
        let first = edges[i];
        let (c, d) = edges[j];
        let second = if rng.gen::<bool>() { (c, d) } else { (d, c) };
        if let Some(out) = g.swap_edges(first, second) {
            return out;
        }
    }
    g.clone()
}
