//! Message-passing matrices.
//!
//! Four fixed propagation matrices and a learned family that interpolates
//! between them:
//!
//! ```text
//! Ã = (pI + (1-p)D_q)^(-1/2) (A + qI) (pI + (1-p)D_q)^(-1/2),   D_q = D_A + qI
//! ```
//!
//! with `p = sigmoid(p_raw)` controlling how much symmetric normalisation is
//! applied and `q = sigmoid(q_raw)` the weight of each vertex's own state.
//! The corners recover the fixed modes:
//!
//! | p | q | matrix              | mode                |
//! |---|---|---------------------|---------------------|
//! | 1 | 0 | A                   | `raw_A`             |
//! | 1 | 1 | A + I               | `A_plus_I`          |
//! | 0 | 0 | D^-½ A D^-½         | `sym_norm_A`        |
//! | 0 | 1 | D̂^-½ (A + I) D̂^-½   | `sym_norm_A_plus_I` |
//!
//! Diagonal entries are clamped to `epsilon` before the inverse square root
//! so isolated vertices never divide by zero.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::degree_matrix;

pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PropagationMode {
    #[serde(rename = "raw_A")]
    RawA,
    #[serde(rename = "A_plus_I")]
    APlusI,
    #[serde(rename = "sym_norm_A")]
    SymNormA,
    #[serde(rename = "sym_norm_A_plus_I")]
    SymNormAPlusI,
    #[serde(rename = "learned")]
    Learned,
}

impl PropagationMode {
    pub const FIXED: [PropagationMode; 4] = [
        PropagationMode::RawA,
        PropagationMode::APlusI,
        PropagationMode::SymNormA,
        PropagationMode::SymNormAPlusI,
    ];

    pub const ALL: [PropagationMode; 5] = [
        PropagationMode::RawA,
        PropagationMode::APlusI,
        PropagationMode::SymNormA,
        PropagationMode::SymNormAPlusI,
        PropagationMode::Learned,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PropagationMode::RawA => "raw_A",
            PropagationMode::APlusI => "A_plus_I",
            PropagationMode::SymNormA => "sym_norm_A",
            PropagationMode::SymNormAPlusI => "sym_norm_A_plus_I",
            PropagationMode::Learned => "learned",
        }
    }

    /// The `(p, q)` corner a fixed mode sits at.
    pub fn corner(self) -> Option<(f64, f64)> {
        match self {
            PropagationMode::RawA => Some((1.0, 0.0)),
            PropagationMode::APlusI => Some((1.0, 1.0)),
            PropagationMode::SymNormA => Some((0.0, 0.0)),
            PropagationMode::SymNormAPlusI => Some((0.0, 1.0)),
            PropagationMode::Learned => None,
        }
    }
}

impl fmt::Display for PropagationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropagationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PropagationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown propagation mode {s:?} (expected one of raw_A, A_plus_I, sym_norm_A, sym_norm_A_plus_I, learned)"
                ))
            })
    }
}

/// Propagation configuration for one layer.
///
/// Only learned specs carry trainable state: the raw logits of `p` and `q`,
/// each stored as a 1x1 matrix so the optimizer can treat them like any
/// other weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationSpec {
    mode: PropagationMode,
    p_raw: DMatrix<f64>,
    q_raw: DMatrix<f64>,
    pub epsilon: f64,
}

impl PropagationSpec {
    /// Fixed mode, or a learned spec at `p = q = 0.5` for [`PropagationMode::Learned`].
    pub fn new(mode: PropagationMode) -> Self {
        PropagationSpec {
            mode,
            p_raw: DMatrix::zeros(1, 1),
            q_raw: DMatrix::zeros(1, 1),
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn learned(p_raw: f64, q_raw: f64) -> Self {
        PropagationSpec {
            mode: PropagationMode::Learned,
            p_raw: DMatrix::from_element(1, 1, p_raw),
            q_raw: DMatrix::from_element(1, 1, q_raw),
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn mode(&self) -> PropagationMode {
        self.mode
    }

    pub fn p_raw(&self) -> f64 {
        self.p_raw[(0, 0)]
    }

    pub fn q_raw(&self) -> f64 {
        self.q_raw[(0, 0)]
    }

    /// Effective `(p, q)`: the sigmoid of the logits in learned mode, the
    /// corner values otherwise.
    pub fn pq(&self) -> (f64, f64) {
        match self.mode.corner() {
            Some(pq) => pq,
            None => (sigmoid(self.p_raw()), sigmoid(self.q_raw())),
        }
    }

    pub fn trainable(&self) -> Vec<&DMatrix<f64>> {
        match self.mode {
            PropagationMode::Learned => vec![&self.p_raw, &self.q_raw],
            _ => Vec::new(),
        }
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        match self.mode {
            PropagationMode::Learned => vec![&mut self.p_raw, &mut self.q_raw],
            _ => Vec::new(),
        }
    }

    /// Builds Ã for `adjacency` on `tape`. `trainable` are the leaves bound
    /// for [`Self::trainable`], in the same order.
    pub fn build(
        &self,
        tape: &mut Tape,
        adjacency: &DMatrix<f64>,
        trainable: &[Var],
    ) -> Result<Var> {
        match self.mode {
            PropagationMode::Learned => {
                let [p_raw, q_raw] = trainable else {
                    return Err(Error::Contract(format!(
                        "learned propagation needs 2 bound parameters, got {}",
                        trainable.len()
                    )));
                };
                build_learned(tape, adjacency, *p_raw, *q_raw, self.epsilon)
            }
            mode => Ok(tape.constant(build_fixed(adjacency, mode, self.epsilon)?)),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_symmetric(adjacency: &DMatrix<f64>) -> Result<()> {
    if !adjacency.is_square() {
        return Err(Error::dim(
            "propagation",
            format!("adjacency is {}x{}", adjacency.nrows(), adjacency.ncols()),
        ));
    }
    if adjacency != &adjacency.transpose() {
        return Err(Error::Contract("adjacency matrix is not symmetric".into()));
    }
    Ok(())
}

/// `D^-½ M D^-½` where `D` holds the row sums of `m`, clamped below at `epsilon`.
fn sym_normalize(m: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    let d = degree_matrix(m)?;
    let s: Vec<f64> = d
        .diagonal()
        .iter()
        .map(|x| x.max(epsilon).sqrt().recip())
        .collect();
    Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        s[i] * m[(i, j)] * s[j]
    }))
}

/// One of the four fixed propagation matrices.
pub fn build_fixed(
    adjacency: &DMatrix<f64>,
    mode: PropagationMode,
    epsilon: f64,
) -> Result<DMatrix<f64>> {
    check_symmetric(adjacency)?;
    let n = adjacency.nrows();
    let with_loops = || adjacency + DMatrix::<f64>::identity(n, n);
    match mode {
        PropagationMode::RawA => Ok(adjacency.clone()),
        PropagationMode::APlusI => Ok(with_loops()),
        PropagationMode::SymNormA => sym_normalize(adjacency, epsilon),
        PropagationMode::SymNormAPlusI => sym_normalize(&with_loops(), epsilon),
        PropagationMode::Learned => Err(Error::Parameter(
            "build_fixed called with the learned mode".into(),
        )),
    }
}

/// The learned propagation matrix as a differentiable function of the
/// 1x1 logits `p_raw` and `q_raw`.
pub fn build_learned(
    tape: &mut Tape,
    adjacency: &DMatrix<f64>,
    p_raw: Var,
    q_raw: Var,
    epsilon: f64,
) -> Result<Var> {
    check_symmetric(adjacency)?;
    let n = adjacency.nrows();
    let degrees = DMatrix::from_iterator(n, 1, adjacency.row_iter().map(|r| r.sum()));

    let p = tape.sigmoid(p_raw);
    let q = tape.sigmoid(q_raw);
    let ones = tape.constant(DMatrix::from_element(n, 1, 1.0));
    let one = tape.constant(DMatrix::from_element(1, 1, 1.0));
    let deg = tape.constant(degrees);

    // pI + (1-p)(D_A + qI), kept as the diagonal vector
    let neg_p = tape.scale(p, -1.0);
    let one_minus_p = tape.add(one, neg_p)?;
    let q_col = tape.scalar_mul(q, ones)?;
    let deg_q = tape.add(deg, q_col)?;
    let blended = tape.scalar_mul(one_minus_p, deg_q)?;
    let p_col = tape.scalar_mul(p, ones)?;
    let diag = tape.add(p_col, blended)?;
    let s = tape.inv_sqrt_clamped(diag, epsilon);

    // diag(s) M diag(s) = M ∘ (s sᵀ)
    let st = tape.transpose(s);
    let outer = tape.matmul(s, st)?;
    let a = tape.constant(adjacency.clone());
    let eye = tape.constant(DMatrix::identity(n, n));
    let q_eye = tape.scalar_mul(q, eye)?;
    let a_q = tape.add(a, q_eye)?;
    tape.hadamard(a_q, outer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::graph::{er_sample, permute, Graph, Permutation};
    use nalgebra::dmatrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn learned_value(adj: &DMatrix<f64>, p_raw: f64, q_raw: f64) -> DMatrix<f64> {
        let mut tape = Tape::new();
        let spec = PropagationSpec::learned(p_raw, q_raw);
        let vars: Vec<Var> = spec
            .trainable()
            .into_iter()
            .map(|m| tape.param(m.clone()))
            .collect();
        let out = spec.build(&mut tape, adj, &vars).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn mode_strings_round_trip() {
        for m in PropagationMode::ALL {
            assert_eq!(m.as_str().parse::<PropagationMode>().unwrap(), m);
        }
        assert!("sym_norm".parse::<PropagationMode>().is_err());
    }

    #[test]
    fn single_edge_renormalized() {
        let a = dmatrix![0.0, 1.0; 1.0, 0.0];
        let m = build_fixed(&a, PropagationMode::SymNormAPlusI, DEFAULT_EPSILON).unwrap();
        assert!((m - DMatrix::from_element(2, 2, 0.5)).abs().max() < 1e-15);
    }

    #[test]
    fn path_sym_norm_a() {
        let a = dmatrix![0.0, 1.0, 0.0; 1.0, 0.0, 1.0; 0.0, 1.0, 0.0];
        let m = build_fixed(&a, PropagationMode::SymNormA, DEFAULT_EPSILON).unwrap();
        let r = 0.5f64.sqrt();
        let expected = dmatrix![0.0, r, 0.0; r, 0.0, r; 0.0, r, 0.0];
        assert!((m - expected).abs().max() < 1e-15);
    }

    #[test]
    fn raw_and_self_loop_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = er_sample(6, 0.5, &mut rng).unwrap();
        let a = g.adjacency();
        assert_eq!(
            &build_fixed(a, PropagationMode::RawA, DEFAULT_EPSILON).unwrap(),
            a
        );
        assert_eq!(
            build_fixed(a, PropagationMode::APlusI, DEFAULT_EPSILON).unwrap(),
            a + DMatrix::identity(6, 6)
        );
        assert!(build_fixed(a, PropagationMode::Learned, DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn asymmetric_adjacency_rejected() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        assert!(matches!(
            build_fixed(&a, PropagationMode::RawA, DEFAULT_EPSILON),
            Err(Error::Contract(_))
        ));
        let mut tape = Tape::new();
        let p = tape.param(DMatrix::zeros(1, 1));
        let q = tape.param(DMatrix::zeros(1, 1));
        assert!(build_learned(&mut tape, &a, p, q, DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn isolated_vertices_stay_finite() {
        let g = Graph::unlabeled(4, &[(0, 1)]).unwrap();
        for mode in PropagationMode::FIXED {
            let m = build_fixed(g.adjacency(), mode, DEFAULT_EPSILON).unwrap();
            assert!(m.iter().all(|x| x.is_finite()), "{mode}");
        }
        for (p, q) in [(-60.0, -60.0), (0.0, 0.0), (60.0, -60.0)] {
            assert!(learned_value(g.adjacency(), p, q)
                .iter()
                .all(|x| x.is_finite()));
        }
    }

    #[test]
    fn saturated_learned_matches_renormalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = er_sample(8, 0.4, &mut rng).unwrap();
        let fixed = build_fixed(
            g.adjacency(),
            PropagationMode::SymNormAPlusI,
            DEFAULT_EPSILON,
        )
        .unwrap();
        let learned = learned_value(g.adjacency(), -40.0, 40.0);
        assert!((fixed - learned).abs().max() < 1e-9);
        let raw = learned_value(g.adjacency(), 40.0, -40.0);
        assert!((raw - g.adjacency()).abs().max() < 1e-9);
    }

    #[test]
    fn all_corners_match_when_saturated() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..10 {
            let g = er_sample(9, 0.25, &mut rng).unwrap();
            for mode in PropagationMode::FIXED {
                let (p, q) = mode.corner().unwrap();
                let to_raw = |x: f64| if x > 0.5 { 60.0 } else { -60.0 };
                let learned = learned_value(g.adjacency(), to_raw(p), to_raw(q));
                let fixed = build_fixed(g.adjacency(), mode, DEFAULT_EPSILON).unwrap();
                assert!((learned - fixed).abs().max() < 1e-9, "{mode}");
            }
        }
    }

    #[test]
    fn learned_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = er_sample(6, 0.5, &mut rng).unwrap();
        let adj = g.adjacency().clone();
        let weights = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let report = finite_difference_check(
            |t, v| {
                let m = build_learned(t, &adj, v[0], v[1], DEFAULT_EPSILON)?;
                let w = t.constant(weights.clone());
                let h = t.hadamard(m, w)?;
                Ok(t.sum(h))
            },
            &[DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
            1e-6,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn learned_spec_exposes_logits() {
        let spec = PropagationSpec::new(PropagationMode::Learned);
        assert_eq!(spec.pq(), (0.5, 0.5));
        assert_eq!(spec.trainable().len(), 2);
        let fixed = PropagationSpec::new(PropagationMode::SymNormA);
        assert!(fixed.trainable().is_empty());
        assert_eq!(fixed.pq(), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn equivariant_and_symmetric(seed in any::<u64>(), n in 1usize..12, p_raw in -4.0f64..4.0, q_raw in -4.0f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = er_sample(n, 0.3, &mut rng).unwrap();
            let perm = Permutation::random(n, &mut rng);
            let h = permute(&g, &perm).unwrap();
            let pm = perm.matrix();
            for mode in PropagationMode::FIXED {
                let a = build_fixed(g.adjacency(), mode, DEFAULT_EPSILON).unwrap();
                let b = build_fixed(h.adjacency(), mode, DEFAULT_EPSILON).unwrap();
                prop_assert!((&pm * &a * pm.transpose() - b).abs().max() < 1e-12);
                prop_assert!((&a - a.transpose()).abs().max() == 0.0);
                prop_assert!(a.iter().all(|x| x.is_finite()));
            }
            let a = learned_value(g.adjacency(), p_raw, q_raw);
            let b = learned_value(h.adjacency(), p_raw, q_raw);
            prop_assert!((&pm * &a * pm.transpose() - b).abs().max() < 1e-12);
            prop_assert!((&a - a.transpose()).abs().max() < 1e-15);
        }
    }
}
