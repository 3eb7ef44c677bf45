//! Graph classifiers: PiNet attention pooling and two GCN baselines.
//!
//! Every model exposes its weights as an ordered list of matrices
//! ([`Model::parameters`]). A forward pass binds those matrices as leaves on
//! a fresh [`Tape`], so the same list drives the optimizer and the
//! finite-difference checker.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::propagation::{PropagationMode, PropagationSpec};

/// Anything that maps a graph to a row of class probabilities.
pub trait Model: Clone + Send + Sync {
    fn parameters(&self) -> Vec<&DMatrix<f64>>;

    fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>>;

    /// Records the forward pass for `graph`. `params` are leaves holding
    /// [`Model::parameters`], in order. Returns a 1 x C probability row.
    fn forward(&self, tape: &mut Tape, params: &[Var], graph: &Graph) -> Result<Var>;

    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.parameters()
            .into_iter()
            .map(|p| tape.param(p.clone()))
            .collect()
    }

    /// Class probabilities for `graph`.
    fn predict(&self, graph: &Graph) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .parameters()
            .into_iter()
            .map(|p| tape.constant(p.clone()))
            .collect();
        let out = self.forward(&mut tape, &vars, graph)?;
        Ok(tape.value(out).iter().copied().collect())
    }

    fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}

/// Glorot-uniform matrix: entries drawn from U(-l, l), l = √(6/(fan_in + fan_out)).
pub fn glorot_uniform<R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Parameter(format!(
            "weight matrix {fan_in}x{fan_out} has a zero dimension"
        )));
    }
    let limit = glorot_limit(fan_in, fan_out);
    let dist = Uniform::new_inclusive(-limit, limit);
    // fill row by row so the draw order does not depend on storage order
    let mut m = DMatrix::zeros(fan_in, fan_out);
    for i in 0..fan_in {
        for j in 0..fan_out {
            m[(i, j)] = dist.sample(rng);
        }
    }
    Ok(m)
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Two-layer graph convolution, `relu(Ã relu(Ã X W0) W1)`, with its own
/// propagation spec per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnHead {
    pub w0: DMatrix<f64>,
    pub w1: DMatrix<f64>,
    pub props: [PropagationSpec; 2],
}

impl GcnHead {
    pub fn init<R: Rng + ?Sized>(
        features: usize,
        hidden1: usize,
        hidden2: usize,
        mode: PropagationMode,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(GcnHead {
            w0: glorot_uniform(features, hidden1, rng)?,
            w1: glorot_uniform(hidden1, hidden2, rng)?,
            props: [PropagationSpec::new(mode), PropagationSpec::new(mode)],
        })
    }

    pub fn output_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn parameters(&self) -> Vec<&DMatrix<f64>> {
        let mut out = vec![&self.w0, &self.w1];
        for p in &self.props {
            out.extend(p.trainable());
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out = vec![&mut self.w0, &mut self.w1];
        for p in &mut self.props {
            out.extend(p.trainable_mut());
        }
        out
    }

    fn param_count(&self) -> usize {
        2 + self
            .props
            .iter()
            .map(|p| p.trainable().len())
            .sum::<usize>()
    }

    /// N x h₂ vertex embeddings. `vars` holds the leaves for [`Self::parameters`].
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], graph: &Graph) -> Result<Var> {
        if vars.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "head expects {} bound parameters, got {}",
                self.param_count(),
                vars.len()
            )));
        }
        if graph.feature_dim() != self.w0.nrows() {
            return Err(Error::dim(
                "gcn_head",
                format!(
                    "graph has {} feature columns, first layer expects {}",
                    graph.feature_dim(),
                    self.w0.nrows()
                ),
            ));
        }
        let (w0, w1) = (vars[0], vars[1]);
        let first_len = self.props[0].trainable().len();
        let first_vars = &vars[2..2 + first_len];
        let second_vars = &vars[2 + first_len..];

        let x = tape.constant(graph.features().clone());
        let a0 = self.props[0].build(tape, graph.adjacency(), first_vars)?;
        let xw = tape.matmul(x, w0)?;
        let h = tape.matmul(a0, xw)?;
        let h = tape.relu(h);

        let a1 = self.props[1].build(tape, graph.adjacency(), second_vars)?;
        let hw = tape.matmul(h, w1)?;
        let h = tape.matmul(a1, hw)?;
        Ok(tape.relu(h))
    }

    /// Learned `(p, q)` per layer, `None` for fixed layers.
    pub fn learned_pq(&self) -> [Option<(f64, f64)>; 2] {
        self.props.clone().map(|p| match p.mode() {
            PropagationMode::Learned => Some(p.pq()),
            _ => None,
        })
    }
}

/// Attention pooling over two message-passing heads:
///
/// ```text
/// z(G) = softmax( rows( softmax(ψ_A(A, X)ᵀ) · ψ_X(A, X) ) · W_D )
/// ```
///
/// The inner softmax runs over vertices for every attention dimension, so
/// each row of the h₂ᴬ x N attention matrix is a distribution over vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct PiNet {
    pub head_attention: GcnHead,
    pub head_features: GcnHead,
    /// (h₂ᴬ · h₂ˣ) x C
    pub dense: DMatrix<f64>,
}

impl PiNet {
    fn split<'a>(&self, vars: &'a [Var]) -> Result<(&'a [Var], &'a [Var], Var)> {
        let na = self.head_attention.param_count();
        let nx = self.head_features.param_count();
        if vars.len() != na + nx + 1 {
            return Err(Error::Contract(format!(
                "PiNet expects {} bound parameters, got {}",
                na + nx + 1,
                vars.len()
            )));
        }
        Ok((&vars[..na], &vars[na..na + nx], vars[na + nx]))
    }

    /// Attention matrix (h₂ᴬ x N) for `graph`; every row sums to one.
    pub fn attention(&self, graph: &Graph) -> Result<DMatrix<f64>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .parameters()
            .into_iter()
            .map(|p| tape.constant(p.clone()))
            .collect();
        let (va, _, _) = self.split(&vars)?;
        let ha = self.head_attention.forward(&mut tape, va, graph)?;
        let hat = tape.transpose(ha);
        let m = tape.row_softmax(hat);
        Ok(tape.value(m).clone())
    }
}

impl Model for PiNet {
    fn parameters(&self) -> Vec<&DMatrix<f64>> {
        let mut out = self.head_attention.parameters();
        out.extend(self.head_features.parameters());
        out.push(&self.dense);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out = self.head_attention.parameters_mut();
        out.extend(self.head_features.parameters_mut());
        out.push(&mut self.dense);
        out
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], graph: &Graph) -> Result<Var> {
        let (va, vx, dense) = self.split(params)?;
        let ha = self.head_attention.forward(tape, va, graph)?;
        let hx = self.head_features.forward(tape, vx, graph)?;
        let hat = tape.transpose(ha);
        let attention = tape.row_softmax(hat);
        let pooled = tape.matmul(attention, hx)?;
        let v = tape.flatten_rows(pooled);
        let logits = tape.matmul(v, dense)?;
        Ok(tape.row_softmax(logits))
    }
}

/// GCN followed by the mean of the vertex embeddings and a dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnMean {
    pub head: GcnHead,
    /// h₂ x C
    pub dense: DMatrix<f64>,
}

impl Model for GcnMean {
    fn parameters(&self) -> Vec<&DMatrix<f64>> {
        let mut out = self.head.parameters();
        out.push(&self.dense);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out = self.head.parameters_mut();
        out.push(&mut self.dense);
        out
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], graph: &Graph) -> Result<Var> {
        let (dense, head) = params
            .split_last()
            .ok_or_else(|| Error::Contract("no bound parameters".into()))?;
        let h = self.head.forward(tape, head, graph)?;
        let pooled = tape.mean_rows(h);
        let logits = tape.matmul(pooled, *dense)?;
        Ok(tape.row_softmax(logits))
    }
}

/// GCN whose vertex embeddings are zero-padded to `max_vertices` rows,
/// concatenated and fed to a dense layer. Depends on vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnDense {
    pub head: GcnHead,
    /// (max_vertices · h₂) x C
    pub dense: DMatrix<f64>,
    pub max_vertices: usize,
}

impl Model for GcnDense {
    fn parameters(&self) -> Vec<&DMatrix<f64>> {
        let mut out = self.head.parameters();
        out.push(&self.dense);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out = self.head.parameters_mut();
        out.push(&mut self.dense);
        out
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], graph: &Graph) -> Result<Var> {
        if graph.num_vertices() > self.max_vertices {
            return Err(Error::Capacity {
                vertices: graph.num_vertices(),
                capacity: self.max_vertices,
            });
        }
        let (dense, head) = params
            .split_last()
            .ok_or_else(|| Error::Contract("no bound parameters".into()))?;
        let h = self.head.forward(tape, head, graph)?;
        let padded = tape.pad_rows(h, self.max_vertices)?;
        let v = tape.flatten_rows(padded);
        let logits = tape.matmul(v, *dense)?;
        Ok(tape.row_softmax(logits))
    }
}

/// Model names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// PiNet with the configured propagation mode.
    #[serde(rename = "pinet-gcn")]
    PinetGcn,
    /// PiNet with learned `(p, q)` in every layer of both heads.
    #[serde(rename = "pinet-gcn-learned")]
    PinetGcnLearned,
    #[serde(rename = "gcn-mean")]
    GcnMean,
    #[serde(rename = "gcn-dense")]
    GcnDense,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::PinetGcn,
        ModelKind::PinetGcnLearned,
        ModelKind::GcnMean,
        ModelKind::GcnDense,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::PinetGcn => "pinet-gcn",
            ModelKind::PinetGcnLearned => "pinet-gcn-learned",
            ModelKind::GcnMean => "gcn-mean",
            ModelKind::GcnDense => "gcn-dense",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown model {s:?}")))
    }
}

/// Architecture hyperparameters. Layer sizes default to 32 then 64.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden1: usize,
    pub hidden2_attention: usize,
    pub hidden2_features: usize,
    pub prop_mode: PropagationMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::PinetGcn,
            hidden1: 32,
            hidden2_attention: 64,
            hidden2_features: 64,
            prop_mode: PropagationMode::SymNormAPlusI,
        }
    }
}

impl ModelConfig {
    pub fn with_kind(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            ..Default::default()
        }
    }

    /// Propagation mode actually used by the model.
    pub fn effective_mode(&self) -> PropagationMode {
        match self.kind {
            ModelKind::PinetGcnLearned => PropagationMode::Learned,
            _ => self.prop_mode,
        }
    }
}

/// Any of the supported classifiers.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    PiNet(PiNet),
    GcnMean(GcnMean),
    GcnDense(GcnDense),
}

/// Data-dependent shape information needed to build a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataShape {
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Largest vertex count; only the dense baseline uses it.
    pub max_vertices: usize,
}

/// Glorot-initialised weights; learned propagation logits start at 0.
pub fn init_params<R: Rng + ?Sized>(
    config: &ModelConfig,
    shape: DataShape,
    rng: &mut R,
) -> Result<AnyModel> {
    let mode = config.effective_mode();
    let f = shape.feature_dim;
    let c = shape.num_classes;
    let h1 = config.hidden1;
    match config.kind {
        ModelKind::PinetGcn | ModelKind::PinetGcnLearned => {
            let (ha, hx) = (config.hidden2_attention, config.hidden2_features);
            let head_attention = GcnHead::init(f, h1, ha, mode, rng)?;
            let head_features = GcnHead::init(f, h1, hx, mode, rng)?;
            let dense = glorot_uniform(ha * hx, c, rng)?;
            Ok(AnyModel::PiNet(PiNet {
                head_attention,
                head_features,
                dense,
            }))
        }
        ModelKind::GcnMean => {
            let h2 = config.hidden2_features;
            let head = GcnHead::init(f, h1, h2, mode, rng)?;
            let dense = glorot_uniform(h2, c, rng)?;
            Ok(AnyModel::GcnMean(GcnMean { head, dense }))
        }
        ModelKind::GcnDense => {
            let h2 = config.hidden2_features;
            let head = GcnHead::init(f, h1, h2, mode, rng)?;
            let dense = glorot_uniform(shape.max_vertices * h2, c, rng)?;
            Ok(AnyModel::GcnDense(GcnDense {
                head,
                dense,
                max_vertices: shape.max_vertices,
            }))
        }
    }
}

impl AnyModel {
    /// `(head, layer, p, q)` for every learned propagation layer.
    pub fn learned_pq(&self) -> Vec<(&'static str, usize, f64, f64)> {
        let heads: Vec<(&'static str, &GcnHead)> = match self {
            AnyModel::PiNet(m) => vec![
                ("attention", &m.head_attention),
                ("features", &m.head_features),
            ],
            AnyModel::GcnMean(m) => vec![("gcn", &m.head)],
            AnyModel::GcnDense(m) => vec![("gcn", &m.head)],
        };
        let mut out = Vec::new();
        for (name, head) in heads {
            for (layer, pq) in head.learned_pq().into_iter().enumerate() {
                if let Some((p, q)) = pq {
                    out.push((name, layer, p, q));
                }
            }
        }
        out
    }
}

impl Model for AnyModel {
    fn parameters(&self) -> Vec<&DMatrix<f64>> {
        match self {
            AnyModel::PiNet(m) => m.parameters(),
            AnyModel::GcnMean(m) => m.parameters(),
            AnyModel::GcnDense(m) => m.parameters(),
        }
    }

    fn parameters_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        match self {
            AnyModel::PiNet(m) => m.parameters_mut(),
            AnyModel::GcnMean(m) => m.parameters_mut(),
            AnyModel::GcnDense(m) => m.parameters_mut(),
        }
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], graph: &Graph) -> Result<Var> {
        match self {
            AnyModel::PiNet(m) => m.forward(tape, params, graph),
            AnyModel::GcnMean(m) => m.forward(tape, params, graph),
            AnyModel::GcnDense(m) => m.forward(tape, params, graph),
        }
    }
}

#[cfg(test)]
mod tests;
