//! First-order optimizers over lists of dense parameter matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    /// Plain gradient descent.
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Parameter(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Adam moment estimates, one pair of matrices per parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub first_moment: Vec<DMatrix<f64>>,
    pub second_moment: Vec<DMatrix<f64>>,
    pub step_count: u64,
}

impl AdamState {
    pub fn for_params(params: &[&DMatrix<f64>]) -> Self {
        let zeros = |p: &&DMatrix<f64>| DMatrix::zeros(p.nrows(), p.ncols());
        AdamState {
            first_moment: params.iter().map(zeros).collect(),
            second_moment: params.iter().map(zeros).collect(),
            step_count: 0,
        }
    }
}

fn check_shapes(params: &[&mut DMatrix<f64>], grads: &[DMatrix<f64>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim(
            "optimizer step",
            format!("{} parameters, {} gradients", params.len(), grads.len()),
        ));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::dim(
                "optimizer step",
                format!("parameter {k} is {:?}, gradient {:?}", p.shape(), g.shape()),
            ));
        }
    }
    Ok(())
}

/// One bias-corrected Adam update (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
///
/// An empty `state` is initialised from the parameter shapes.
pub fn adam_step(
    params: &mut [&mut DMatrix<f64>],
    grads: &[DMatrix<f64>],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    check_shapes(params, grads)?;
    if state.first_moment.is_empty() && !params.is_empty() {
        let view: Vec<&DMatrix<f64>> = params.iter().map(|p| &**p).collect();
        *state = AdamState::for_params(&view);
    }
    if state.first_moment.len() != params.len() {
        return Err(Error::dim(
            "adam_step",
            format!(
                "state tracks {} parameters, got {}",
                state.first_moment.len(),
                params.len()
            ),
        ));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(
        state
            .first_moment
            .iter_mut()
            .zip(state.second_moment.iter_mut()),
    ) {
        if m.shape() != g.shape() {
            return Err(Error::dim(
                "adam_step",
                "moment shape differs from gradient",
            ));
        }
        for (((pi, &gi), mi), vi) in p
            .iter_mut()
            .zip(g.iter())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}

/// Optimizer together with whatever state it carries between steps.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::default()),
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }

    pub fn step(
        &mut self,
        params: &mut [&mut DMatrix<f64>],
        grads: &[DMatrix<f64>],
        lr: f64,
    ) -> Result<()> {
        match self {
            Optimizer::Adam(state) => adam_step(params, grads, state, lr),
            Optimizer::Sgd => {
                check_shapes(params, grads)?;
                for (p, g) in params.iter_mut().zip(grads) {
                    **p -= g * lr;
                }
                Ok(())
            }
        }
    }
}
