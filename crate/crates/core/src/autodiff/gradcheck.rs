use nalgebra::DMatrix;

use super::{Tape, Var};
use crate::error::{Error, Result};

/// Outcome of comparing backward gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter index, row, column)` of the worst coordinate.
    pub worst: Option<(usize, usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares the tape gradient of `f` at `params` with central differences.
///
/// `f` receives a fresh tape and one trainable leaf per entry of `params`
/// and must return a 1x1 loss. Each coordinate contributes
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`; the maximum
/// over all coordinates is reported.
pub fn finite_difference_check<F>(
    f: F,
    params: &[DMatrix<f64>],
    epsilon: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Parameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let eval = |ps: &[DMatrix<f64>]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok((tape, vars, loss))
    };

    let (tape, vars, loss) = eval(params)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<DMatrix<f64>> = vars.iter().map(|&v| grads.wrt(&tape, v)).collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let mut work: Vec<DMatrix<f64>> = params.to_vec();
    for (k, param) in params.iter().enumerate() {
        for j in 0..param.ncols() {
            for i in 0..param.nrows() {
                let x0 = param[(i, j)];
                work[k][(i, j)] = x0 + epsilon;
                let (t, _, l) = eval(&work)?;
                let plus = t.scalar(l);
                work[k][(i, j)] = x0 - epsilon;
                let (t, _, l) = eval(&work)?;
                let minus = t.scalar(l);
                work[k][(i, j)] = x0;

                let numeric = (plus - minus) / (2.0 * epsilon);
                let a = analytic[k][(i, j)];
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                let rel = (a - numeric).abs() / denom;
                report.coordinates += 1;
                if rel > report.max_relative_error || report.worst.is_none() {
                    report.max_relative_error = rel;
                    report.worst = Some((k, i, j));
                    report.analytic = a;
                    report.numeric = numeric;
                }
            }
        }
    }
    Ok(report)
}
