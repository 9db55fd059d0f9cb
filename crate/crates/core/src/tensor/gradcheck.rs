use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

const FLOOR: f64 = 1e-6;

/// Compares tape gradients against central finite differences.
///
/// `f` receives a fresh tape and one differentiable leaf per entry of
/// `params`, and must return a scalar. Every coordinate of every parameter is
/// perturbed by `±eps`. Returns the largest
/// `|analytic − numeric| / max(FLOOR, |analytic| + |numeric|)`.
/// Coordinates whose gradients are smaller than `FLOOR` are in effect
/// compared in absolute terms.
pub fn grad_check<F>(params: &[Tensor], eps: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::Parameter(format!(
            "grad_check eps must lie in [1e-7, 1e-4], got {eps}"
        )));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let loss = f(&mut tape, &vars)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("grad_check: f = {value}")));
    }
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .zip(&vars)
        .map(|(p, v)| {
            grads
                .get(*v)
                .map_or_else(|| vec![0.0; p.numel()], <[f64]>::to_vec)
        })
        .collect();

    let mut eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|p| tape.param(p)).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.scalar(out);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("grad_check: perturbed f = {v}")))
        }
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for p in 0..params.len() {
        for i in 0..params[p].numel() {
            let orig = params[p].data()[i];
            work[p].data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work[p].data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[p][i];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(FLOOR);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
