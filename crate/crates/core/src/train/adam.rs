use crate::error::{Error, Result};
use crate::models::ParamSet;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients stored on `params`. Parameters
    /// without a gradient are left alone. Nothing is modified when any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(Error::dim("adam state", self.m.len(), params.len()));
        }
        for p in params.iter() {
            if let Some(g) = p.tensor.grad() {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite gradient for `{}`", p.name)));
                }
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.tensor.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let data = p.tensor.data_mut();
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                data[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Global L2 norm of all stored gradients.
pub fn grad_norm(params: &ParamSet) -> f64 {
    params
        .iter()
        .filter_map(|p| p.tensor.grad())
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm(params: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grad_norm(params);
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for p in params.iter_mut() {
            if let Some(g) = p.tensor.grad() {
                let scaled: Vec<f64> = g.iter().map(|x| x * s).collect();
                p.tensor.zero_grad();
                p.tensor.accumulate_grad(&scaled).expect("same length");
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    fn single(x: f64) -> ParamSet {
        let mut p = ParamSet::default();
        p.push("x", Tensor::vector(vec![x]));
        p
    }

    fn set_grad(p: &mut ParamSet, g: f64) {
        let t = &mut p.iter_mut().next().unwrap().tensor;
        t.zero_grad();
        t.accumulate_grad(&[g]).unwrap();
    }

    #[test]
    fn first_step_on_square() {
        let mut p = single(1.0);
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape);
        let sq = tape.square(vars[0]);
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        p.accumulate(&grads, &vars).unwrap();
        let mut adam = AdamState::new(&p, 0.1);
        adam.step(&mut p).unwrap();
        let x = p.iter().next().unwrap().tensor.data()[0];
        // m̂ = 2, v̂ = 4, so the step is 0.1·2/(2 + 1e-8)
        assert!((x - 0.9).abs() < 1e-8, "{x}");
    }

    #[test]
    fn zero_gradient_barely_moves() {
        let mut p = single(0.37);
        set_grad(&mut p, 0.0);
        let mut adam = AdamState::new(&p, 0.1);
        adam.step(&mut p).unwrap();
        assert_eq!(p.iter().next().unwrap().tensor.data()[0], 0.37);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut p = single(2.0);
        let mut adam = AdamState::new(&p, 0.1);
        set_grad(&mut p, f64::NAN);
        assert!(matches!(adam.step(&mut p), Err(Error::Numeric(_))));
        assert_eq!(p.iter().next().unwrap().tensor.data()[0], 2.0);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn deterministic_runs() {
        let run = || {
            let mut p = single(3.0);
            let mut adam = AdamState::new(&p, 0.05);
            for k in 0..50 {
                let x = p.iter().next().unwrap().tensor.data()[0];
                set_grad(&mut p, 2.0 * x + (k as f64).sin());
                adam.step(&mut p).unwrap();
            }
            p
        };
        assert!(run().bitwise_eq(&run()));
    }

    #[test]
    fn clipping() {
        let mut p = ParamSet::default();
        p.push("a", Tensor::vector(vec![0.0, 0.0]));
        p.iter_mut().next().unwrap().tensor.accumulate_grad(&[30.0, 40.0]).unwrap();
        assert_eq!(clip_grad_norm(&mut p, 5.0), 50.0);
        assert!((grad_norm(&p) - 5.0).abs() < 1e-12);
        assert_eq!(clip_grad_norm(&mut p, 10.0), grad_norm(&p));
    }
}
