//! Reverse-mode differentiation of a small expression, checked against
//! central finite differences.

use stkd::tensor::{grad_check, Tape, Tensor};

fn main() -> stkd::Result<()> {
    let x = Tensor::from_rows(&[[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]])?;
    let w = Tensor::from_rows(&[[0.2, -0.4], [0.7, 0.1], [-0.3, 0.9]])?;

    let mut tape = Tape::new();
    let (xv, wv) = (tape.param(&x), tape.param(&w));
    let h = tape.matmul(xv, wv)?;
    let h = tape.tanh(h);
    let p = tape.log_softmax_rows(h, 0.5)?;
    let loss = tape.mean(p);
    let grads = tape.backward(loss)?;
    println!("loss = {:.6}", tape.scalar(loss));
    println!("dL/dW = {:?}", grads.get(wv).unwrap());

    let err = grad_check(&[x, w], 1e-5, |tape, v| {
        let h = tape.matmul(v[0], v[1])?;
        let h = tape.tanh(h);
        let p = tape.log_softmax_rows(h, 0.5)?;
        Ok(tape.mean(p))
    })?;
    println!("max relative error vs finite differences: {err:.2e}");
    Ok(())
}
