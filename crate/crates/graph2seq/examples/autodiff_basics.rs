//! Tour of the tensor core: tape-based reverse-mode gradients,
//! finite-difference verification, and Adam minimizing a quadratic.

use graph2seq::tensor::{finite_difference_check, Adam, Tape, Tensor};
use std::collections::BTreeMap;

fn main() {
    // Record a small computation and pull gradients back through it.
    let tape = Tape::new();
    let w = tape.var(Tensor::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.3]]));
    let x = tape.var(Tensor::from_rows(&[vec![1.0, 2.0]]));
    let h = tape.tanh(tape.matmul(x, w));
    let ones = tape.var(Tensor::from_rows(&[vec![1.0], vec![1.0]]));
    let loss = tape.matmul(h, ones); // scalar
    println!("loss = {:.6}", tape.scalar_value(loss));

    let grads = tape.backward(loss);
    println!("dloss/dw = {:?}", grads.get(w).data());
    println!("dloss/dx = {:?}", grads.get(x).data());

    // The same computation, verified against central differences.
    let err = finite_difference_check(
        |tape, vars| {
            let x = tape.var(Tensor::from_rows(&[vec![1.0, 2.0]]));
            let h = tape.tanh(tape.matmul(x, vars[0]));
            let ones = tape.var(Tensor::from_rows(&[vec![1.0], vec![1.0]]));
            tape.matmul(h, ones)
        },
        &[Tensor::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.3]])],
        1e-5,
    );
    println!("max relative error vs central differences: {err:.3e}");

    // Adam walking a quadratic bowl: f(w) = (w - 3)^2.
    let mut adam = Adam::new(0.1);
    let mut w = Tensor::scalar(0.0);
    for step in 1..=60 {
        let grad = Tensor::scalar(2.0 * (w.scalar_value() - 3.0));
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), grad);
        let mut params = vec![("w".to_string(), &mut w)];
        adam.step(&mut params, &grads);
        if step % 10 == 0 {
            println!("step {step:>3}: w = {:.4}", w.scalar_value());
        }
    }
}
