//! Central-difference gradient verification.

use super::{Tape, Tensor, Var};

/// Compare reverse-mode gradients against central differences.
///
/// `build` must construct a deterministic scalar loss on the given
/// tape from the supplied parameter vars (dropout in eval mode). The
/// function runs one analytic backward pass and then perturbs every
/// parameter element by `eps` in both directions, returning the
/// maximum elementwise relative error
/// `|analytic - numeric| / max(|analytic| + |numeric|, 1e-6)`.
/// The denominator floor keeps float rounding in the differences
/// (about `|f| * 1e-16 / eps`) from dominating gradients that are
/// genuinely near zero.
pub fn finite_difference_check<F>(build: F, params: &[Tensor], eps: f64) -> f64
where
    F: Fn(&Tape, &[Var]) -> Var,
{
    let eval = |values: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.var(t.clone())).collect();
        let loss = build(&tape, &vars);
        tape.scalar_value(loss)
    };

    // Analytic gradients.
    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.var(t.clone())).collect();
    let loss = build(&tape, &vars);
    let grads = tape.backward(loss);
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get(*v).clone()).collect();

    let mut worst = 0.0_f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for e in 0..param.len() {
            let orig = param.data()[e];
            work[pi].data_mut()[e] = orig + eps;
            let up = eval(&work);
            work[pi].data_mut()[e] = orig - eps;
            let down = eval(&work);
            work[pi].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi].data()[e];
            let denom = (a.abs() + numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_gradient_is_exact() {
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.0]]);
        let err = finite_difference_check(
            |tape, vars| {
                let ones = tape.var(Tensor::from_vec(3, 1, vec![1.0; 3]));
                tape.matmul(vars[0], ones)
            },
            &[x],
            1e-5,
        );
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn relu_dead_region_gradient_is_zero() {
        let x = Tensor::from_rows(&[vec![-1.5, -0.7, -2.0]]);
        let err = finite_difference_check(
            |tape, vars| {
                let r = tape.relu(vars[0]);
                let ones = tape.var(Tensor::from_vec(3, 1, vec![1.0; 3]));
                tape.matmul(r, ones)
            },
            &[x],
            1e-5,
        );
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn three_layer_composite_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let w1 = Tensor::rand_uniform(&mut rng, 4, 5, -0.9, 0.9);
        let b1 = Tensor::rand_uniform(&mut rng, 1, 5, -0.5, 0.5);
        let w2 = Tensor::rand_uniform(&mut rng, 5, 3, -0.9, 0.9);
        let w3 = Tensor::rand_uniform(&mut rng, 3, 1, -0.9, 0.9);
        let x = Tensor::rand_uniform(&mut rng, 2, 4, -1.0, 1.0);
        let err = finite_difference_check(
            |tape, vars| {
                let (w1, b1, w2, w3) = (vars[0], vars[1], vars[2], vars[3]);
                let xin = tape.var(x.clone());
                let h1 = tape.tanh(tape.add_row(tape.matmul(xin, w1), b1));
                let h2 = tape.sigmoid(tape.matmul(h1, w2));
                let out = tape.matmul(h2, w3); // 2x1
                let ones = tape.var(Tensor::from_vec(2, 1, vec![1.0; 2]));
                let flat = tape.reshape(out, 1, 2);
                tape.matmul(flat, ones)
            },
            &[w1, b1, w2, w3],
            1e-5,
        );
        assert!(err < 1e-4, "relative error {err} exceeds 1e-4");
    }
}
