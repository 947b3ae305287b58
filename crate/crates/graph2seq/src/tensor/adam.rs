//! Adam optimizer with bias correction.

use super::Tensor;
use std::collections::BTreeMap;

/// Adam state: per-parameter first/second moment accumulators keyed by
/// parameter name, plus the shared step counter.
///
/// Defaults follow the usual recommendation: `beta1 = 0.9`,
/// `beta2 = 0.999`, `eps = 1e-8`.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one bias-corrected update to every named parameter.
    /// Parameters without an entry in `grads` are treated as having a
    /// zero gradient (their momentum still decays).
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)], grads: &BTreeMap<String, Tensor>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, param) in params.iter_mut() {
            let zero = Tensor::zeros(param.rows(), param.cols());
            let grad = grads.get(name.as_str()).unwrap_or(&zero);
            assert_eq!(
                grad.shape(),
                param.shape(),
                "gradient shape mismatch for parameter `{name}`"
            );
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(param.rows(), param.cols()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(param.rows(), param.cols()));
            for ((p, g), (m, v)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()))
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            param.assert_finite("adam_step");
        }
    }
}
