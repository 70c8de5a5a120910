//! Adam optimizer over a [`ParamSet`].

use crate::params::ParamSet;
use crate::tensor::Tensor;

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(ps: &ParamSet, beta1: f64, beta2: f64) -> Self {
        let m = ps.refs().map(|r| Tensor::zeros(ps.get(r).shape())).collect();
        let v = ps.refs().map(|r| Tensor::zeros(ps.get(r).shape())).collect();
        Self { beta1, beta2, eps: 1e-8, m, v, t: 0 }
    }

    /// One update step; `grads` aligned with the param set order.
    pub fn step(&mut self, ps: &mut ParamSet, grads: &[Tensor], lr: f64) {
        assert_eq!(grads.len(), ps.len(), "gradient count mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, r) in ps.refs().enumerate() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = ps.get_mut(r).data_mut();
            assert_eq!(g.len(), p.len(), "gradient shape mismatch at {i}");
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
