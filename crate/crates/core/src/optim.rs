//! Adam with bias correction.

use alloc::collections::BTreeMap;
use alloc::string::String;

use num_traits::Float;

use crate::error::Result;
use crate::params::{Gradients, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: BTreeMap<String, Tensor<F>>,
    v: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update of every parameter that has a gradient.
    pub fn update(&mut self, params: &mut ParamStore<F>, grads: &Gradients<F>) -> Result<()> {
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let (c1, c2) = (1.0 - Float::powf(self.beta1, t), 1.0 - Float::powf(self.beta2, t));
        let lr = F::of(self.lr);
        let eps = F::of(self.eps);
        let (inv_c1, inv_c2) = (F::of(1.0 / c1), F::of(1.0 / c2));
        for (name, g) in grads {
            let p = params.get_mut(name)?;
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            for (((x, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (F::one() - b1) * gi;
                *vi = b2 * *vi + (F::one() - b2) * gi * gi;
                let mhat = *mi * inv_c1;
                let vhat = *vi * inv_c2;
                *x = *x - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
