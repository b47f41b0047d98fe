//! Named parameter registry shared by the encoder and decoder.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Parameters by name, iterated in name order so every pass over the store
/// (initialization, checkpointing, optimizer steps) is deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<F> {
    tensors: BTreeMap<String, Tensor<F>>,
}

pub type Gradients<F> = BTreeMap<String, Tensor<F>>;

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<F>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<F>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<F>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<F>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<F>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar weights.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    /// Weight matrix `[fan_in, fan_out]`, Glorot uniform: ±√(6 / (fan_in + fan_out)).
    pub fn init_weight<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) {
        let bound = Float::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out)
            .map(|_| F::of(rng.random_range(-bound..bound)))
            .collect();
        self.insert(name, Tensor::new(&[fan_in, fan_out], data).unwrap());
    }

    pub fn init_zeros(&mut self, name: impl Into<String>, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }

    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.data().iter().all(|x| x.is_finite()))
    }
}

/// Adds `src` into `dst`, creating missing entries.
pub fn accumulate<F: Scalar>(dst: &mut Gradients<F>, src: &Gradients<F>) {
    for (k, g) in src {
        match dst.get_mut(k) {
            Some(d) => {
                for (a, &b) in d.data_mut().iter_mut().zip(g.data()) {
                    *a = *a + b;
                }
            }
            None => {
                dst.insert(k.clone(), g.clone());
            }
        }
    }
}

pub fn scale_gradients<F: Scalar>(g: &mut Gradients<F>, s: F) {
    for t in g.values_mut() {
        for x in t.data_mut() {
            *x = *x * s;
        }
    }
}

pub fn gradients_finite<F: Scalar>(g: &Gradients<F>) -> bool {
    g.values().all(|t| t.data().iter().all(|x| Float::is_finite(*x)))
}
