use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tape::Gradients;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

/// Named parameters with a gradient buffer of identical shape per entry.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    index: BTreeMap<String, ParamId>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::contract(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.grads.push(Tensor::zeros(value.shape().to_vec()));
        self.values.push(value);
        Ok(id)
    }

    /// Inserts a parameter drawn uniformly from `±1/√fan_in`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, Tensor::new(shape, values)?)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name:?}")))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Ids in insertion order.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Parameter names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.params() {
            self.grads[id.0]
                .values_mut()
                .iter_mut()
                .zip(g)
                .for_each(|(d, s)| *d += s);
        }
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.values_mut().fill(0.0);
        }
    }

    pub(crate) fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor, &mut Tensor) {
        (&mut self.values[id.0], &mut self.grads[id.0])
    }
}
