use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{numel, Gradients, Scalar, Tensor};

/// Handle to a parameter in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named trainable tensors. Networks keep [`ParamId`]s and fetch the current
/// leaf tensor at forward time, so the optimizer can swap values freely.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Scalar = f32> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, data: Vec<T>, shape: &[usize]) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.values.len();
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(Tensor::var(data, shape));
        ParamId(id)
    }

    /// Adds a parameter drawn from `N(0, std^2)`.
    pub fn add_normal<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..numel(shape))
            .map(|_| T::from_f64_lossy(dist.sample(rng)))
            .collect();
        self.add(name, data, shape)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, vec![T::zero(); numel(shape)], shape)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Replaces a parameter's values, keeping its shape.
    pub fn set(&mut self, id: ParamId, data: Vec<T>) {
        let shape = self.values[id.0].shape().to_vec();
        self.values[id.0] = Tensor::var(data, &shape);
    }

    /// Detaches every parameter: gradients stop here until the next
    /// [`set`](Self::set).
    pub fn freeze(&mut self) {
        for v in &mut self.values {
            *v = v.detach();
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Per-parameter gradients from a backward pass, in id order.
    pub fn collect_grads(&self, grads: &Gradients<T>) -> Vec<Option<Vec<T>>> {
        self.values
            .iter()
            .map(|t| grads.get(t).map(<[T]>::to_vec))
            .collect()
    }
}
