//! Named parameter storage shared by the model, the optimizer and the
//! checkpoint format.
//!
//! Parameters live in an insertion-ordered map so that every iteration over
//! them — optimizer updates, serialization, gradient checks — happens in one
//! deterministic order. Each parameter carries its gradient accumulator and
//! Adam moment estimates; gradients are accumulated with `+=` so a tensor
//! used twice in one forward pass (the transcriber is) collects both
//! contributions.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};
use indexmap::IndexMap;

pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
}

pub struct ParameterStore<T> {
    params: IndexMap<String, Param<T>>,
    step: u64,
}

impl<T: Scalar> Default for ParameterStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            params: IndexMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        let shape = value.shape().to_vec();
        self.params.insert(
            name.to_string(),
            Param {
                value,
                grad: Tensor::zeros(&shape),
                adam_m: Tensor::zeros(&shape),
                adam_v: Tensor::zeros(&shape),
            },
        );
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Parameter names in insertion order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .map(|p| &p.grad)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// `grad[name] += delta`.
    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor<T>) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if p.grad.shape() != delta.shape() {
            return Err(Error::shape_mismatch(
                &format!("accumulate_grad({name})"),
                format!("{:?}", p.grad.shape()),
                format!("{:?}", delta.shape()),
            ));
        }
        p.grad.add_scaled(delta, T::one());
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// `grad[*] *= factor`, e.g. to turn a sum over a batch into a mean.
    pub fn scale_grads(&mut self, factor: T) {
        for p in self.params.values_mut() {
            for g in p.grad.data_mut() {
                *g *= factor;
            }
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn param(&self, name: &str) -> Result<&Param<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub(crate) fn param_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Converts every tensor to another element type, preserving order,
    /// Adam state and step count.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        let mut out = ParameterStore::new();
        out.step = self.step;
        for (name, p) in &self.params {
            out.params.insert(
                name.clone(),
                Param {
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                    adam_m: p.adam_m.cast(),
                    adam_v: p.adam_v.cast(),
                },
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_rejects_duplicates() {
        let mut store = ParameterStore::<f32>::new();
        store.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(matches!(
            store.insert("w", Tensor::zeros(&[2, 2])),
            Err(Error::DuplicateParameter(_))
        ));
    }

    #[test]
    fn grads_accumulate_across_calls() {
        let mut store = ParameterStore::<f32>::new();
        store.insert("w", Tensor::zeros(&[3])).unwrap();
        let delta = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        store.accumulate_grad("w", &delta).unwrap();
        store.accumulate_grad("w", &delta).unwrap();
        assert_eq!(store.grad("w").unwrap().data(), &[2.0, 4.0, 6.0]);
        store.zero_grads();
        assert_eq!(store.grad("w").unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn accumulate_grad_rejects_shape_mismatch() {
        let mut store = ParameterStore::<f32>::new();
        store.insert("w", Tensor::zeros(&[3])).unwrap();
        let delta = Tensor::zeros(&[4]);
        assert!(store.accumulate_grad("w", &delta).is_err());
    }

    #[test]
    fn names_keep_insertion_order() {
        let mut store = ParameterStore::<f32>::new();
        for name in ["zeta", "alpha", "mid"] {
            store.insert(name, Tensor::zeros(&[1])).unwrap();
        }
        let names: Vec<_> = store.names().collect();
        assert_eq!(names, vec!["zeta", "alpha", "mid"]);
    }
}
