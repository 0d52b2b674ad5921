//! Named parameter store. Training code keeps one `ParameterSet` per model,
//! binds it into a fresh `Graph` every step, and applies SGD after `backward`.

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::{Scalar, Tensor};
use indexmap::IndexMap;

#[derive(Debug, Clone)]
pub struct ParameterSet<T: Scalar = f32> {
    tensors: IndexMap<String, Tensor<T>>,
    velocity: IndexMap<String, Vec<T>>,
}

impl<T: Scalar> Default for ParameterSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self { tensors: IndexMap::new(), velocity: IndexMap::new() }
    }

    pub fn insert(&mut self, name: &str, t: Tensor<T>) -> Result<()> {
        if self.tensors.contains_key(name) {
            return Err(NnError::DuplicateName(name.to_string()));
        }
        self.tensors.insert(name.to_string(), t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        let mut out = ParameterSet::new();
        for (name, t) in &self.tensors {
            out.tensors.insert(name.clone(), t.cast());
        }
        out
    }

    /// Register every parameter as a trainable leaf of `g`, in insertion order.
    pub fn bind(&self, g: &mut Graph<T>) -> BoundParams {
        let mut vars = IndexMap::new();
        for (name, t) in &self.tensors {
            vars.insert(name.clone(), g.param(t.clone()));
        }
        BoundParams { vars }
    }

    /// v <- momentum * v + grad; w <- w - lr * v. Every parameter must have
    /// received a gradient, otherwise the graph wiring is broken.
    pub fn sgd_step(&mut self, bound: &BoundParams, g: &Graph<T>, lr: f64, momentum: f64) -> Result<()> {
        let lr = T::from_f64(lr);
        let mu = T::from_f64(momentum);
        for (name, t) in &mut self.tensors {
            let var = bound.var(name)?;
            let grad = g.grad(var).ok_or_else(|| NnError::MissingGrad(name.clone()))?;
            let vel = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); t.len()]);
            for ((w, v), &gr) in t.values_mut().iter_mut().zip(vel.iter_mut()).zip(grad.values()) {
                *v = mu * *v + gr;
                *w -= lr * *v;
            }
        }
        Ok(())
    }

    pub fn reset_velocity(&mut self) {
        self.velocity.clear();
    }
}

/// Parameter name -> graph leaf mapping for one bound graph.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NnError::Parameter(format!("unknown parameter {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}
