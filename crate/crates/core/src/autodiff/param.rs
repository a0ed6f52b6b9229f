use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

/// A trainable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub requires_grad: bool,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            requires_grad: true,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

/// Gradients keyed by (qualified) parameter name, as produced by a backward sweep.
pub type Gradients = BTreeMap<String, Tensor>;

/// Name-ordered parameter registry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: BTreeMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), Param::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }
}

/// Anything that owns named parameters an optimizer can reach.
pub trait ParamStore {
    fn param_mut(&mut self, name: &str) -> Option<&mut Param>;

    fn param_names(&self) -> Vec<String>;

    /// Adds `grads` into the accumulators of matching parameters that require grad.
    /// Names that do not belong to this store are ignored.
    fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (name, g) in grads {
            if let Some(p) = self.param_mut(name) {
                if !p.requires_grad {
                    continue;
                }
                if p.grad.shape() != g.shape() {
                    return Err(Error::shape(
                        "accumulate",
                        format!("{name}: grad {:?} vs param {:?}", g.shape(), p.grad.shape()),
                    ));
                }
                for (acc, v) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *acc += v;
                }
            }
        }
        Ok(())
    }

    fn zero_grads(&mut self) {
        for name in self.param_names() {
            if let Some(p) = self.param_mut(&name) {
                p.zero_grad();
            }
        }
    }
}

impl ParamStore for ParamSet {
    fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    fn param_names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }
}
