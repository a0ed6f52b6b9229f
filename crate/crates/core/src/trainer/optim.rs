use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};

/// Cosine annealing from `lr_init` at `t = 0` to `lr_min` at `t = total`.
pub fn cosine_lr(t: usize, total: usize, lr_init: f64, lr_min: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::InvalidArgument("cosine schedule needs at least one step".into()));
    }
    if t > total {
        return Err(Error::InvalidArgument(format!("step {t} beyond schedule length {total}")));
    }
    Ok(lr_min + 0.5 * (lr_init - lr_min) * (1.0 + (PI * t as f64 / total as f64).cos()))
}

/// SGD with heavy-ball momentum. Velocities are keyed by parameter name and
/// start at zero.
#[derive(Clone, Debug, Default)]
pub struct Sgd {
    velocity: BTreeMap<String, Vec<f64>>,
}

impl Sgd {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn velocity(&self, name: &str) -> Option<&[f64]> {
        self.velocity.get(name).map(Vec::as_slice)
    }

    /// `v <- momentum * v + grad; theta <- theta - lr * v` for names in `mask`,
    /// then clears every gradient accumulator in `store`.
    pub fn step<S: ParamStore + ?Sized>(
        &mut self,
        store: &mut S,
        lr: f64,
        momentum: f64,
        mask: &BTreeSet<String>,
    ) -> Result<()> {
        for name in mask {
            let p = store
                .param_mut(name)
                .ok_or_else(|| Error::UnknownParam(name.clone()))?;
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; p.value.len()]);
            for ((theta, vi), g) in p.value.data_mut().iter_mut().zip(v.iter_mut()).zip(p.grad.data()) {
                *vi = momentum * *vi + g;
                *theta -= lr * *vi;
            }
        }
        store.zero_grads();
        Ok(())
    }
}
