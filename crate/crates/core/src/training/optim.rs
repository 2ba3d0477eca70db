use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{ParamGroup, WeightStore};
use crate::numerics::Tensor;

/// Plain gradient descent on one parameter group: `p ← p − lr · grad(p)`.
///
/// Every parameter in `group` must carry a gradient. Parameters outside the
/// group are left untouched. All gradients are cleared afterwards. An update
/// that would make any weight non-finite is rejected before anything is
/// written.
pub fn sgd_step(store: &mut WeightStore, lr: f64, group: ParamGroup) -> Result<()> {
    Sgd::new(0.0).step(store, lr, group)
}

/// SGD with optional heavy-ball momentum (`v ← μ v + g`, `p ← p − lr v`).
/// With `μ = 0` this is exactly [`sgd_step`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    velocity: BTreeMap<String, Tensor<f32>>,
}

impl Sgd {
    pub fn new(momentum: f64) -> Self {
        Self {
            momentum,
            velocity: BTreeMap::new(),
        }
    }

    pub fn with_velocity(momentum: f64, velocity: BTreeMap<String, Tensor<f32>>) -> Self {
        Self { momentum, velocity }
    }

    pub fn velocity(&self) -> &BTreeMap<String, Tensor<f32>> {
        &self.velocity
    }

    pub fn step(&mut self, store: &mut WeightStore, lr: f64, group: ParamGroup) -> Result<()> {
        if let Some(name) = store
            .iter()
            .find(|(n, p)| group.contains(n) && p.grad.is_none())
            .map(|(n, _)| n.to_owned())
        {
            return Err(Error::invalid("sgd_step", format!("parameter {name} has no gradient")));
        }
        let lr = lr as f32;
        let mu = self.momentum as f32;
        let mut velocity = BTreeMap::new();
        let mut updated = Vec::new();
        for (name, p) in store.iter() {
            if !group.contains(name) {
                continue;
            }
            let grad = p.grad.as_ref().expect("checked above");
            let update = if mu == 0.0 {
                grad.clone()
            } else {
                let mut v = self
                    .velocity
                    .get(name)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(grad.shape()));
                for (vi, &gi) in v.data_mut().iter_mut().zip(grad.data()) {
                    *vi = mu * *vi + gi;
                }
                velocity.insert(name.to_owned(), v.clone());
                v
            };
            let next: Vec<f32> = p.value.data().iter().zip(update.data()).map(|(&w, &u)| w - lr * u).collect();
            if next.iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFiniteUpdate {
                    parameter: name.to_owned(),
                });
            }
            updated.push((name.to_owned(), next));
        }
        for (name, next) in updated {
            let p = store.param_mut(&name).expect("collected from the store");
            p.value.data_mut().copy_from_slice(&next);
        }
        self.velocity.extend(velocity);
        store.clear_grads();
        Ok(())
    }
}
