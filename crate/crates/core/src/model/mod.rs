//! The decomposition and enhancement networks, their parameters and the
//! weights file.

mod decom;
mod enhance;
mod store;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{ConvSpec, Tensor};

pub use decom::{decom_forward, decom_graph, DecomNetConfig, DecomOutput, DecomVars};
pub use enhance::{enhance_forward, enhance_graph, EnhanceNetConfig, EnhanceVars};
pub use store::{
    load_weights, save_weights, Bound, Param, ParamGroup, WeightStore, HEADER_BYTES, RECORD_FIXED_BYTES,
    WEIGHTS_MAGIC, WEIGHTS_VERSION,
};

pub(crate) use store::{decode_records, encode_records, write_atomic, Reader};

/// One named convolution layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub conv: ConvSpec,
}

impl LayerSpec {
    fn new(name: impl Into<String>, conv: ConvSpec) -> Self {
        Self { name: name.into(), conv }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }
}

/// He-normal kernels (`std = sqrt(2 / fan_in)`) and zero biases for both
/// networks. Deterministic in `seed`.
pub fn init_weights(decom: &DecomNetConfig, enhance: &EnhanceNetConfig, seed: u64) -> Result<WeightStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for layer in decom.layers()?.into_iter().chain(enhance.layers()?) {
        let std = (2.0 / layer.conv.fan_in() as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid("init_weights", e.to_string()))?;
        let kernel = Tensor::from_fn(&layer.conv.weight_shape(), |_| normal.sample(&mut rng) as f32);
        store.insert(layer.weight_name(), kernel)?;
        store.insert(layer.bias_name(), Tensor::zeros(&[layer.conv.out_channels]))?;
    }
    Ok(store)
}

/// Checks that every parameter a layer list needs is present with the
/// right shape.
pub(crate) fn check_layers(store: &WeightStore, layers: &[LayerSpec]) -> Result<()> {
    for layer in layers {
        for (name, shape) in [
            (layer.weight_name(), layer.conv.weight_shape().to_vec()),
            (layer.bias_name(), vec![layer.conv.out_channels]),
        ] {
            match store.get(&name) {
                None => return Err(Error::invalid("model", format!("missing parameter {name}"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::shape(
                        "model",
                        format!("{name} has shape {:?}, expected {shape:?}", t.shape()),
                    ))
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let d = DecomNetConfig::desk();
        let e = EnhanceNetConfig::desk();
        let a = init_weights(&d, &e, 7).unwrap();
        let b = init_weights(&d, &e, 7).unwrap();
        let c = init_weights(&d, &e, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn biases_start_at_zero() {
        let store = init_weights(&DecomNetConfig::desk(), &EnhanceNetConfig::desk(), 1).unwrap();
        let biases: Vec<_> = store.iter().filter(|(n, _)| n.ends_with(".bias")).collect();
        assert!(!biases.is_empty());
        for (_, p) in biases {
            assert!(p.value.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn kernel_std_tracks_fan_in() {
        // width 64: hidden layers have fan_in 64 * 9 and 36864 draws each
        let store = init_weights(&DecomNetConfig::default(), &EnhanceNetConfig::default(), 3).unwrap();
        let w = store.get("decom.conv1.weight").unwrap();
        assert!(w.len() >= 10_000);
        let n = w.len() as f64;
        let mean = w.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = w.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let target = (2.0 / (64.0 * 9.0f64)).sqrt();
        assert!((var.sqrt() - target).abs() < 0.2 * target, "std {} vs {target}", var.sqrt());
    }

    #[test]
    fn configs_can_be_recovered_from_a_store() {
        let d = DecomNetConfig { depth: 4, width: 6 };
        let e = EnhanceNetConfig { num_scales: 2, width: 5 };
        let store = init_weights(&d, &e, 0).unwrap();
        assert_eq!(DecomNetConfig::from_store(&store).unwrap(), d);
        assert_eq!(EnhanceNetConfig::from_store(&store).unwrap(), e);
    }
}
