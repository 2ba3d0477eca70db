use crate::error::{Error, Result};
use crate::numerics::{ConvSpec, Graph, Scalar, Tensor, Var};

use super::{check_layers, Bound, LayerSpec, WeightStore};

/// Decomposition network shape.
///
/// `depth` counts all conv layers: one feature layer without activation,
/// `depth - 2` conv+ReLU layers, and a 4-channel projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecomNetConfig {
    pub depth: usize,
    pub width: usize,
}

impl Default for DecomNetConfig {
    fn default() -> Self {
        Self { depth: 5, width: 64 }
    }
}

impl DecomNetConfig {
    /// Narrow variant that trains in minutes on a CPU.
    pub fn desk() -> Self {
        Self { depth: 5, width: 16 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 3 {
            return Err(Error::invalid("DecomNetConfig", format!("depth {} < 3", self.depth)));
        }
        if self.width == 0 {
            return Err(Error::invalid("DecomNetConfig", "width must be positive"));
        }
        Ok(())
    }

    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        (0..self.depth)
            .map(|i| {
                let cin = if i == 0 { 3 } else { self.width };
                let cout = if i + 1 == self.depth { 4 } else { self.width };
                Ok(LayerSpec::new(format!("decom.conv{i}"), ConvSpec::new(cin, cout, 3, 1)?))
            })
            .collect()
    }

    /// Reads depth and width back from parameter names and shapes.
    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let depth = (0..)
            .take_while(|i| store.contains(&format!("decom.conv{i}.weight")))
            .count();
        let width = store
            .get("decom.conv0.weight")
            .map(|t| t.shape()[0])
            .ok_or_else(|| Error::invalid("model", "store has no decomposition network"))?;
        let cfg = Self { depth, width };
        check_layers(store, &cfg.layers()?)?;
        Ok(cfg)
    }
}

/// Graph handles for one decomposition.
#[derive(Clone, Copy, Debug)]
pub struct DecomVars {
    /// `[B, 3, H, W]`, in (0, 1).
    pub reflectance: Var,
    /// `[B, 1, H, W]`, in (0, 1).
    pub illumination: Var,
}

/// Concrete decomposition result.
#[derive(Clone, Debug, PartialEq)]
pub struct DecomOutput {
    pub reflectance: Tensor<f32>,
    pub illumination: Tensor<f32>,
}

/// Builds the decomposition network on `input` (`[B, 3, H, W]`, values in
/// `[0, 1]`).
pub fn decom_graph<T: Scalar>(
    g: &mut Graph<T>,
    params: &Bound,
    cfg: &DecomNetConfig,
    input: Var,
) -> Result<DecomVars> {
    let [_, c, _, _] = g.value(input).dims4("decom_forward")?;
    if c != 3 {
        return Err(Error::shape("decom_forward", format!("expected 3 input channels, got {c}")));
    }
    let (lo, hi) = (T::zero(), T::one());
    if let Some(bad) = g.value(input).data().iter().find(|&&v| !(v >= lo && v <= hi)) {
        return Err(Error::invalid(
            "decom_forward",
            format!("input value {bad:?} outside [0, 1]"),
        ));
    }
    let layers = cfg.layers()?;
    let last = layers.len() - 1;
    let mut x = input;
    for (i, layer) in layers.iter().enumerate() {
        let w = params.get(&layer.weight_name())?;
        let b = params.get(&layer.bias_name())?;
        x = g.conv2d(x, w, b, layer.conv)?;
        if i != 0 && i != last {
            x = g.relu(x);
        }
    }
    let x = g.sigmoid(x);
    Ok(DecomVars {
        reflectance: g.channels(x, 0, 3)?,
        illumination: g.channels(x, 3, 1)?,
    })
}

/// Inference-only decomposition of `input` (`[B, 3, H, W]`).
pub fn decom_forward(store: &WeightStore, input: &Tensor<f32>) -> Result<DecomOutput> {
    let cfg = DecomNetConfig::from_store(store)?;
    let mut g = Graph::<f32>::new();
    let params = store.bind(&mut g, None);
    let x = g.constant(input.clone());
    let out = decom_graph(&mut g, &params, &cfg, x)?;
    Ok(DecomOutput {
        reflectance: g.value(out.reflectance).clone(),
        illumination: g.value(out.illumination).clone(),
    })
}
