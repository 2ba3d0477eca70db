use crate::error::{Error, Result};
use crate::numerics::{ConvSpec, Graph, Scalar, Tensor, Var};

use super::{check_layers, Bound, LayerSpec, WeightStore};

/// Illumination-adjustment network shape: `num_scales` stride-2 encoder
/// blocks mirrored by as many resize-conv decoder blocks, each `width`
/// channels wide.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnhanceNetConfig {
    pub num_scales: usize,
    pub width: usize,
}

impl Default for EnhanceNetConfig {
    fn default() -> Self {
        Self {
            num_scales: 3,
            width: 64,
        }
    }
}

impl EnhanceNetConfig {
    pub fn desk() -> Self {
        Self {
            num_scales: 3,
            width: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_scales == 0 || self.width == 0 {
            return Err(Error::invalid("EnhanceNetConfig", "num_scales and width must be positive"));
        }
        if self.num_scales > 16 {
            return Err(Error::invalid("EnhanceNetConfig", "num_scales above 16"));
        }
        Ok(())
    }

    /// Spatial extents must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.num_scales
    }

    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        let c = self.width;
        let mut layers = vec![LayerSpec::new("enhance.stem", ConvSpec::new(4, c, 3, 1)?)];
        for i in 0..self.num_scales {
            layers.push(LayerSpec::new(format!("enhance.down{i}"), ConvSpec::new(c, c, 3, 2)?));
        }
        for i in 0..self.num_scales {
            layers.push(LayerSpec::new(format!("enhance.up{i}"), ConvSpec::new(c, c, 3, 1)?));
        }
        layers.push(LayerSpec::new("enhance.fuse", ConvSpec::new(c * self.num_scales, c, 1, 1)?));
        layers.push(LayerSpec::new("enhance.out", ConvSpec::new(c, 1, 3, 1)?));
        Ok(layers)
    }

    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let num_scales = (0..)
            .take_while(|i| store.contains(&format!("enhance.down{i}.weight")))
            .count();
        let width = store
            .get("enhance.stem.weight")
            .map(|t| t.shape()[0])
            .ok_or_else(|| Error::invalid("model", "store has no enhancement network"))?;
        let cfg = Self { num_scales, width };
        check_layers(store, &cfg.layers()?)?;
        Ok(cfg)
    }
}

/// Graph handles for one enhancement pass.
#[derive(Clone, Debug)]
pub struct EnhanceVars {
    /// Adjusted illumination, `[B, 1, H, W]`.
    pub output: Var,
    /// Stride-2 encoder features, finest first.
    pub encoder: Vec<Var>,
    /// Decoder features, coarsest first.
    pub decoder: Vec<Var>,
}

fn conv<T: Scalar>(g: &mut Graph<T>, params: &Bound, layer: &LayerSpec, x: Var) -> Result<Var> {
    let w = params.get(&layer.weight_name())?;
    let b = params.get(&layer.bias_name())?;
    g.conv2d(x, w, b, layer.conv)
}

/// Builds the enhancement network on reflectance `[B, 3, H, W]` and
/// illumination `[B, 1, H, W]`. `H` and `W` must be multiples of
/// `2^num_scales`.
pub fn enhance_graph<T: Scalar>(
    g: &mut Graph<T>,
    params: &Bound,
    cfg: &EnhanceNetConfig,
    reflectance: Var,
    illumination: Var,
) -> Result<EnhanceVars> {
    let [_, rc, h, w] = g.value(reflectance).dims4("enhance_forward")?;
    let [_, ic, _, _] = g.value(illumination).dims4("enhance_forward")?;
    if rc != 3 || ic != 1 {
        return Err(Error::shape(
            "enhance_forward",
            format!("expected 3-channel reflectance and 1-channel illumination, got {rc} and {ic}"),
        ));
    }
    let div = cfg.divisor();
    if h % div != 0 || w % div != 0 {
        return Err(Error::invalid(
            "enhance_forward",
            format!("spatial size {h}x{w} is not divisible by {div}"),
        ));
    }
    let layers = cfg.layers()?;
    let m = cfg.num_scales;
    let (stem, downs, ups) = (&layers[0], &layers[1..=m], &layers[m + 1..=2 * m]);
    let (fuse, out) = (&layers[2 * m + 1], &layers[2 * m + 2]);

    let input = g.concat_channels(&[reflectance, illumination])?;
    let stem_feat = conv(g, params, stem, input)?;

    let mut skips = vec![stem_feat];
    let mut encoder = Vec::with_capacity(m);
    let mut x = stem_feat;
    for layer in downs {
        x = conv(g, params, layer, x)?;
        x = g.relu(x);
        encoder.push(x);
        skips.push(x);
    }

    let mut decoder = Vec::with_capacity(m);
    for (j, layer) in ups.iter().enumerate() {
        let skip = skips[m - 1 - j];
        let [_, _, sh, sw] = g.value(skip).dims4("enhance_forward")?;
        x = g.resize_nearest(x, sh, sw)?;
        x = conv(g, params, layer, x)?;
        x = g.relu(x);
        x = g.add(x, skip)?;
        decoder.push(x);
    }

    let mut scales = Vec::with_capacity(m);
    for &d in &decoder {
        scales.push(g.resize_nearest(d, h, w)?);
    }
    let gathered = g.concat_channels(&scales)?;
    let fused = conv(g, params, fuse, gathered)?;
    let logits = conv(g, params, out, fused)?;
    let output = g.sigmoid(logits);
    Ok(EnhanceVars {
        output,
        encoder,
        decoder,
    })
}

/// Inference-only illumination adjustment.
pub fn enhance_forward(
    store: &WeightStore,
    reflectance: &Tensor<f32>,
    illumination: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let cfg = EnhanceNetConfig::from_store(store)?;
    let mut g = Graph::<f32>::new();
    let params = store.bind(&mut g, None);
    let r = g.constant(reflectance.clone());
    let i = g.constant(illumination.clone());
    let out = enhance_graph(&mut g, &params, &cfg, r, i)?;
    Ok(g.value(out.output).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_weights, DecomNetConfig};

    fn inputs(h: usize, w: usize) -> (Tensor<f32>, Tensor<f32>) {
        let r = Tensor::from_fn(&[1, 3, h, w], |i| ((i * 37) % 101) as f32 / 101.0);
        let l = Tensor::from_fn(&[1, 1, h, w], |i| 0.05 + ((i * 13) % 17) as f32 / 20.0);
        (r, l)
    }

    #[test]
    fn output_shape_and_range() {
        let store = init_weights(&DecomNetConfig::desk(), &EnhanceNetConfig::desk(), 2).unwrap();
        let (r, l) = inputs(96, 96);
        let out = enhance_forward(&store, &r, &l).unwrap();
        assert_eq!(out.shape(), &[1, 1, 96, 96]);
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn encoder_halves_resolution_per_scale() {
        let store = init_weights(&DecomNetConfig::desk(), &EnhanceNetConfig::desk(), 2).unwrap();
        let cfg = EnhanceNetConfig::desk();
        let (r, l) = inputs(96, 96);
        let mut g = Graph::<f32>::new();
        let params = store.bind(&mut g, None);
        let (rv, lv) = (g.constant(r), g.constant(l));
        let vars = enhance_graph(&mut g, &params, &cfg, rv, lv).unwrap();
        let enc: Vec<_> = vars.encoder.iter().map(|&v| g.value(v).shape()[2]).collect();
        assert_eq!(enc, vec![48, 24, 12]);
        let dec: Vec<_> = vars.decoder.iter().map(|&v| g.value(v).shape()[2]).collect();
        assert_eq!(dec, vec![24, 48, 96]);
        for &v in &vars.decoder {
            assert_eq!(g.value(v).shape()[1], 16);
        }
    }

    #[test]
    fn rejects_indivisible_sizes() {
        let store = init_weights(&DecomNetConfig::desk(), &EnhanceNetConfig::desk(), 2).unwrap();
        let (r, l) = inputs(20, 24);
        assert!(enhance_forward(&store, &r, &l).is_err());
    }
}
