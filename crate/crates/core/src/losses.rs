//! Training objectives for both networks.
//!
//! Every `‖·‖` is realized as a mean of absolute values, so the weights
//! below do not depend on patch or batch size.

use crate::error::{Error, Result};
use crate::model::DecomVars;
use crate::numerics::{Axis, Graph, Scalar, Var};

/// Whether the structure weight `exp(-λ_g ∇R)` passes gradient to `R`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WeightGradient {
    /// Gradient reaches both `I` and `R` through the weight.
    #[default]
    Joint,
    /// The weight is treated as a constant.
    Detached,
}

/// Index into [`LossWeights::lambda_ij`].
pub const LOW: usize = 0;
pub const NORMAL: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Reflectance consistency weight.
    pub lambda_ir: f64,
    /// Illumination smoothness weight.
    pub lambda_is: f64,
    /// Structure-awareness strength inside the smoothness weight.
    pub lambda_g: f64,
    /// `lambda_ij[i][j]` weights `‖R_i ∘ I_j − S_j‖`; index with [`LOW`] and
    /// [`NORMAL`].
    pub lambda_ij: [[f64; 2]; 2],
    pub weight_gradient: WeightGradient,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ir: 0.001,
            lambda_is: 0.1,
            lambda_g: 10.0,
            lambda_ij: [[1.0, 0.001], [0.001, 1.0]],
            weight_gradient: WeightGradient::Joint,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_ir, self.lambda_is, self.lambda_g]
            .into_iter()
            .chain(self.lambda_ij.iter().flatten().copied());
        for v in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid("LossWeights", format!("weight {v} must be finite and nonnegative")));
            }
        }
        if self.lambda_ij[LOW][LOW] != 1.0 || self.lambda_ij[NORMAL][NORMAL] != 1.0 {
            return Err(Error::invalid("LossWeights", "diagonal of lambda_ij must be 1"));
        }
        Ok(())
    }
}

/// `Σ_ij λ_ij · mean|R_i ∘ I_j − S_j|`, illumination broadcast over RGB.
#[allow(clippy::too_many_arguments)]
pub fn recon_loss<T: Scalar>(
    g: &mut Graph<T>,
    r_low: Var,
    i_low: Var,
    r_normal: Var,
    i_normal: Var,
    s_low: Var,
    s_normal: Var,
    lw: &LossWeights,
) -> Result<Var> {
    let refl = [r_low, r_normal];
    let illum = [i_low, i_normal];
    let src = [s_low, s_normal];
    let mut total: Option<Var> = None;
    for i in [LOW, NORMAL] {
        for j in [LOW, NORMAL] {
            let term = reconstruction_error(g, refl[i], illum[j], src[j])?;
            let term = g.scale(term, lw.lambda_ij[i][j]);
            total = Some(match total {
                Some(t) => g.add(t, term)?,
                None => term,
            });
        }
    }
    Ok(total.expect("four terms"))
}

/// `mean|R ∘ I − S|`.
pub fn reconstruction_error<T: Scalar>(g: &mut Graph<T>, r: Var, i: Var, s: Var) -> Result<Var> {
    check_same_spatial(g, "recon_loss", &[r, i, s])?;
    let prod = g.mul(r, i)?;
    let diff = g.sub(prod, s)?;
    g.reduce_mean_abs(diff)
}

/// `mean|R_low − R_normal|`.
pub fn invariable_reflectance_loss<T: Scalar>(g: &mut Graph<T>, r_low: Var, r_normal: Var) -> Result<Var> {
    if g.value(r_low).shape() != g.value(r_normal).shape() {
        return Err(Error::shape(
            "invariable_reflectance_loss",
            format!("{:?} vs {:?}", g.value(r_low).shape(), g.value(r_normal).shape()),
        ));
    }
    let diff = g.sub(r_low, r_normal)?;
    g.reduce_mean_abs(diff)
}

/// Per-direction structure weight `exp(−λ_g · mean_rgb|∇_d R|)` as a
/// 1-channel map.
pub fn structure_weight<T: Scalar>(
    g: &mut Graph<T>,
    reflectance: Var,
    axis: Axis,
    lambda_g: f64,
    mode: WeightGradient,
) -> Result<Var> {
    let grad = g.spatial_gradient(reflectance, axis)?;
    let mag = g.abs(grad);
    let mag = g.channel_mean(mag)?;
    let expo = g.scale(mag, -lambda_g);
    let weight = g.exp(expo);
    Ok(match mode {
        WeightGradient::Joint => weight,
        WeightGradient::Detached => g.detach(weight),
    })
}

/// `Σ_{d ∈ {h, v}} mean(|∇_d I| ∘ exp(−λ_g · G_d(R)))`.
pub fn smoothness_loss<T: Scalar>(
    g: &mut Graph<T>,
    illumination: Var,
    reflectance: Var,
    lambda_g: f64,
    mode: WeightGradient,
) -> Result<Var> {
    let [ib, ic, ih, iw] = g.value(illumination).dims4("smoothness_loss")?;
    let [rb, _, rh, rw] = g.value(reflectance).dims4("smoothness_loss")?;
    if ic != 1 || (ib, ih, iw) != (rb, rh, rw) {
        return Err(Error::shape(
            "smoothness_loss",
            format!(
                "illumination {:?} must be 1-channel and match reflectance {:?}",
                g.value(illumination).shape(),
                g.value(reflectance).shape()
            ),
        ));
    }
    let mut total = None;
    for axis in [Axis::Horizontal, Axis::Vertical] {
        let gi = g.spatial_gradient(illumination, axis)?;
        let gi = g.abs(gi);
        let weight = structure_weight(g, reflectance, axis, lambda_g, mode)?;
        let weighted = g.mul(gi, weight)?;
        let term = g.reduce_mean(weighted)?;
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("two directions"))
}

/// Scalar components of the decomposition objective.
#[derive(Clone, Copy, Debug)]
pub struct DecomLoss {
    pub total: Var,
    pub recon: Var,
    pub ir: Var,
    /// Smoothness summed over both images, before `λ_is`.
    pub is: Var,
}

/// `L_recon + λ_ir L_ir + λ_is (L_is(I_low, R_low) + L_is(I_normal, R_normal))`.
pub fn decom_total_loss<T: Scalar>(
    g: &mut Graph<T>,
    low: DecomVars,
    normal: DecomVars,
    s_low: Var,
    s_normal: Var,
    lw: &LossWeights,
) -> Result<DecomLoss> {
    let recon = recon_loss(
        g,
        low.reflectance,
        low.illumination,
        normal.reflectance,
        normal.illumination,
        s_low,
        s_normal,
        lw,
    )?;
    let ir = invariable_reflectance_loss(g, low.reflectance, normal.reflectance)?;
    let is_low = smoothness_loss(g, low.illumination, low.reflectance, lw.lambda_g, lw.weight_gradient)?;
    let is_normal = smoothness_loss(g, normal.illumination, normal.reflectance, lw.lambda_g, lw.weight_gradient)?;
    let is = g.add(is_low, is_normal)?;
    let ir_term = g.scale(ir, lw.lambda_ir);
    let is_term = g.scale(is, lw.lambda_is);
    let total = g.add(recon, ir_term)?;
    let total = g.add(total, is_term)?;
    Ok(DecomLoss { total, recon, ir, is })
}

/// Scalar components of the enhancement objective.
#[derive(Clone, Copy, Debug)]
pub struct EnhanceLoss {
    pub total: Var,
    pub recon: Var,
    pub is: Var,
}

/// `mean|R_low ∘ Î − S_normal| + λ_is · L_is(Î, R_low)`.
pub fn enhance_loss<T: Scalar>(
    g: &mut Graph<T>,
    r_low: Var,
    i_hat: Var,
    s_normal: Var,
    lw: &LossWeights,
) -> Result<EnhanceLoss> {
    let recon = reconstruction_error(g, r_low, i_hat, s_normal)?;
    let is = smoothness_loss(g, i_hat, r_low, lw.lambda_g, lw.weight_gradient)?;
    let is_term = g.scale(is, lw.lambda_is);
    let total = g.add(recon, is_term)?;
    Ok(EnhanceLoss { total, recon, is })
}

fn check_same_spatial<T: Scalar>(g: &Graph<T>, op: &'static str, vars: &[Var]) -> Result<()> {
    let mut dims = None;
    for &v in vars {
        let [b, _, h, w] = g.value(v).dims4(op)?;
        match dims {
            None => dims = Some((b, h, w)),
            Some(d) if d != (b, h, w) => {
                return Err(Error::shape(op, format!("spatial mismatch {d:?} vs {:?}", (b, h, w))))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn constant(g: &mut Graph<f64>, shape: &[usize], v: f64) -> Var {
        g.constant(Tensor::full(shape, v))
    }

    fn value(g: &Graph<f64>, v: Var) -> f64 {
        g.value(v).item().unwrap()
    }

    #[test]
    fn defaults_carry_published_coefficients() {
        let lw = LossWeights::default();
        assert_eq!(lw.lambda_ir, 0.001);
        assert_eq!(lw.lambda_is, 0.1);
        assert_eq!(lw.lambda_g, 10.0);
        assert_eq!(lw.lambda_ij, [[1.0, 0.001], [0.001, 1.0]]);
        lw.validate().unwrap();
    }

    #[test]
    fn validate_rejects_off_unit_diagonal_and_negatives() {
        let mut lw = LossWeights::default();
        lw.lambda_ij[0][0] = 0.5;
        assert!(lw.validate().is_err());
        let lw = LossWeights {
            lambda_ir: -1.0,
            ..Default::default()
        };
        assert!(lw.validate().is_err());
    }

    #[test]
    fn recon_low_diagonal_term_only() {
        // normal side all zero, so only the low diagonal and the
        // normal/low cross term |R_n ∘ I_low − S_low| are nonzero
        let mut g = Graph::new();
        let r_low = constant(&mut g, &[1, 3, 4, 4], 0.5);
        let i_low = constant(&mut g, &[1, 1, 4, 4], 0.5);
        let r_n = constant(&mut g, &[1, 3, 4, 4], 0.0);
        let i_n = constant(&mut g, &[1, 1, 4, 4], 0.0);
        let s_low = constant(&mut g, &[1, 3, 4, 4], 0.2);
        let s_n = constant(&mut g, &[1, 3, 4, 4], 0.0);
        let lw = LossWeights::default();
        let l = recon_loss(&mut g, r_low, i_low, r_n, i_n, s_low, s_n, &lw).unwrap();
        // low/low: |0.25 - 0.2| = 0.05; normal/low: |0 - 0.2| · 0.001
        let expected = 0.05 + 0.001 * 0.2;
        assert!((value(&g, l) - expected).abs() < 1e-12);
    }

    #[test]
    fn invariable_reflectance_constants() {
        let mut g = Graph::new();
        let a = constant(&mut g, &[1, 3, 2, 2], 0.3);
        let b = constant(&mut g, &[1, 3, 2, 2], 0.7);
        let ab = invariable_reflectance_loss(&mut g, a, b).unwrap();
        let ba = invariable_reflectance_loss(&mut g, b, a).unwrap();
        assert!((value(&g, ab) - 0.4).abs() < 1e-12);
        assert_eq!(value(&g, ab), value(&g, ba));
        let aa = invariable_reflectance_loss(&mut g, a, a).unwrap();
        assert_eq!(value(&g, aa), 0.0);
    }

    #[test]
    fn smoothness_reduces_to_tv_on_flat_reflectance() {
        let mut g = Graph::new();
        let illum = g.constant(Tensor::from_fn(&[1, 1, 4, 4], |i| (i as f64 * 0.37).sin().abs()));
        let refl = constant(&mut g, &[1, 3, 4, 4], 0.4);
        let l = smoothness_loss(&mut g, illum, refl, 10.0, WeightGradient::Joint).unwrap();
        let x = g.value(illum).data().to_vec();
        let mut tv = 0.0;
        for r in 0..4 {
            for c in 0..3 {
                tv += (x[r * 4 + c + 1] - x[r * 4 + c]).abs();
            }
        }
        let mut tv_v = 0.0;
        for r in 0..3 {
            for c in 0..4 {
                tv_v += (x[(r + 1) * 4 + c] - x[r * 4 + c]).abs();
            }
        }
        let expected = tv / 16.0 + tv_v / 16.0;
        assert!((value(&g, l) - expected).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut g = Graph::new();
        let a = constant(&mut g, &[1, 3, 4, 4], 0.1);
        let b = constant(&mut g, &[1, 3, 4, 5], 0.1);
        assert!(invariable_reflectance_loss(&mut g, a, b).is_err());
        let i = constant(&mut g, &[1, 1, 4, 5], 0.1);
        assert!(smoothness_loss(&mut g, i, a, 10.0, WeightGradient::Joint).is_err());
    }

    #[test]
    fn detached_weight_blocks_reflectance_gradient() {
        let mut g = Graph::new();
        let illum = g.param(Tensor::from_fn(&[1, 1, 4, 4], |i| 0.1 + 0.05 * i as f64));
        let refl = g.param(Tensor::from_fn(&[1, 3, 4, 4], |i| ((i * 7) % 11) as f64 / 11.0));
        let l = smoothness_loss(&mut g, illum, refl, 10.0, WeightGradient::Detached).unwrap();
        g.backward(l).unwrap();
        assert!(g.grad(refl).is_none());
        assert!(g.grad(illum).unwrap().data().iter().any(|&v| v != 0.0));
    }
}
