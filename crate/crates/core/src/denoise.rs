//! Illumination-relative denoising of reflectance.
//!
//! Decomposition amplifies noise where illumination is dark, so the filtered
//! reflectance is blended in with weight `w(x) = (1 − I(x))^p`: full
//! filtering where `I = 0`, pass-through where `I = 1`. The filter itself is
//! non-local means.

use crate::data::{GrayMap, ImageRgb};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenoiseConfig {
    /// Non-local means strength `h`, in image units.
    pub base_strength: f64,
    /// Patch radius; patches are `(2r + 1)²`.
    pub window: usize,
    /// Search radius around each pixel.
    pub search: usize,
    /// Exponent `p` of the blend weight `(1 − I)^p`.
    pub illumination_exponent: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            base_strength: 0.08,
            window: 3,
            search: 7,
            illumination_exponent: 1.0,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.search == 0 {
            return Err(Error::invalid("DenoiseConfig", "window and search radii must be >= 1"));
        }
        if !(self.base_strength >= 0.0 && self.base_strength.is_finite()) {
            return Err(Error::invalid("DenoiseConfig", "base_strength must be finite and nonnegative"));
        }
        if !(self.illumination_exponent >= 0.0 && self.illumination_exponent.is_finite()) {
            return Err(Error::invalid("DenoiseConfig", "illumination_exponent must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Non-local means: each pixel becomes the average of pixels in its search
/// window weighted by `exp(−d² / h²)`, with `d²` the mean squared difference
/// between the surrounding patches. Borders replicate. `h = 0` is the
/// identity.
pub fn base_denoiser(img: &ImageRgb, h: f64, cfg: &DenoiseConfig) -> Result<ImageRgb> {
    cfg.validate()?;
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::invalid("base_denoiser", format!("strength {h} must be finite and nonnegative")));
    }
    if h == 0.0 {
        return Ok(img.clone());
    }
    let (w, ht) = (img.width(), img.height());
    let src = img.data();
    let px = |x: isize, y: isize| -> usize {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, ht as isize - 1) as usize;
        (yc * w + xc) * 3
    };
    let r = cfg.window as isize;
    let s = cfg.search as isize;
    let patch_norm = 1.0 / (3 * (2 * cfg.window + 1).pow(2)) as f64;
    let inv_h2 = 1.0 / (h * h);

    let mut out = Vec::with_capacity(src.len());
    for y in 0..ht as isize {
        for x in 0..w as isize {
            let center = px(x, y);
            let mut acc = [0.0f64; 3];
            let mut wsum = 0.0f64;
            for dy in -s..=s {
                for dx in -s..=s {
                    let (qx, qy) = (x + dx, y + dy);
                    if qx < 0 || qy < 0 || qx >= w as isize || qy >= ht as isize {
                        continue;
                    }
                    let mut d2 = 0.0f64;
                    for oy in -r..=r {
                        for ox in -r..=r {
                            let a = px(x + ox, y + oy);
                            let b = px(qx + ox, qy + oy);
                            for c in 0..3 {
                                let d = (src[a + c] - src[b + c]) as f64;
                                d2 += d * d;
                            }
                        }
                    }
                    let weight = (-d2 * patch_norm * inv_h2).exp();
                    let q = px(qx, qy);
                    for c in 0..3 {
                        acc[c] += weight * (src[q + c] - src[center + c]) as f64;
                    }
                    wsum += weight;
                }
            }
            // offsets from the center keep constant regions exactly fixed
            for c in 0..3 {
                let v = src[center + c] as f64 + acc[c] / wsum;
                out.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    ImageRgb::new(w, ht, out)
}

/// Blend weight `(1 − I)^p` for an illumination value.
pub fn blend_weight(illumination: f32, exponent: f64) -> f64 {
    (1.0 - illumination.clamp(0.0, 1.0) as f64).powf(exponent)
}

/// `out = (1 − w)·R + w·NLM(R)` with `w = (1 − I)^p` per pixel.
pub fn denoise_reflectance(reflectance: &ImageRgb, illumination: &GrayMap, cfg: &DenoiseConfig) -> Result<ImageRgb> {
    cfg.validate()?;
    if (reflectance.width(), reflectance.height()) != (illumination.width(), illumination.height()) {
        return Err(Error::shape(
            "denoise_reflectance",
            format!(
                "reflectance {}x{} vs illumination {}x{}",
                reflectance.width(),
                reflectance.height(),
                illumination.width(),
                illumination.height()
            ),
        ));
    }
    let filtered = base_denoiser(reflectance, cfg.base_strength, cfg)?;
    let mut out = Vec::with_capacity(reflectance.data().len());
    for (i, (orig, den)) in reflectance
        .data()
        .chunks_exact(3)
        .zip(filtered.data().chunks_exact(3))
        .enumerate()
    {
        let w = blend_weight(illumination.data()[i], cfg.illumination_exponent);
        for c in 0..3 {
            let v = if w == 0.0 {
                orig[c]
            } else if w == 1.0 {
                den[c]
            } else {
                ((1.0 - w) * orig[c] as f64 + w * den[c] as f64).clamp(0.0, 1.0) as f32
            };
            out.push(v);
        }
    }
    ImageRgb::new(reflectance.width(), reflectance.height(), out)
}
