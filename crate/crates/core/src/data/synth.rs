//! Parametric low-light synthesis and histogram fitting of its parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::histogram::YHistogram;
use super::image::ImageRgb;
use crate::error::{Error, Result};

/// `out = clamp(beta * img^gamma + N(0, noise_sigma), 0, 1)` per channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DarkeningParams {
    pub gamma: f64,
    pub beta: f64,
    pub noise_sigma: f64,
}

impl DarkeningParams {
    pub const IDENTITY: Self = Self {
        gamma: 1.0,
        beta: 1.0,
        noise_sigma: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("DarkeningParams", format!("gamma {} must be >= 1", self.gamma)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid("DarkeningParams", format!("beta {} must lie in (0, 1]", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.noise_sigma) {
            return Err(Error::invalid(
                "DarkeningParams",
                format!("noise_sigma {} must lie in [0, 1]", self.noise_sigma),
            ));
        }
        Ok(())
    }
}

pub fn synth_low_light<R: Rng + ?Sized>(img: &ImageRgb, p: &DarkeningParams, rng: &mut R) -> Result<ImageRgb> {
    p.validate()?;
    let noise = (p.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, p.noise_sigma).expect("sigma validated"));
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let mut out = p.beta * (v as f64).powf(p.gamma);
            if let Some(n) = &noise {
                out += n.sample(rng);
            }
            out.clamp(0.0, 1.0) as f32
        })
        .collect();
    ImageRgb::new(img.width(), img.height(), data)
}

/// Darkens each image in order from one generator seeded with `seed`.
pub fn darken_images(images: &[ImageRgb], p: &DarkeningParams, seed: u64) -> Result<Vec<ImageRgb>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    images.iter().map(|img| synth_low_light(img, p, &mut rng)).collect()
}

/// Search grid and noise level for [`fit_darkening_params`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub noise_sigma: f64,
    /// Noise seed; every grid point reuses it so the search is
    /// deterministic.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub params: DarkeningParams,
    /// L1 distance between normalized histograms at `params`.
    pub distance: f64,
}

/// `gamma ∈ {1, 1.25, ..., 5}`.
pub fn gamma_grid() -> Vec<f64> {
    (0..=16).map(|i| 1.0 + 0.25 * i as f64).collect()
}

/// `beta ∈ {0.05, 0.10, ..., 1}`.
pub fn beta_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 20.0).collect()
}

/// Grid search for the darkening whose pooled luma histogram is closest
/// (L1, normalized) to `target`. Ties go to smaller gamma, then larger
/// beta.
pub fn fit_darkening_params(normal: &[ImageRgb], target: &YHistogram, opts: &FitOptions) -> Result<FitResult> {
    if normal.is_empty() {
        return Err(Error::Data("fit_darkening_params needs at least one image".into()));
    }
    if target.total() == 0 {
        return Err(Error::Data("target histogram is empty".into()));
    }
    let mut best: Option<FitResult> = None;
    for gamma in gamma_grid() {
        for &beta in beta_grid().iter().rev() {
            let params = DarkeningParams {
                gamma,
                beta,
                noise_sigma: opts.noise_sigma,
            };
            let hist = darkened_histogram(normal, &params, opts.seed)?;
            let distance = hist.l1_distance(target);
            if best.is_none_or(|b| distance < b.distance) {
                best = Some(FitResult { params, distance });
            }
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Luma histogram of `images` darkened with `p`, without materializing the
/// darkened images.
pub fn darkened_histogram(images: &[ImageRgb], p: &DarkeningParams, seed: u64) -> Result<YHistogram> {
    let mut hist = YHistogram::default();
    for img in darken_images(images, p, seed)? {
        hist.add_image(&img);
    }
    Ok(hist)
}
