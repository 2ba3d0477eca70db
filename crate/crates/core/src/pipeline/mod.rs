//! Inference: decomposition, illumination adjustment, optional reflectance
//! denoising and reconstruction, plus PSNR/SSIM evaluation.

mod metrics;

pub use metrics::{psnr, ssim, SSIM_WINDOW};

use crate::data::{GrayMap, ImageRgb, PairDataset};
use crate::denoise::{denoise_reflectance, DenoiseConfig};
use crate::error::{Error, Result};
use crate::model::{decom_forward, enhance_forward, EnhanceNetConfig, WeightStore};
use crate::numerics::Tensor;

/// How the illumination map is adjusted before reconstruction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Adjustment {
    /// Run Enhance-Net.
    #[default]
    Network,
    /// Keep `Î = I`; only Decom-Net weights are needed.
    Bypass,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnhanceOptions {
    pub denoise: Option<DenoiseConfig>,
    pub adjustment: Adjustment,
}

/// Output of [`enhance_image`] with every intermediate.
#[derive(Clone, Debug, PartialEq)]
pub struct Enhanced {
    pub enhanced: ImageRgb,
    /// Reflectance as decomposed, before any denoising.
    pub reflectance: ImageRgb,
    pub illumination: GrayMap,
    pub adjusted: GrayMap,
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Extends `img` on the bottom and right by reflection to `w x h`.
pub fn reflect_pad(img: &ImageRgb, w: usize, h: usize) -> Result<ImageRgb> {
    if w < img.width() || h < img.height() {
        return Err(Error::invalid("reflect_pad", "target is smaller than the image"));
    }
    if (w, h) == (img.width(), img.height()) {
        return Ok(img.clone());
    }
    ImageRgb::from_fn(w, h, |x, y| img.pixel(reflect(x, img.width()), reflect(y, img.height())))
}

fn crop_map(map: &GrayMap, w: usize, h: usize) -> Result<GrayMap> {
    let data = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| map.get(x, y))
        .collect();
    GrayMap::new(w, h, data)
}

/// Decom-Net applied to one image: `(R, I)`.
pub fn decompose_image(img: &ImageRgb, store: &WeightStore) -> Result<(ImageRgb, GrayMap)> {
    let out = decom_forward(store, &img.to_tensor())?;
    Ok((
        ImageRgb::from_tensor(&out.reflectance, 0)?,
        GrayMap::from_tensor(&out.illumination, 0)?,
    ))
}

/// Full enhancement with default options and optional denoising.
pub fn enhance_image(img: &ImageRgb, store: &WeightStore, denoise: Option<DenoiseConfig>) -> Result<Enhanced> {
    enhance_image_with(
        img,
        store,
        &EnhanceOptions {
            denoise,
            adjustment: Adjustment::Network,
        },
    )
}

/// `S_hat = clamp(R' ∘ Î, 0, 1)`. The image is reflect-padded to the
/// Enhance-Net's size multiple and every output is cropped back.
pub fn enhance_image_with(img: &ImageRgb, store: &WeightStore, opts: &EnhanceOptions) -> Result<Enhanced> {
    let divisor = match opts.adjustment {
        Adjustment::Network => EnhanceNetConfig::from_store(store)?.divisor(),
        Adjustment::Bypass => 1,
    };
    let (w, h) = (img.width(), img.height());
    let (pw, ph) = (w.div_ceil(divisor) * divisor, h.div_ceil(divisor) * divisor);
    let padded = reflect_pad(img, pw, ph)?;

    let decomposed = decom_forward(store, &padded.to_tensor())?;
    let adjusted: Tensor<f32> = match opts.adjustment {
        Adjustment::Network => enhance_forward(store, &decomposed.reflectance, &decomposed.illumination)?,
        Adjustment::Bypass => decomposed.illumination.clone(),
    };

    let reflectance = ImageRgb::from_tensor(&decomposed.reflectance, 0)?.crop(0, 0, w, h)?;
    let illumination = crop_map(&GrayMap::from_tensor(&decomposed.illumination, 0)?, w, h)?;
    let adjusted = crop_map(&GrayMap::from_tensor(&adjusted, 0)?, w, h)?;
    let base = match &opts.denoise {
        Some(cfg) => denoise_reflectance(&reflectance, &illumination, cfg)?,
        None => reflectance.clone(),
    };
    let enhanced = ImageRgb::from_fn(w, h, |x, y| {
        let i = adjusted.get(x, y);
        base.pixel(x, y).map(|r| (r * i).clamp(0.0, 1.0))
    })?;
    Ok(Enhanced {
        enhanced,
        reflectance,
        illumination,
        adjusted,
    })
}

/// Per-pair fidelity before and after enhancement.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub psnr_in: f64,
    pub psnr_out: f64,
    pub ssim_in: f64,
    pub ssim_out: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Column means, with id `mean`.
    pub mean: EvalRow,
}

pub const EVAL_HEADER: &str = "id,psnr_in,psnr_out,ssim_in,ssim_out";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(EVAL_HEADER);
        out.push('\n');
        for r in self.rows.iter().chain(std::iter::once(&self.mean)) {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.id, r.psnr_in, r.psnr_out, r.ssim_in, r.ssim_out
            ));
        }
        out
    }
}

/// Compares `low` and the enhanced `low` against `normal` for every pair.
pub fn evaluate(ds: &PairDataset, store: &WeightStore, opts: &EnhanceOptions) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::Data("no pairs to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(ds.len());
    for pair in &ds.pairs {
        let out = enhance_image_with(&pair.low, store, opts)?;
        rows.push(EvalRow {
            id: pair.id.clone(),
            psnr_in: psnr(&pair.low, &pair.normal)?,
            psnr_out: psnr(&out.enhanced, &pair.normal)?,
            ssim_in: ssim(&pair.low, &pair.normal)?,
            ssim_out: ssim(&out.enhanced, &pair.normal)?,
        });
    }
    let n = rows.len() as f64;
    let avg = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mean = EvalRow {
        id: "mean".into(),
        psnr_in: avg(|r| r.psnr_in),
        psnr_out: avg(|r| r.psnr_out),
        ssim_in: avg(|r| r.ssim_in),
        ssim_out: avg(|r| r.ssim_out),
    };
    Ok(EvalReport { rows, mean })
}

/// Light invariance of the learned reflectance over a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReflectanceGap {
    /// `mean|R_low − R_normal|`.
    pub reflectance: f64,
    /// `mean|S_low − S_normal|`.
    pub image: f64,
}

pub fn reflectance_gap(ds: &PairDataset, store: &WeightStore) -> Result<ReflectanceGap> {
    if ds.is_empty() {
        return Err(Error::Data("no pairs to compare".into()));
    }
    let (mut dr, mut ds_sum, mut n) = (0.0f64, 0.0f64, 0usize);
    for pair in &ds.pairs {
        let (r_low, _) = decompose_image(&pair.low, store)?;
        let (r_normal, _) = decompose_image(&pair.normal, store)?;
        let abs_sum = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>();
        dr += abs_sum(r_low.data(), r_normal.data());
        ds_sum += abs_sum(pair.low.data(), pair.normal.data());
        n += pair.low.data().len();
    }
    Ok(ReflectanceGap {
        reflectance: dr / n as f64,
        image: ds_sum / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_scene;
    use crate::model::{init_weights, DecomNetConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store() -> WeightStore {
        init_weights(&DecomNetConfig { depth: 3, width: 4 }, &EnhanceNetConfig { num_scales: 2, width: 4 }, 3).unwrap()
    }

    fn scene(w: usize, h: usize) -> ImageRgb {
        synthetic_scene(w, h, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    #[test]
    fn reflect_index_mirrors() {
        let got: Vec<usize> = (0..9).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn output_keeps_input_size() {
        let out = enhance_image(&scene(13, 7), &store(), None).unwrap();
        assert_eq!((out.enhanced.width(), out.enhanced.height()), (13, 7));
        assert_eq!((out.adjusted.width(), out.adjusted.height()), (13, 7));
        assert!(out.enhanced.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn bypass_reconstructs_decomposition() {
        let img = scene(12, 12);
        let s = store();
        let out = enhance_image_with(
            &img,
            &s,
            &EnhanceOptions {
                denoise: None,
                adjustment: Adjustment::Bypass,
            },
        )
        .unwrap();
        let (r, i) = decompose_image(&img, &s).unwrap();
        let expected = ImageRgb::from_fn(12, 12, |x, y| r.pixel(x, y).map(|v| (v * i.get(x, y)).clamp(0.0, 1.0))).unwrap();
        assert_eq!(out.enhanced, expected);
        assert_eq!(out.adjusted, out.illumination);
    }

    #[test]
    fn missing_enhance_weights_is_an_error() {
        let mut decom_only = WeightStore::new();
        for (name, p) in store().iter().filter(|(n, _)| n.starts_with("decom.")) {
            decom_only.insert(name, p.value.clone()).unwrap();
        }
        assert!(enhance_image(&scene(8, 8), &decom_only, None).is_err());
        assert!(enhance_image(&scene(8, 8), &WeightStore::new(), None).is_err());
    }

    #[test]
    fn eval_report_has_mean_row() {
        let ds = crate::data::synthetic_pair_dataset(2, 16, &Default::default(), 4).unwrap();
        let report = evaluate(&ds, &store(), &EnhanceOptions::default()).unwrap();
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 + 1);
        assert!(csv.lines().last().unwrap().starts_with("mean,"));
    }
}
