mod common;

use common::rng;
use rand::Rng;
use retinex_core::data::{luma_unit, synthetic_pair_dataset, synthetic_scene, DarkeningRange, GrayMap, ImageRgb};
use retinex_core::denoise::DenoiseConfig;
use retinex_core::model::{decom_forward, enhance_forward, init_weights, DecomNetConfig, EnhanceNetConfig, WeightStore};
use retinex_core::pipeline::{
    decompose_image, enhance_image, enhance_image_with, evaluate, psnr, reflectance_gap, ssim, Adjustment,
    EnhanceOptions,
};

fn store() -> WeightStore {
    init_weights(
        &DecomNetConfig { depth: 3, width: 4 },
        &EnhanceNetConfig { num_scales: 2, width: 4 },
        2,
    )
    .unwrap()
}

fn scene(w: usize, h: usize, seed: u64) -> ImageRgb {
    synthetic_scene(w, h, &mut rng(seed)).unwrap()
}

fn random_image(w: usize, h: usize, seed: u64) -> ImageRgb {
    let mut r = rng(seed);
    ImageRgb::from_fn(w, h, |_, _| [r.random(), r.random(), r.random()]).unwrap()
}

#[test]
fn psnr_matches_a_scalar_loop() {
    let a = random_image(9, 7, 1);
    let b = random_image(9, 7, 2);
    let mut sq = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        sq += ((x - y) as f64).powi(2);
    }
    let expected = 10.0 * (1.0 / (sq / a.data().len() as f64)).log10();
    assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-9);
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    assert!(psnr(&a, &random_image(7, 9, 3)).is_err());
}

#[test]
fn ssim_of_two_constants_matches_the_luminance_term() {
    let a = ImageRgb::filled(16, 16, [0.5; 3]).unwrap();
    let b = ImageRgb::filled(16, 16, [0.6; 3]).unwrap();
    let (ma, mb) = (luma_unit([0.5; 3]), luma_unit([0.6; 3]));
    let c1 = 0.01f64.powi(2);
    let expected = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn ssim_is_symmetric_and_one_on_identical_inputs() {
    let a = random_image(20, 17, 4);
    let b = random_image(20, 17, 5);
    assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    assert!(ssim(&random_image(10, 20, 6), &random_image(10, 20, 7)).is_err());
}

#[test]
fn divisible_images_skip_padding_transparently() {
    let s = store();
    let img = scene(16, 12, 8);
    let out = enhance_image(&img, &s, None).unwrap();

    let d = decom_forward(&s, &img.to_tensor()).unwrap();
    let i_hat = GrayMap::from_tensor(&enhance_forward(&s, &d.reflectance, &d.illumination).unwrap(), 0).unwrap();
    let r = ImageRgb::from_tensor(&d.reflectance, 0).unwrap();
    let direct = ImageRgb::from_fn(16, 12, |x, y| r.pixel(x, y).map(|v| (v * i_hat.get(x, y)).clamp(0.0, 1.0))).unwrap();
    assert_eq!(out.enhanced, direct);
    assert_eq!(out.adjusted, i_hat);
}

#[test]
fn outputs_keep_the_input_size_and_range() {
    let s = store();
    for (w, h) in [(13, 11), (16, 16), (9, 30)] {
        let out = enhance_image(&scene(w, h, 9), &s, Some(DenoiseConfig::default())).unwrap();
        assert_eq!((out.enhanced.width(), out.enhanced.height()), (w, h));
        assert_eq!((out.adjusted.width(), out.adjusted.height()), (w, h));
        assert!(out.enhanced.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn bypass_reproduces_the_decomposition() {
    let s = store();
    let img = scene(13, 10, 10);
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
    let expected = ImageRgb::from_fn(13, 10, |x, y| r.pixel(x, y).map(|v| (v * i.get(x, y)).clamp(0.0, 1.0))).unwrap();
    assert_eq!(out.enhanced, expected);
}

#[test]
fn enhancement_is_deterministic() {
    let s = store();
    let img = scene(15, 15, 11);
    let cfg = Some(DenoiseConfig::default());
    assert_eq!(enhance_image(&img, &s, cfg).unwrap(), enhance_image(&img, &s, cfg).unwrap());
}

#[test]
fn evaluation_reports_every_pair_and_a_mean() {
    let s = store();
    let ds = synthetic_pair_dataset(3, 16, &DarkeningRange::default(), 12).unwrap();
    let report = evaluate(&ds, &s, &EnhanceOptions::default()).unwrap();
    assert_eq!(report.rows.len(), 3);
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "id,psnr_in,psnr_out,ssim_in,ssim_out");
    assert_eq!(lines.len(), 1 + 3 + 1);
    assert!(lines[4].starts_with("mean,"));
    let mean_in = report.rows.iter().map(|r| r.psnr_in).sum::<f64>() / 3.0;
    assert!((report.mean.psnr_in - mean_in).abs() < 1e-12);
}

#[test]
fn reflectance_gap_compares_against_the_raw_gap() {
    let s = store();
    let ds = synthetic_pair_dataset(2, 16, &DarkeningRange::default(), 13).unwrap();
    let gap = reflectance_gap(&ds, &s).unwrap();
    let mut raw = 0.0;
    let mut n = 0.0;
    for p in &ds.pairs {
        for (a, b) in p.low.data().iter().zip(p.normal.data()) {
            raw += (a - b).abs() as f64;
            n += 1.0;
        }
    }
    assert!((gap.image - raw / n).abs() < 1e-9);
    assert!(gap.reflectance >= 0.0);
}
