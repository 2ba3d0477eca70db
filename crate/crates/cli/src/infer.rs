use anyhow::Result;
use retinex_core::data::{load_pair_dataset, luma_unit, read_png, write_png, ImageRgb};
use retinex_core::denoise::DenoiseConfig;
use retinex_core::model::load_weights;
use retinex_core::pipeline::{decompose_image, enhance_image, evaluate, EnhanceOptions};
use retinex_core::Error;

use crate::common::{create_dir, file_stem, input_images, write_text};
use crate::{DecomposeArgs, EnhanceArgs, EvalArgs, Toggle};

fn denoise(t: Toggle) -> Option<DenoiseConfig> {
    (t == Toggle::On).then(DenoiseConfig::default)
}

fn mean_luma(img: &ImageRgb) -> f64 {
    img.pixels().map(luma_unit).sum::<f64>() / (img.width() * img.height()) as f64
}

pub fn cmd_decompose(args: &DecomposeArgs) -> Result<()> {
    let store = load_weights(&args.weights)?;
    let inputs = input_images(&args.input)?;
    create_dir(&args.out_dir)?;
    for path in &inputs {
        let img = read_png(path)?;
        let (r, i) = decompose_image(&img, &store)?;
        let name = file_stem(path);
        write_png(&r, args.out_dir.join(format!("{name}_R.png")))?;
        write_png(&i.to_rgb(), args.out_dir.join(format!("{name}_I.png")))?;
        let err: f64 = img
            .data()
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let px = k / 3;
                let (x, y) = (px % img.width(), px / img.width());
                (r.data()[k] * i.get(x, y) - s).abs() as f64
            })
            .sum::<f64>()
            / img.data().len() as f64;
        println!("{name}: mean |R*I - S| = {err:.5}");
    }
    Ok(())
}

pub fn cmd_enhance(args: &EnhanceArgs) -> Result<()> {
    let store = load_weights(&args.weights)?;
    let inputs = input_images(&args.input)?;
    create_dir(&args.out_dir)?;
    for path in &inputs {
        let img = read_png(path)?;
        let out = enhance_image(&img, &store, denoise(args.denoise))?;
        let name = file_stem(path);
        write_png(&out.enhanced, args.out_dir.join(format!("{name}_enhanced.png")))?;
        if args.save_intermediates {
            write_png(&out.reflectance, args.out_dir.join(format!("{name}_R.png")))?;
            write_png(&out.illumination.to_rgb(), args.out_dir.join(format!("{name}_I.png")))?;
            write_png(&out.adjusted.to_rgb(), args.out_dir.join(format!("{name}_Ihat.png")))?;
        }
        println!(
            "{name}: mean luma {:.4} -> {:.4}",
            mean_luma(&img),
            mean_luma(&out.enhanced)
        );
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let store = load_weights(&args.weights)?;
    let data = load_pair_dataset(&args.data_dir, args.seed)?;
    if let Some(issue) = data.issues.first() {
        return Err(Error::Data(format!("{}: {}", issue.path.display(), issue.message)).into());
    }
    let ds = if args.all { data.all() } else { data.eval.clone() };
    if ds.is_empty() {
        return Err(Error::Data(format!(
            "no {} pairs in {}",
            if args.all { "image" } else { "held-out" },
            args.data_dir.display()
        ))
        .into());
    }
    let opts = EnhanceOptions {
        denoise: denoise(args.denoise),
        ..EnhanceOptions::default()
    };
    let report = evaluate(&ds, &store, &opts)?;
    let csv = report.to_csv();
    match &args.report {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    let m = &report.mean;
    println!(
        "{} pairs: PSNR {:.2} -> {:.2} dB, SSIM {:.4} -> {:.4}",
        report.rows.len(),
        m.psnr_in,
        m.psnr_out,
        m.ssim_in,
        m.ssim_out
    );
    Ok(())
}
