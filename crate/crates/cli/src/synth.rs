use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use retinex_core::data::{
    darken_images, fit_darkening_params, read_png, synthetic_scene, write_png, y_histogram, DarkeningParams,
    FitOptions, ImageRgb, YHistogram,
};
use retinex_core::Error;

use crate::common::{create_dir, file_stem, manifest, png_files_in, usage, write_text};
use crate::{HistArgs, SynthArgs};

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let (names, normal): (Vec<String>, Vec<ImageRgb>) = match (&args.input_dir, args.scenes) {
        (Some(dir), _) => {
            let files = png_files_in(dir)?;
            if files.is_empty() {
                return Err(Error::Data(format!("no PNG images found in {}", dir.display())).into());
            }
            let mut names = Vec::with_capacity(files.len());
            let mut images = Vec::with_capacity(files.len());
            for f in &files {
                names.push(format!("{}.png", file_stem(f)));
                images.push(read_png(f)?);
            }
            (names, images)
        }
        (None, Some(n)) => {
            if n == 0 || args.size == 0 {
                return Err(usage("--scenes and --size must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let images = (0..n)
                .map(|_| synthetic_scene(args.size, args.size, &mut rng))
                .collect::<retinex_core::Result<Vec<_>>>()?;
            ((0..n).map(|i| format!("scene_{i:04}.png")).collect(), images)
        }
        (None, None) => return Err(usage("either --input-dir or --scenes is required")),
    };

    let target = args.target_hist.as_deref().filter(|t| *t != "none");
    let (params, distance) = match target {
        Some(path) => {
            if args.gamma.is_some() || args.beta.is_some() {
                return Err(usage("--gamma/--beta cannot be combined with --target-hist"));
            }
            let hist = YHistogram::read_csv(path)?;
            let fit = fit_darkening_params(
                &normal,
                &hist,
                &FitOptions {
                    noise_sigma: args.sigma,
                    seed: args.seed,
                },
            )?;
            (fit.params, Some(fit.distance))
        }
        None => {
            let (Some(gamma), Some(beta)) = (args.gamma, args.beta) else {
                return Err(usage("--gamma and --beta are required without --target-hist"));
            };
            let p = DarkeningParams {
                gamma,
                beta,
                noise_sigma: args.sigma,
            };
            p.validate().map_err(|e| usage(e.to_string()))?;
            (p, None)
        }
    };

    let low = darken_images(&normal, &params, args.seed)?;
    let (low_dir, high_dir) = (args.output_dir.join("low"), args.output_dir.join("high"));
    create_dir(&low_dir)?;
    create_dir(&high_dir)?;
    for ((name, n), l) in names.iter().zip(&normal).zip(&low) {
        write_png(n, high_dir.join(name))?;
        write_png(l, low_dir.join(name))?;
    }

    let mut entries = vec![
        ("count", names.len().to_string()),
        (
            "source",
            match &args.input_dir {
                Some(d) => d.display().to_string(),
                None => format!("procedural {}x{}", args.size, args.size),
            },
        ),
        ("fitted", target.is_some().to_string()),
        ("gamma", params.gamma.to_string()),
        ("beta", params.beta.to_string()),
        ("sigma", params.noise_sigma.to_string()),
        ("seed", args.seed.to_string()),
    ];
    if let Some(d) = distance {
        entries.push(("histogram_distance", d.to_string()));
    }
    if let Some(t) = target {
        entries.push(("target_hist", t.to_owned()));
    }
    write_text(&args.output_dir.join("manifest.txt"), &manifest(&entries))?;
    println!(
        "wrote {} pairs to {} (gamma {}, beta {}, sigma {})",
        names.len(),
        args.output_dir.display(),
        params.gamma,
        params.beta,
        params.noise_sigma
    );
    Ok(())
}

pub fn cmd_hist(args: &HistArgs) -> Result<()> {
    let files = png_files_in(&args.input_dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no PNG images found in {}", args.input_dir.display())).into());
    }
    let images = files.iter().map(read_png).collect::<retinex_core::Result<Vec<_>>>()?;
    let hist = y_histogram(&images)?;
    hist.write_csv(&args.out)?;
    println!(
        "{} images, {} pixels, mean Y {:.3}",
        images.len(),
        hist.total(),
        hist.mean_luma()
    );
    Ok(())
}
