use crate::data::{luma_unit, ImageRgb};
use crate::error::{Error, Result};

/// SSIM window extent; images must be at least this large.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn same_size(op: &'static str, a: &ImageRgb, b: &ImageRgb) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::shape(
            op,
            format!("{}x{} vs {}x{}", a.width(), a.height(), b.width(), b.height()),
        ));
    }
    Ok(())
}

/// `10·log10(1 / MSE)` over all channels, `+∞` for identical images.
pub fn psnr(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    same_size("psnr", a, b)?;
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sse / a.data().len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / s).collect();
    g.iter().flat_map(|&gy| g.iter().map(move |&gx| gy * gx)).collect()
}

/// Single-scale SSIM on luma, mean over all fully inside 11×11 Gaussian
/// windows.
pub fn ssim(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    same_size("ssim", a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            format!("image {w}x{h} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let la: Vec<f64> = a.pixels().map(luma_unit).collect();
    let lb: Vec<f64> = b.pixels().map(luma_unit).collect();
    let win = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                let row = (y0 + dy) * w + x0;
                for dx in 0..SSIM_WINDOW {
                    let g = win[dy * SSIM_WINDOW + dx];
                    let (va, vb) = (la[row + dx], lb[row + dx]);
                    ma += g * va;
                    mb += g * vb;
                    saa += g * va * va;
                    sbb += g * vb * vb;
                    sab += g * va * vb;
                }
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (var_a + var_b + C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_of_uniform_offset() {
        let a = ImageRgb::filled(5, 4, [0.2, 0.3, 0.4]).unwrap();
        let b = ImageRgb::filled(5, 4, [0.3, 0.4, 0.5]).unwrap();
        // float rounding of 0.1 keeps this a hair off 20
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn window_weights_sum_to_one() {
        let s: f64 = gaussian_window().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_and_size_checks() {
        let a = ImageRgb::from_fn(16, 12, |x, y| [(x as f32) / 16.0, (y as f32) / 12.0, 0.5]).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let small = ImageRgb::filled(10, 20, [0.5; 3]).unwrap();
        assert!(ssim(&small, &small).is_err());
        assert!(ssim(&a, &small).is_err());
    }
}
