//! ITU-R BT.601 studio-swing YCbCr.

use super::image::ImageRgb;
use crate::error::Result;

const FORWARD: [[f64; 3]; 3] = [
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
];
const OFFSET: [f64; 3] = [16.0, 128.0, 128.0];

/// Luma of an RGB triple in `[0, 1]`, on the 16..235 scale.
pub fn luma_studio(rgb: [f32; 3]) -> f64 {
    OFFSET[0] + dot(FORWARD[0], rgb)
}

/// Unit-range luma `0.299 R + 0.587 G + 0.114 B`.
pub fn luma_unit(rgb: [f32; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

pub fn rgb_to_ycbcr_pixel(rgb: [f32; 3]) -> [f64; 3] {
    [0, 1, 2].map(|k| OFFSET[k] + dot(FORWARD[k], rgb))
}

pub fn ycbcr_to_rgb_pixel(ycc: [f64; 3]) -> [f64; 3] {
    let inv = inverse();
    let centered = [ycc[0] - OFFSET[0], ycc[1] - OFFSET[1], ycc[2] - OFFSET[2]];
    [0, 1, 2].map(|k| inv[k][0] * centered[0] + inv[k][1] * centered[1] + inv[k][2] * centered[2])
}

/// Planar YCbCr image.
#[derive(Clone, Debug, PartialEq)]
pub struct YCbCrImage {
    pub width: usize,
    pub height: usize,
    pub y: Vec<f64>,
    pub cb: Vec<f64>,
    pub cr: Vec<f64>,
}

pub fn rgb_to_ycbcr(img: &ImageRgb) -> YCbCrImage {
    let n = img.width() * img.height();
    let (mut y, mut cb, mut cr) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in img.pixels() {
        let [a, b, c] = rgb_to_ycbcr_pixel(px);
        y.push(a);
        cb.push(b);
        cr.push(c);
    }
    YCbCrImage {
        width: img.width(),
        height: img.height(),
        y,
        cb,
        cr,
    }
}

/// Converts back to RGB, clamping to `[0, 1]`.
pub fn ycbcr_to_rgb(img: &YCbCrImage) -> Result<ImageRgb> {
    let data = (0..img.y.len())
        .flat_map(|i| ycbcr_to_rgb_pixel([img.y[i], img.cb[i], img.cr[i]]).map(|v| v.clamp(0.0, 1.0) as f32))
        .collect();
    ImageRgb::new(img.width, img.height, data)
}

fn dot(row: [f64; 3], rgb: [f32; 3]) -> f64 {
    row[0] * rgb[0] as f64 + row[1] * rgb[1] as f64 + row[2] * rgb[2] as f64
}

fn inverse() -> [[f64; 3]; 3] {
    let m = FORWARD;
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * cof(1, 2, 1, 2) - m[0][1] * cof(1, 2, 0, 2) + m[0][2] * cof(1, 2, 0, 1);
    [
        [cof(1, 2, 1, 2) / det, -cof(0, 2, 1, 2) / det, cof(0, 1, 1, 2) / det],
        [-cof(1, 2, 0, 2) / det, cof(0, 2, 0, 2) / det, -cof(0, 1, 0, 2) / det],
        [cof(1, 2, 0, 1) / det, -cof(0, 2, 0, 1) / det, cof(0, 1, 0, 1) / det],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_white_and_mid_gray() {
        assert_eq!(luma_studio([0.0; 3]), 16.0);
        assert!((luma_studio([1.0; 3]) - 235.0).abs() < 1e-9);
        // (65.481 + 128.553 + 24.966) * 0.5 + 16
        assert!((luma_studio([0.5; 3]) - 125.5).abs() < 1e-9);
    }

    #[test]
    fn gray_has_neutral_chroma() {
        let [_, cb, cr] = rgb_to_ycbcr_pixel([0.3; 3]);
        assert!((cb - 128.0).abs() < 1e-3 && (cr - 128.0).abs() < 1e-3);
    }

    #[test]
    fn round_trip_recovers_rgb() {
        for rgb in [[0.1f32, 0.7, 0.3], [1.0, 0.0, 0.5], [0.0, 0.0, 0.0]] {
            let back = ycbcr_to_rgb_pixel(rgb_to_ycbcr_pixel(rgb));
            for k in 0..3 {
                assert!((back[k] - rgb[k] as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn image_round_trip() {
        let img = ImageRgb::from_fn(5, 4, |x, y| [x as f32 / 5.0, y as f32 / 4.0, 0.5]).unwrap();
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&img)).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
