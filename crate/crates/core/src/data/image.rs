use std::path::Path;

use image::{ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// RGB image with interleaved `[row][col][channel]` values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("ImageRgb", "extents must be nonzero"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::shape(
                "ImageRgb",
                format!("{width}x{height} needs {} values, got {}", width * height * 3, data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("ImageRgb", format!("value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, data)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Crops a `w x h` window at `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::invalid(
                "crop",
                format!("window {w}x{h}+{x}+{y} exceeds {}x{}", self.width, self.height),
            ));
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for row in y..y + h {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Self::new(w, h, data)
    }

    /// `[1, 3, H, W]` planar tensor.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let plane = self.width * self.height;
        Tensor::from_fn(&[1, 3, self.height, self.width], |i| self.data[(i % plane) * 3 + i / plane])
    }

    /// Writes the three planes of this image into `out` (`3 * H * W` values).
    pub(crate) fn write_planar(&self, out: &mut [f32]) {
        let plane = self.width * self.height;
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = px[c];
            }
        }
    }

    /// Image from batch item `index` of a `[B, 3, H, W]` tensor, clamped to
    /// `[0, 1]`.
    pub fn from_tensor(t: &Tensor<f32>, index: usize) -> Result<Self> {
        let [b, c, h, w] = t.dims4("ImageRgb::from_tensor")?;
        if index >= b || !(c == 3 || c == 1) {
            return Err(Error::shape(
                "ImageRgb::from_tensor",
                format!("cannot take RGB item {index} from shape {:?}", t.shape()),
            ));
        }
        let plane = h * w;
        let base = index * c * plane;
        let src = &t.data()[base..base + c * plane];
        let mut data = Vec::with_capacity(plane * 3);
        for p in 0..plane {
            for ch in 0..3 {
                let v = if c == 3 { src[ch * plane + p] } else { src[p] };
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self::new(w, h, data)
    }
}

/// One-channel map in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::shape(
                "GrayMap",
                format!("{width}x{height} map with {} values", data.len()),
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, v: f32) -> Result<Self> {
        Self::new(width, height, vec![v; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(vec![1, 1, self.height, self.width], self.data.clone()).expect("extents checked")
    }

    pub fn from_tensor(t: &Tensor<f32>, index: usize) -> Result<Self> {
        let [b, c, h, w] = t.dims4("GrayMap::from_tensor")?;
        if index >= b || c != 1 {
            return Err(Error::shape("GrayMap::from_tensor", format!("shape {:?}", t.shape())));
        }
        Self::new(w, h, t.data()[index * h * w..(index + 1) * h * w].to_vec())
    }

    /// Gray RGB rendering with all three channels equal.
    pub fn to_rgb(&self) -> ImageRgb {
        let data = self
            .data
            .iter()
            .flat_map(|&v| {
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                [v, v, v]
            })
            .collect();
        ImageRgb::new(self.width, self.height, data).expect("clamped")
    }
}

fn quantize(v: f32) -> u8 {
    // round half up
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Reads an 8-bit PNG as RGB in `[0, 1]` (`value / 255`). Grayscale and
/// alpha variants are converted; 16-bit files are rejected.
pub fn read_png(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(image::ImageFormat::Png) {
        return Err(Error::Image {
            path: path.into(),
            detail: "not a PNG file".into(),
        });
    }
    let img = reader.decode().map_err(|e| Error::Image {
        path: path.into(),
        detail: e.to_string(),
    })?;
    use image::ColorType::*;
    match img.color() {
        L8 | La8 | Rgb8 | Rgba8 => {}
        other => {
            return Err(Error::Image {
                path: path.into(),
                detail: format!("unsupported color type {other:?}, expected 8-bit"),
            })
        }
    }
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    ImageRgb::new(w as usize, h as usize, data)
}

/// Writes an 8-bit RGB PNG, rounding `value * 255` half up.
pub fn write_png(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    let buf: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, raw).expect("buffer sized from image");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.into(),
            detail: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(0.49 / 255.0), 0);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(ImageRgb::new(1, 1, vec![0.0, 1.2, 0.0]).is_err());
        assert!(ImageRgb::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn tensor_layout_is_planar() {
        let img = ImageRgb::new(2, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[1, 3, 1, 2]);
        assert_eq!(t.data(), &[0.1, 0.4, 0.2, 0.5, 0.3, 0.6]);
        assert_eq!(ImageRgb::from_tensor(&t, 0).unwrap(), img);
    }

    #[test]
    fn crop_extracts_window() {
        let img = ImageRgb::from_fn(4, 3, |x, y| [x as f32 / 4.0, y as f32 / 3.0, 0.0]).unwrap();
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.pixel(0, 0), img.pixel(1, 1));
        assert_eq!(c.pixel(1, 1), img.pixel(2, 2));
        assert!(img.crop(3, 0, 2, 1).is_err());
    }

    #[test]
    fn gray_to_rgb_repeats_channel() {
        let m = GrayMap::new(2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(m.to_rgb().data(), &[0.25, 0.25, 0.25, 0.75, 0.75, 0.75]);
    }
}
