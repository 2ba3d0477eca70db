use std::fmt::Write as _;
use std::path::Path;

use super::color::luma_studio;
use super::image::ImageRgb;
use crate::error::{Error, Result};

pub const Y_MIN: usize = 16;
pub const Y_MAX: usize = 240;
pub const Y_BINS: usize = Y_MAX - Y_MIN + 1;

/// Integer-binned studio-range luma histogram over `16..=240`, bin width 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct YHistogram {
    bins: Vec<u64>,
    total: u64,
}

impl Default for YHistogram {
    fn default() -> Self {
        Self {
            bins: vec![0; Y_BINS],
            total: 0,
        }
    }
}

impl YHistogram {
    pub fn from_counts(bins: Vec<u64>) -> Result<Self> {
        if bins.len() != Y_BINS {
            return Err(Error::Data(format!("histogram needs {Y_BINS} bins, got {}", bins.len())));
        }
        let total = bins.iter().sum();
        Ok(Self { bins, total })
    }

    pub fn bins(&self) -> &[u64] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count in the bin labelled `y` (16..=240).
    pub fn count(&self, y: usize) -> u64 {
        self.bins[y - Y_MIN]
    }

    pub fn add_luma(&mut self, y: f64) {
        let idx = (y.round() as i64).clamp(Y_MIN as i64, Y_MAX as i64) as usize - Y_MIN;
        self.bins[idx] += 1;
        self.total += 1;
    }

    pub fn add_image(&mut self, img: &ImageRgb) {
        for px in img.pixels() {
            self.add_luma(luma_studio(px));
        }
    }

    pub fn mean_luma(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let weighted: f64 = self
            .bins
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + Y_MIN) as f64 * c as f64)
            .sum();
        weighted / self.total as f64
    }

    /// Bin fractions summing to one (all zero for an empty histogram).
    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total.max(1) as f64;
        self.bins.iter().map(|&c| c as f64 / t).collect()
    }

    /// L1 distance between the normalized histograms, in `[0, 2]`.
    pub fn l1_distance(&self, other: &YHistogram) -> f64 {
        self.normalized()
            .iter()
            .zip(other.normalized())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// CSV with header `bin_center,count,log10_count`. The log column is
    /// `log10(1 + count)` so empty bins plot at zero.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center,count,log10_count\n");
        for (i, &c) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{},{},{:.6}", i + Y_MIN, c, (1.0 + c as f64).log10());
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut bins = vec![0u64; Y_BINS];
        let mut seen = vec![false; Y_BINS];
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim().starts_with("bin_center,count") => {}
            other => return Err(Error::Data(format!("histogram CSV has bad header {other:?}"))),
        }
        for line in lines {
            let mut cols = line.split(',');
            let (Some(center), Some(count)) = (cols.next(), cols.next()) else {
                return Err(Error::Data(format!("histogram CSV row {line:?} has too few columns")));
            };
            let center: usize = center
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("bad bin center in {line:?}")))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("bad count in {line:?}")))?;
            if !(Y_MIN..=Y_MAX).contains(&center) {
                return Err(Error::Data(format!("bin center {center} outside {Y_MIN}..={Y_MAX}")));
            }
            bins[center - Y_MIN] = count;
            seen[center - Y_MIN] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Data("histogram CSV is missing bins".into()));
        }
        Self::from_counts(bins)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Pooled luma histogram of all images.
pub fn y_histogram<'a>(images: impl IntoIterator<Item = &'a ImageRgb>) -> Result<YHistogram> {
    let mut hist = YHistogram::default();
    let mut any = false;
    for img in images {
        hist.add_image(img);
        any = true;
    }
    if !any {
        return Err(Error::Data("y_histogram needs at least one image".into()));
    }
    Ok(hist)
}
