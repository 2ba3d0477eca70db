//! Paired low/normal-light datasets in the `low/` + `high/` directory layout
//! and aligned patch sampling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{read_png, ImageRgb};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Fraction of pairs held out for evaluation (15 of 500).
pub const EVAL_FRACTION: f64 = 0.03;

#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub id: String,
    pub low: ImageRgb,
    pub normal: ImageRgb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pub pairs: Vec<ImagePair>,
    pub split: Split,
}

impl PairDataset {
    /// Validates pairing invariants: matching dimensions, unique ids.
    pub fn new(pairs: Vec<ImagePair>, split: Split) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for p in &pairs {
            if (p.low.width(), p.low.height()) != (p.normal.width(), p.normal.height()) {
                return Err(Error::Data(format!("pair {} has mismatched dimensions", p.id)));
            }
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Data(format!("duplicate pair id {}", p.id)));
            }
        }
        Ok(Self { pairs, split })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Concatenates two datasets (ids must stay unique).
    pub fn merged(mut self, other: PairDataset) -> Result<Self> {
        self.pairs.extend(other.pairs);
        Self::new(self.pairs, Split::All)
    }
}

/// A file that could not be turned into a pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadIssue {
    pub path: PathBuf,
    pub message: String,
}

/// Result of [`load_pair_dataset`]: both splits plus everything skipped.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub train: PairDataset,
    pub eval: PairDataset,
    pub issues: Vec<LoadIssue>,
    pub warnings: Vec<String>,
}

impl LoadedDataset {
    /// All loaded pairs in filename order.
    pub fn all(&self) -> PairDataset {
        let mut pairs: Vec<_> = self.train.pairs.iter().chain(&self.eval.pairs).cloned().collect();
        pairs.sort_by(|a, b| a.id.cmp(&b.id));
        PairDataset {
            pairs,
            split: Split::All,
        }
    }
}

/// `(train, eval)` sizes for `n` pairs.
pub fn split_counts(n: usize) -> (usize, usize) {
    let eval = ((n as f64) * EVAL_FRACTION).round() as usize;
    (n - eval, eval)
}

/// Loads `<root>/low/*.png` against `<root>/high/*.png` (or `normal/`),
/// matched by filename. Bad pairs are recorded in `issues` and skipped. The
/// eval split is a seeded random subset of size [`split_counts`].
pub fn load_pair_dataset(root: impl AsRef<Path>, seed: u64) -> Result<LoadedDataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Data(format!("dataset root {} is not a directory", root.display())));
    }
    let mut warnings = Vec::new();
    let mut issues = Vec::new();
    let low_dir = root.join("low");
    let high_dir = ["high", "normal"].iter().map(|d| root.join(d)).find(|p| p.is_dir());

    let (low_files, high_files) = match (low_dir.is_dir(), high_dir) {
        (true, Some(high_dir)) => (png_files(&low_dir)?, png_files(&high_dir)?),
        _ => {
            warnings.push(format!("{} has no low/ and high/ subdirectories", root.display()));
            (BTreeMap::new(), BTreeMap::new())
        }
    };

    for (name, path) in &high_files {
        if !low_files.contains_key(name) {
            issues.push(LoadIssue {
                path: path.clone(),
                message: "no matching low-light image".into(),
            });
        }
    }
    let mut pairs = Vec::new();
    for (name, low_path) in &low_files {
        let Some(high_path) = high_files.get(name) else {
            issues.push(LoadIssue {
                path: low_path.clone(),
                message: "no matching normal-light image".into(),
            });
            continue;
        };
        let loaded = read_png(low_path).and_then(|low| Ok((low, read_png(high_path)?)));
        match loaded {
            Ok((low, normal)) if (low.width(), low.height()) != (normal.width(), normal.height()) => {
                issues.push(LoadIssue {
                    path: low_path.clone(),
                    message: format!(
                        "dimension mismatch: low {}x{}, normal {}x{}",
                        low.width(),
                        low.height(),
                        normal.width(),
                        normal.height()
                    ),
                });
            }
            Ok((low, normal)) => pairs.push(ImagePair {
                id: name.clone(),
                low,
                normal,
            }),
            Err(e) => issues.push(LoadIssue {
                path: low_path.clone(),
                message: e.to_string(),
            }),
        }
    }
    if pairs.is_empty() {
        warnings.push(format!("no image pairs loaded from {}", root.display()));
    }

    let (_, n_eval) = split_counts(pairs.len());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_eval = vec![false; pairs.len()];
    for &i in &order[..n_eval] {
        is_eval[i] = true;
    }
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (pair, e) in pairs.into_iter().zip(is_eval) {
        if e {
            eval.push(pair);
        } else {
            train.push(pair);
        }
    }
    Ok(LoadedDataset {
        train: PairDataset {
            pairs: train,
            split: Split::Train,
        },
        eval: PairDataset {
            pairs: eval,
            split: Split::Eval,
        },
        issues,
        warnings,
    })
}

fn png_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.insert(name.to_owned(), path);
            }
        }
    }
    Ok(out)
}

/// Aligned low/normal crops, `[B, 3, patch, patch]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchBatch {
    pub low: Tensor<f32>,
    pub normal: Tensor<f32>,
    /// `(pair index, top row, left column)` of every crop.
    pub coords: Vec<(usize, usize, usize)>,
}

/// Draws `batch` random pairs and one random `patch x patch` window per
/// pair, cut at the same place from both images.
pub fn sample_patch_batch<R: Rng + ?Sized>(
    ds: &PairDataset,
    batch: usize,
    patch: usize,
    rng: &mut R,
) -> Result<PatchBatch> {
    if ds.is_empty() {
        return Err(Error::Data("cannot sample from an empty dataset".into()));
    }
    if batch == 0 || patch == 0 {
        return Err(Error::invalid("sample_patch_batch", "batch and patch must be positive"));
    }
    let plane = 3 * patch * patch;
    let mut low = vec![0.0f32; batch * plane];
    let mut normal = vec![0.0f32; batch * plane];
    let mut coords = Vec::with_capacity(batch);
    for b in 0..batch {
        let idx = rng.random_range(0..ds.len());
        let pair = &ds.pairs[idx];
        let (w, h) = (pair.low.width(), pair.low.height());
        if patch > w || patch > h {
            return Err(Error::invalid(
                "sample_patch_batch",
                format!("patch {patch} larger than image {} ({w}x{h})", pair.id),
            ));
        }
        let y = rng.random_range(0..=h - patch);
        let x = rng.random_range(0..=w - patch);
        pair.low.crop(x, y, patch, patch)?.write_planar(&mut low[b * plane..(b + 1) * plane]);
        pair.normal
            .crop(x, y, patch, patch)?
            .write_planar(&mut normal[b * plane..(b + 1) * plane]);
        coords.push((idx, y, x));
    }
    Ok(PatchBatch {
        low: Tensor::new(vec![batch, 3, patch, patch], low)?,
        normal: Tensor::new(vec![batch, 3, patch, patch], normal)?,
        coords,
    })
}

/// Stacks whole images into `[B, 3, H, W]`; all must share a size.
pub fn stack_images<'a>(images: impl IntoIterator<Item = &'a ImageRgb>) -> Result<Tensor<f32>> {
    let images: Vec<_> = images.into_iter().collect();
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("stack_images", "no images"))?;
    let (w, h) = (first.width(), first.height());
    let plane = 3 * w * h;
    let mut data = vec![0.0f32; images.len() * plane];
    for (i, img) in images.iter().enumerate() {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::shape("stack_images", "images differ in size"));
        }
        img.write_planar(&mut data[i * plane..(i + 1) * plane]);
    }
    Tensor::new(vec![images.len(), 3, h, w], data)
}
