//! Images, PNG I/O, luma histograms, synthetic darkening and paired datasets.

mod color;
mod dataset;
mod histogram;
mod image;
mod scene;
mod synth;

pub use self::image::{read_png, write_png, GrayMap, ImageRgb};
pub use color::{
    luma_studio, luma_unit, rgb_to_ycbcr, rgb_to_ycbcr_pixel, ycbcr_to_rgb, ycbcr_to_rgb_pixel, YCbCrImage,
};
pub use dataset::{
    load_pair_dataset, sample_patch_batch, split_counts, stack_images, ImagePair, LoadIssue, LoadedDataset,
    PairDataset, PatchBatch, Split, EVAL_FRACTION,
};
pub use histogram::{y_histogram, YHistogram, Y_BINS, Y_MAX, Y_MIN};
pub use scene::{synthetic_pair_dataset, synthetic_scene, DarkeningRange};
pub use synth::{
    beta_grid, darken_images, darkened_histogram, fit_darkening_params, gamma_grid, synth_low_light,
    DarkeningParams, FitOptions, FitResult,
};
