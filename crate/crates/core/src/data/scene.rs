//! Procedural scenes for synthetic training pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{ImagePair, PairDataset, Split};
use super::image::ImageRgb;
use super::synth::{synth_low_light, DarkeningParams};
use crate::error::Result;

/// A random scene: two-color gradient background, a few flat rectangles and
/// discs, mild sinusoidal texture, and a smooth shading falloff.
pub fn synthetic_scene<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Result<ImageRgb> {
    let color = |rng: &mut R| [0, 1, 2].map(|_| rng.random_range(0.1f32..0.95));
    let bg_a = color(rng);
    let bg_b = color(rng);
    let angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let (ca, sa) = (angle.cos(), angle.sin());

    enum Shape {
        Rect { x0: f32, y0: f32, x1: f32, y1: f32 },
        Disc { cx: f32, cy: f32, r: f32 },
    }
    let n_shapes = rng.random_range(3..7);
    let shapes: Vec<(Shape, [f32; 3])> = (0..n_shapes)
        .map(|_| {
            let shape = if rng.random_bool(0.5) {
                let (x0, y0) = (rng.random_range(0.0..0.8f32), rng.random_range(0.0..0.8f32));
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(0.1..0.5f32),
                    y1: y0 + rng.random_range(0.1..0.5f32),
                }
            } else {
                Shape::Disc {
                    cx: rng.random_range(0.1..0.9f32),
                    cy: rng.random_range(0.1..0.9f32),
                    r: rng.random_range(0.08..0.3f32),
                }
            };
            (shape, color(rng))
        })
        .collect();
    let freq = rng.random_range(6.0..14.0f32);
    let tex_amp = rng.random_range(0.0..0.06f32);
    let (lx, ly) = (rng.random_range(0.0..1.0f32), rng.random_range(0.0..1.0f32));

    ImageRgb::from_fn(width, height, |x, y| {
        let u = (x as f32 + 0.5) / width as f32;
        let v = (y as f32 + 0.5) / height as f32;
        let t = ((u - 0.5) * ca + (v - 0.5) * sa + 0.75) / 1.5;
        let mut px = [0, 1, 2].map(|k| bg_a[k] + (bg_b[k] - bg_a[k]) * t.clamp(0.0, 1.0));
        for (shape, col) in &shapes {
            let inside = match *shape {
                Shape::Rect { x0, y0, x1, y1 } => u >= x0 && u < x1 && v >= y0 && v < y1,
                Shape::Disc { cx, cy, r } => (u - cx).powi(2) + (v - cy).powi(2) < r * r,
            };
            if inside {
                px = *col;
            }
        }
        let tex = tex_amp * ((u * freq).sin() * (v * freq * 1.3).cos());
        let d2 = (u - lx).powi(2) + (v - ly).powi(2);
        let shade = 1.0 - 0.35 * d2.min(1.0);
        px.map(|c| ((c + tex) * shade).clamp(0.02, 0.98))
    })
}

/// Ranges the per-image darkening parameters are drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DarkeningRange {
    pub gamma: (f64, f64),
    pub beta: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for DarkeningRange {
    fn default() -> Self {
        Self {
            gamma: (1.0, 1.4),
            beta: (0.15, 0.3),
            noise_sigma: 0.01,
        }
    }
}

impl DarkeningRange {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DarkeningParams {
        let pick = |(lo, hi): (f64, f64), rng: &mut R| if hi > lo { rng.random_range(lo..hi) } else { lo };
        DarkeningParams {
            gamma: pick(self.gamma, rng),
            beta: pick(self.beta, rng),
            noise_sigma: self.noise_sigma,
        }
    }
}

/// `count` random scenes of `size x size`, each paired with a darkened copy.
/// Ids are `synth_0000`, `synth_0001`, ...
pub fn synthetic_pair_dataset(count: usize, size: usize, range: &DarkeningRange, seed: u64) -> Result<PairDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let normal = synthetic_scene(size, size, &mut rng)?;
        let params = range.sample(&mut rng);
        let low = synth_low_light(&normal, &params, &mut rng)?;
        pairs.push(ImagePair {
            id: format!("synth_{i:04}"),
            low,
            normal,
        });
    }
    PairDataset::new(pairs, Split::All)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_seeded_and_in_range() {
        let a = synthetic_scene(24, 16, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = synthetic_scene(24, 16, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn synthetic_pairs_are_darker() {
        let ds = synthetic_pair_dataset(4, 16, &DarkeningRange::default(), 5).unwrap();
        assert_eq!(ds.len(), 4);
        for p in &ds.pairs {
            assert!(p.low.mean() < p.normal.mean());
        }
    }
}
