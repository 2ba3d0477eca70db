//! Direct 2-D convolution kernels with zero "same" padding.
//!
//! Kernels are cross-correlations over `[batch, channels, height, width]`
//! buffers. Every output element is accumulated in a fixed order so results
//! are bit-reproducible.

use crate::error::{Error, Result};

use super::tensor::Scalar;

/// Geometry of one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Result<Self> {
        let spec = Self {
            in_channels,
            out_channels,
            kernel,
            stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.kernel, 1 | 3) {
            return Err(Error::invalid("conv2d", format!("kernel {} not in {{1, 3}}", self.kernel)));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::invalid("conv2d", format!("stride {} not in {{1, 2}}", self.stride)));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("conv2d", "channel counts must be positive"));
        }
        Ok(())
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    /// Output extent for an input extent: `ceil(extent / stride)`.
    pub fn output_extent(&self, extent: usize) -> usize {
        extent.div_ceil(self.stride)
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub spec: ConvSpec,
}

impl ConvGeometry {
    pub fn new(spec: ConvSpec, batch: usize, in_h: usize, in_w: usize) -> Self {
        Self {
            batch,
            in_h,
            in_w,
            out_h: spec.output_extent(in_h),
            out_w: spec.output_extent(in_w),
            spec,
        }
    }

    /// Output index range `[lo, hi)` whose source `o * stride + k - pad`
    /// lands inside `[0, extent)`.
    fn valid_range(&self, k: usize, extent: usize, out_extent: usize) -> (usize, usize) {
        let s = self.spec.stride;
        let p = self.spec.padding();
        let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
        // o * s + k - p <= extent - 1
        let hi = if extent + p < k + 1 {
            0
        } else {
            ((extent + p - k - 1) / s + 1).min(out_extent)
        };
        (lo, hi.max(lo))
    }

    fn source(&self, o: usize, k: usize) -> usize {
        o * self.spec.stride + k - self.spec.padding()
    }
}

pub(crate) fn forward<T: Scalar>(g: &ConvGeometry, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    let ConvSpec {
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        stride: s,
    } = g.spec;
    let (ih, iw, oh, ow) = (g.in_h, g.in_w, g.out_h, g.out_w);
    let (in_plane, out_plane) = (ih * iw, oh * ow);
    for b in 0..g.batch {
        for co in 0..cout {
            let out_p = &mut out[(b * cout + co) * out_plane..][..out_plane];
            out_p.fill(bias[co]);
            for ci in 0..cin {
                let in_p = &input[(b * cin + ci) * in_plane..][..in_plane];
                let w_base = (co * cin + ci) * k * k;
                for ky in 0..k {
                    let (oy0, oy1) = g.valid_range(ky, ih, oh);
                    for kx in 0..k {
                        let wv = weight[w_base + ky * k + kx];
                        let (ox0, ox1) = g.valid_range(kx, iw, ow);
                        if ox0 >= ox1 {
                            continue;
                        }
                        let ix0 = g.source(ox0, kx);
                        for oy in oy0..oy1 {
                            let iy = g.source(oy, ky);
                            let o_row = &mut out_p[oy * ow + ox0..oy * ow + ox1];
                            let i_row = &in_p[iy * iw..(iy + 1) * iw];
                            if s == 1 {
                                for (o, &x) in o_row.iter_mut().zip(&i_row[ix0..]) {
                                    *o = *o + wv * x;
                                }
                            } else {
                                for (j, o) in o_row.iter_mut().enumerate() {
                                    *o = *o + wv * i_row[ix0 + j * s];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates the input gradient into `grad_in`.
pub(crate) fn backward_input<T: Scalar>(g: &ConvGeometry, grad_out: &[T], weight: &[T], grad_in: &mut [T]) {
    let ConvSpec {
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        stride: s,
    } = g.spec;
    let (ih, iw, oh, ow) = (g.in_h, g.in_w, g.out_h, g.out_w);
    let (in_plane, out_plane) = (ih * iw, oh * ow);
    for b in 0..g.batch {
        for ci in 0..cin {
            let gi_p = &mut grad_in[(b * cin + ci) * in_plane..][..in_plane];
            for co in 0..cout {
                let go_p = &grad_out[(b * cout + co) * out_plane..][..out_plane];
                let w_base = (co * cin + ci) * k * k;
                for ky in 0..k {
                    let (oy0, oy1) = g.valid_range(ky, ih, oh);
                    for kx in 0..k {
                        let wv = weight[w_base + ky * k + kx];
                        let (ox0, ox1) = g.valid_range(kx, iw, ow);
                        if ox0 >= ox1 {
                            continue;
                        }
                        let ix0 = g.source(ox0, kx);
                        for oy in oy0..oy1 {
                            let iy = g.source(oy, ky);
                            let go_row = &go_p[oy * ow + ox0..oy * ow + ox1];
                            let gi_row = &mut gi_p[iy * iw..(iy + 1) * iw];
                            if s == 1 {
                                for (gi, &go) in gi_row[ix0..].iter_mut().zip(go_row) {
                                    *gi = *gi + wv * go;
                                }
                            } else {
                                for (j, &go) in go_row.iter().enumerate() {
                                    let gi = &mut gi_row[ix0 + j * s];
                                    *gi = *gi + wv * go;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight and bias gradients.
pub(crate) fn backward_params<T: Scalar>(
    g: &ConvGeometry,
    grad_out: &[T],
    input: &[T],
    grad_w: Option<&mut [T]>,
    grad_b: Option<&mut [T]>,
) {
    let ConvSpec {
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        stride: s,
    } = g.spec;
    let (ih, iw, oh, ow) = (g.in_h, g.in_w, g.out_h, g.out_w);
    let (in_plane, out_plane) = (ih * iw, oh * ow);
    if let Some(grad_b) = grad_b {
        for co in 0..cout {
            let mut acc = T::zero();
            for b in 0..g.batch {
                acc = acc + sum(&grad_out[(b * cout + co) * out_plane..][..out_plane]);
            }
            grad_b[co] = grad_b[co] + acc;
        }
    }
    let Some(grad_w) = grad_w else { return };
    for co in 0..cout {
        for ci in 0..cin {
            let w_base = (co * cin + ci) * k * k;
            for ky in 0..k {
                let (oy0, oy1) = g.valid_range(ky, ih, oh);
                for kx in 0..k {
                    let (ox0, ox1) = g.valid_range(kx, iw, ow);
                    if ox0 >= ox1 {
                        continue;
                    }
                    let ix0 = g.source(ox0, kx);
                    let mut acc = T::zero();
                    for b in 0..g.batch {
                        let go_p = &grad_out[(b * cout + co) * out_plane..][..out_plane];
                        let in_p = &input[(b * cin + ci) * in_plane..][..in_plane];
                        for oy in oy0..oy1 {
                            let iy = g.source(oy, ky);
                            let go_row = &go_p[oy * ow + ox0..oy * ow + ox1];
                            let i_row = &in_p[iy * iw..(iy + 1) * iw];
                            acc = acc
                                + if s == 1 {
                                    dot(go_row, &i_row[ix0..ix0 + go_row.len()])
                                } else {
                                    go_row
                                        .iter()
                                        .enumerate()
                                        .fold(T::zero(), |a, (j, &go)| a + go * i_row[ix0 + j * s])
                                };
                        }
                    }
                    let idx = w_base + ky * k + kx;
                    grad_w[idx] = grad_w[idx] + acc;
                }
            }
        }
    }
}

/// Dot product with eight interleaved accumulators so the loop vectorizes
/// while the summation order stays fixed.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            lanes[l] = lanes[l] + xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7])) + tail
}

fn sum<T: Scalar>(a: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let mut chunks = a.chunks_exact(8);
    for c in &mut chunks {
        for l in 0..8 {
            lanes[l] = lanes[l] + c[l];
        }
    }
    let tail = chunks.remainder().iter().fold(T::zero(), |acc, &v| acc + v);
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_extent_is_ceil_div() {
        let s2 = ConvSpec::new(1, 1, 3, 2).unwrap();
        assert_eq!(s2.output_extent(96), 48);
        assert_eq!(s2.output_extent(5), 3);
        let s1 = ConvSpec::new(1, 1, 3, 1).unwrap();
        assert_eq!(s1.output_extent(7), 7);
    }

    #[test]
    fn rejects_unsupported_geometry() {
        assert!(ConvSpec::new(1, 1, 5, 1).is_err());
        assert!(ConvSpec::new(1, 1, 3, 3).is_err());
        assert!(ConvSpec::new(0, 1, 3, 1).is_err());
    }

    #[test]
    fn valid_range_covers_sources_inside_image() {
        for &(k, s) in &[(1usize, 1usize), (1, 2), (3, 1), (3, 2)] {
            let spec = ConvSpec::new(1, 1, k, s).unwrap();
            for extent in 1..9 {
                let g = ConvGeometry::new(spec, 1, extent, extent);
                for kk in 0..k {
                    let (lo, hi) = g.valid_range(kk, extent, g.out_h);
                    for o in 0..g.out_h {
                        let src = (o * s + kk) as isize - spec.padding() as isize;
                        let inside = src >= 0 && (src as usize) < extent;
                        assert_eq!(inside, o >= lo && o < hi, "k={k} s={s} extent={extent} o={o}");
                    }
                }
            }
        }
    }
}
