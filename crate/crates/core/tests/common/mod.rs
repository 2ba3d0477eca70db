//! Reference implementations shared by the integration tests and the
//! acceptance harness. Everything here is written as plain nested loops,
//! independent of the library kernels it checks.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use retinex_core::numerics::{finite_difference_gradient, max_relative_error, ConvSpec, Graph, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Zero-padded cross-correlation, padding `k / 2`, output `ceil(n / s)`.
pub fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, spec: ConvSpec) -> Tensor<f64> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (k, s, pad) = (spec.kernel, spec.stride, (spec.kernel / 2) as isize);
    let (oh, ow) = (h.div_ceil(s), wd.div_ceil(s));
    let oc = spec.out_channels;
    let mut out = vec![0.0; n * oc * oh * ow];
    for bi in 0..n {
        for o in 0..oc {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = b.data()[o];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * s + ky) as isize - pad;
                                let ix = (xo * s + kx) as isize - pad;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((bi * c + ci) * h + iy as usize) * wd + ix as usize];
                                let wv = w.data()[((o * c + ci) * k + ky) * k + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((bi * oc + o) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, oc, oh, ow], out).unwrap()
}

/// Nearest-neighbour resize: output `(i, j)` reads input
/// `(floor(i·H/th), floor(j·W/tw))`.
pub fn resize_oracle(x: &Tensor<f64>, th: usize, tw: usize) -> Tensor<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let mut out = Vec::with_capacity(n * c * th * tw);
    for plane in 0..n * c {
        for i in 0..th {
            for j in 0..tw {
                let (si, sj) = (i * h / th, j * w / tw);
                out.push(x.data()[(plane * h + si) * w + sj]);
            }
        }
    }
    Tensor::new(vec![n, c, th, tw], out).unwrap()
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A scalar function of several tensors expressed on the graph.
pub type GraphFn<'a> = dyn Fn(&mut Graph<f64>, &[Var]) -> retinex_core::Result<Var> + 'a;

/// Backprop gradients of `f` at `inputs`, one per argument.
pub fn backprop_gradients(f: &GraphFn<'_>, inputs: &[Tensor<f64>]) -> Vec<Tensor<f64>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars).unwrap();
    g.backward(loss).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect()
}

/// Central differences of `f` with respect to argument `which`.
pub fn numeric_gradient(f: &GraphFn<'_>, inputs: &[Tensor<f64>], which: usize, eps: f64) -> Tensor<f64> {
    let eval = |probe: &Tensor<f64>| -> retinex_core::Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| g.constant(if i == which { probe.clone() } else { t.clone() }))
            .collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item().expect("scalar output"))
    };
    finite_difference_gradient(eval, &inputs[which], eps).unwrap()
}

/// Worst relative error between backprop and central differences over all
/// arguments of `f`.
pub fn gradient_error(f: &GraphFn<'_>, inputs: &[Tensor<f64>], eps: f64) -> f64 {
    let analytic = backprop_gradients(f, inputs);
    (0..inputs.len())
        .map(|i| max_relative_error(&analytic[i], &numeric_gradient(f, inputs, i, eps)))
        .fold(0.0, f64::max)
}

/// Smallest distance any input may have from a kink of `|·|`; ten times the
/// finite-difference step so central differences never straddle one.
pub const KINK_MARGIN: f64 = 1e-3;

/// A `[1, c, n, n]` field whose horizontal and vertical forward differences
/// all have magnitude at least 0.006: per channel `base + a(x) + b(y)` with
/// random walks `a`, `b` of steps `±[0.01, 0.05]`, plus jitter below 0.002.
/// Values stay inside `(0.05, 0.95)`.
pub fn field(c: usize, n: usize, rng: &mut impl Rng) -> Tensor<f64> {
    let walk = |rng: &mut dyn rand::RngCore| {
        let mut v = vec![0.0f64; n];
        for i in 1..n {
            let step = rng.random_range(0.01..0.05);
            v[i] = v[i - 1] + if rng.random_bool(0.5) { step } else { -step };
        }
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        v.iter().map(|x| x - lo).collect::<Vec<_>>()
    };
    let mut data = Vec::with_capacity(c * n * n);
    for _ in 0..c {
        let a = walk(rng);
        let b = walk(rng);
        let base = rng.random_range(0.06..0.15);
        for y in 0..n {
            for x in 0..n {
                data.push(base + 0.5 * (a[x] + b[y]) + rng.random_range(-0.002..0.002));
            }
        }
    }
    Tensor::new(vec![1, c, n, n], data).unwrap()
}

/// `r` shifted per channel by `±[0.05, 0.2]`, so `|r − out|` stays away
/// from zero while the spatial differences keep their margin.
pub fn shifted(r: &Tensor<f64>, rng: &mut impl Rng) -> Tensor<f64> {
    let plane = r.shape()[2] * r.shape()[3];
    let offsets: Vec<f64> = (0..r.shape()[1])
        .map(|_| {
            let d = rng.random_range(0.05..0.2);
            if rng.random_bool(0.5) { d } else { -d }
        })
        .collect();
    Tensor::from_fn(r.shape(), |i| r.data()[i] + offsets[i / plane % offsets.len()])
}

/// `R ∘ I` with a one-channel `I` broadcast over the channels of `R`.
pub fn product(r: &Tensor<f64>, i: &Tensor<f64>) -> Tensor<f64> {
    let plane = r.shape()[2] * r.shape()[3];
    let image = r.shape()[1] * plane;
    Tensor::from_fn(r.shape(), |k| r.data()[k] * i.data()[k / image * plane + k % plane])
}

/// A `[1, 3, n, n]` target with every entry at least 0.01 away from the
/// matching entry of each tensor in `avoid`.
pub fn target_avoiding(n: usize, avoid: &[Tensor<f64>], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(&[1, 3, n, n], |k| loop {
        let v = rng.random_range(0.05..0.95);
        if avoid.iter().all(|p| (p.data()[k] - v).abs() >= 0.01) {
            break v;
        }
    })
}

/// Smallest `|forward difference|` along either axis over all channels.
pub fn min_spatial_difference(t: &Tensor<f64>) -> f64 {
    let (c, h, w) = (t.shape()[1], t.shape()[2], t.shape()[3]);
    let at = |ch: usize, y: usize, x: usize| t.data()[(ch * h + y) * w + x];
    let mut m = f64::INFINITY;
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    m = m.min((at(ch, y, x + 1) - at(ch, y, x)).abs());
                }
                if y + 1 < h {
                    m = m.min((at(ch, y + 1, x) - at(ch, y, x)).abs());
                }
            }
        }
    }
    m
}

pub fn min_abs_difference(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(f64::INFINITY, f64::min)
}

/// Inputs for the decomposition losses, all kinks at least
/// [`KINK_MARGIN`] away: `[R_low, I_low, R_normal, I_normal, S_low, S_normal]`.
pub fn decom_inputs(seed: u64, n: usize) -> Vec<Tensor<f64>> {
    let mut r = rng(seed);
    let r_low = field(3, n, &mut r);
    let i_low = field(1, n, &mut r);
    let r_normal = shifted(&r_low, &mut r);
    let i_normal = field(1, n, &mut r);
    let s_low = target_avoiding(n, &[product(&r_low, &i_low), product(&r_normal, &i_low)], &mut r);
    let s_normal = target_avoiding(n, &[product(&r_low, &i_normal), product(&r_normal, &i_normal)], &mut r);
    let inputs = vec![r_low, i_low, r_normal, i_normal, s_low, s_normal];
    assert!(decom_kink_distance(&inputs) >= KINK_MARGIN);
    inputs
}

/// Distance of decomposition-loss inputs from the nearest `|·|` kink.
pub fn decom_kink_distance(v: &[Tensor<f64>]) -> f64 {
    let mut m = min_abs_difference(&v[0], &v[2]);
    for t in &v[..4] {
        m = m.min(min_spatial_difference(t));
    }
    for (r, i, s) in [(0, 1, 4), (2, 1, 4), (0, 3, 5), (2, 3, 5)] {
        m = m.min(min_abs_difference(&product(&v[r], &v[i]), &v[s]));
    }
    m
}

/// Inputs for the enhancement loss: `[R_low, Î, S_normal]`.
pub fn enhance_inputs(seed: u64, n: usize) -> Vec<Tensor<f64>> {
    let mut r = rng(seed);
    let r_low = field(3, n, &mut r);
    let i_hat = field(1, n, &mut r);
    let s = target_avoiding(n, &[product(&r_low, &i_hat)], &mut r);
    assert!(min_spatial_difference(&r_low).min(min_spatial_difference(&i_hat)) >= KINK_MARGIN);
    vec![r_low, i_hat, s]
}
