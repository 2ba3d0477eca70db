mod common;

use common::{conv_oracle, max_abs_diff, resize_oracle, rng, uniform};
use proptest::prelude::*;
use rand::Rng;
use retinex_core::numerics::{Axis, ConvSpec, Graph, Tensor};

fn conv_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, cin, cout) = (r.random_range(1..=2), r.random_range(1..=3), r.random_range(1..=3));
    let (h, w) = (r.random_range(1..=8), r.random_range(1..=8));
    let k = if r.random_bool(0.5) { 3 } else { 1 };
    let s = if r.random_bool(0.5) { 2 } else { 1 };
    let spec = ConvSpec::new(cin, cout, k, s).unwrap();
    let x = uniform(&[b, cin, h, w], -1.0, 1.0, &mut r);
    let wt = uniform(&spec.weight_shape(), -1.0, 1.0, &mut r);
    let bias = uniform(&[cout], -1.0, 1.0, &mut r);

    let mut g = Graph::<f64>::new();
    let (xv, wv, bv) = (g.constant(x.clone()), g.constant(wt.clone()), g.constant(bias.clone()));
    let y = g.conv2d(xv, wv, bv, spec).unwrap();
    max_abs_diff(g.value(y), &conv_oracle(&x, &wt, &bias, spec))
}

#[test]
fn conv_matches_nested_loop_oracle_on_100_cases() {
    for seed in 0..100 {
        let err = conv_case(seed);
        assert!(err <= 1e-10, "case {seed}: {err:e}");
    }
}

#[test]
fn resize_matches_index_oracle_on_100_cases() {
    for seed in 0..100 {
        let mut r = rng(1000 + seed);
        let (h, w) = (r.random_range(1..=8), r.random_range(1..=8));
        let (th, tw) = (r.random_range(1..=12), r.random_range(1..=12));
        let x = uniform(&[1, 2, h, w], -1.0, 1.0, &mut r);
        let mut g = Graph::<f64>::new();
        let xv = g.constant(x.clone());
        let y = g.resize_nearest(xv, th, tw).unwrap();
        let err = max_abs_diff(g.value(y), &resize_oracle(&x, th, tw));
        assert!(err <= 1e-10, "case {seed}: {h}x{w} -> {th}x{tw}: {err:e}");
    }
}

#[test]
fn three_by_three_to_five_by_five_resize() {
    let x = Tensor::from_fn(&[1, 1, 3, 3], |i| i as f64);
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x.clone());
    let y = g.resize_nearest(xv, 5, 5).unwrap();
    assert_eq!(g.value(y), &resize_oracle(&x, 5, 5));
}

#[test]
fn broadcast_mul_matches_channel_tiling() {
    let mut r = rng(7);
    let a = uniform(&[1, 3, 2, 2], -1.0, 1.0, &mut r);
    let m = uniform(&[1, 1, 2, 2], -1.0, 1.0, &mut r);
    let tiled = Tensor::from_fn(&[1, 3, 2, 2], |i| m.data()[i % 4]);
    let expected = Tensor::from_fn(&[1, 3, 2, 2], |i| a.data()[i] * tiled.data()[i]);
    let mut g = Graph::<f64>::new();
    let (av, mv) = (g.constant(a), g.constant(m));
    let y = g.mul(av, mv).unwrap();
    assert_eq!(g.value(y), &expected);
}

#[test]
fn broadcast_gradient_sums_over_channels() {
    let mut r = rng(8);
    let a = uniform(&[1, 3, 2, 2], -1.0, 1.0, &mut r);
    let m = uniform(&[1, 1, 2, 2], -1.0, 1.0, &mut r);
    let mut g = Graph::<f64>::new();
    let (av, mv) = (g.param(a.clone()), g.param(m));
    let y = g.mul(av, mv).unwrap();
    let loss = g.reduce_mean(y).unwrap();
    g.backward(loss).unwrap();
    let grad = g.grad(mv).unwrap();
    for p in 0..4 {
        let expected: f64 = (0..3).map(|c| a.data()[c * 4 + p]).sum::<f64>() / 12.0;
        assert!((grad.data()[p] - expected).abs() < 1e-15);
    }
}

#[test]
fn spatial_gradient_matches_difference_loop() {
    let x = uniform(&[1, 1, 4, 4], -1.0, 1.0, &mut rng(9));
    let at = |y: usize, xx: usize| x.data()[y * 4 + xx];
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x.clone());
    let h = g.spatial_gradient(xv, Axis::Horizontal).unwrap();
    let v = g.spatial_gradient(xv, Axis::Vertical).unwrap();
    for y in 0..4 {
        for xx in 0..4 {
            let eh = if xx < 3 { at(y, xx + 1) - at(y, xx) } else { 0.0 };
            let ev = if y < 3 { at(y + 1, xx) - at(y, xx) } else { 0.0 };
            assert_eq!(g.value(h).data()[y * 4 + xx], eh);
            assert_eq!(g.value(v).data()[y * 4 + xx], ev);
        }
    }
}

#[test]
fn horizontal_ramp_has_constant_gradient() {
    let x = Tensor::from_fn(&[1, 1, 3, 5], |i| 0.25 * (i % 5) as f64);
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x);
    let h = g.spatial_gradient(xv, Axis::Horizontal).unwrap();
    for (i, &d) in g.value(h).data().iter().enumerate() {
        assert_eq!(d, if i % 5 == 4 { 0.0 } else { 0.25 });
    }
}

#[test]
fn spatial_gradient_rejects_single_pixel_axis() {
    let mut g = Graph::<f64>::new();
    let xv = g.constant(Tensor::zeros(&[1, 1, 1, 4]));
    assert!(g.spatial_gradient(xv, Axis::Vertical).is_err());
}

#[test]
fn mean_abs_matches_scalar_loop() {
    let x = uniform(&[10], -1.0, 1.0, &mut rng(10));
    let mut expected = 0.0;
    for v in x.data() {
        expected += v.abs();
    }
    expected /= 10.0;
    let mut g = Graph::<f64>::new();
    let xv = g.constant(x);
    let m = g.reduce_mean_abs(xv).unwrap();
    assert!((g.value(m).item().unwrap() - expected).abs() < 1e-15);

    let mut g = Graph::<f64>::new();
    let xv = g.constant(Tensor::new(vec![2], vec![-1.0, 1.0]).unwrap());
    let m = g.reduce_mean_abs(xv).unwrap();
    assert_eq!(g.value(m).item(), Some(1.0));
}

#[test]
fn empty_reduction_and_non_scalar_backward_fail() {
    let mut g = Graph::<f64>::new();
    let e = g.constant(Tensor::zeros(&[0]));
    assert!(g.reduce_mean_abs(e).is_err());
    let x = g.param(Tensor::zeros(&[2]));
    assert!(g.backward(x).is_err());
}

#[test]
fn conv_shape_mismatch_is_reported() {
    let spec = ConvSpec::new(2, 1, 3, 1).unwrap();
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(&[1, 3, 4, 4]));
    let w = g.constant(Tensor::zeros(&spec.weight_shape()));
    let b = g.constant(Tensor::zeros(&[1]));
    assert!(g.conv2d(x, w, b, spec).is_err());
}

#[test]
fn activations_stay_in_range_and_forward_is_deterministic() {
    let x = uniform(&[1, 2, 6, 6], -30.0, 30.0, &mut rng(11));
    let run = || {
        let mut g = Graph::<f64>::new();
        let xv = g.constant(x.clone());
        let r = g.relu(xv);
        let s = g.sigmoid(xv);
        (g.value(r).clone(), g.value(s).clone())
    };
    let (r, s) = run();
    assert!(r.data().iter().all(|&v| v >= 0.0));
    assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(run(), (r, s));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resize_backprop_conserves_gradient_mass(
        h in 1usize..7, w in 1usize..7, th in 1usize..10, tw in 1usize..10, seed in 0u64..1000
    ) {
        let mut r = rng(seed);
        let x = uniform(&[1, 1, h, w], -1.0, 1.0, &mut r);
        let upstream = uniform(&[1, 1, th, tw], -1.0, 1.0, &mut r);
        let mut g = Graph::<f64>::new();
        let xv = g.param(x);
        let y = g.resize_nearest(xv, th, tw).unwrap();
        let u = g.constant(upstream.clone());
        let p = g.mul(y, u).unwrap();
        let loss = g.reduce_mean(p).unwrap();
        g.backward(loss).unwrap();
        let total: f64 = g.grad(xv).unwrap().sum();
        let expected = upstream.sum() / (th * tw) as f64;
        prop_assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn conv_agrees_with_oracle(seed in 10_000u64..20_000) {
        prop_assert!(conv_case(seed) <= 1e-10);
    }
}
