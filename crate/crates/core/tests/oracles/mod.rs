//! Reference implementations written independently of the library kernels.
//!
//! Shared by this crate's integration tests and the acceptance suite.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use vpuflow::netgraph::{Conv2dSpec, DenseSpec, LayerKind, LayerSpec, NetworkGraph, PoolSpec, Source};
use vpuflow::tensor::{Shape, Tensor};

/// All non-negative finite binary16 values with their bit patterns, in
/// increasing order, followed by the would-be next value 2^16 standing in
/// for infinity.
pub fn half_ladder() -> Vec<(u16, f64)> {
    let mut v: Vec<(u16, f64)> = (0u16..0x7C00).map(|b| (b, half_value_by_formula(b))).collect();
    v.push((0x7C00, 65536.0));
    v
}

/// Value of a non-negative finite pattern from the textbook formula.
pub fn half_value_by_formula(bits: u16) -> f64 {
    let e = ((bits >> 10) & 0x1F) as i32;
    let m = (bits & 0x3FF) as f64;
    if e == 0 {
        m * 2f64.powi(-24)
    } else {
        (1.0 + m / 1024.0) * 2f64.powi(e - 15)
    }
}

/// Nearest binary16 pattern by searching the value ladder; ties pick the
/// even pattern. Anything at or past the 65520 midpoint maps to infinity.
pub fn half_encode_oracle(ladder: &[(u16, f64)], x: f32) -> u16 {
    if x.is_nan() {
        return if x.is_sign_negative() { 0xFE00 } else { 0x7E00 };
    }
    let sign = if x.is_sign_negative() { 0x8000u16 } else { 0 };
    let a = (x as f64).abs();
    if a >= 65536.0 {
        return sign | 0x7C00;
    }
    let hi = ladder.partition_point(|&(_, v)| v < a);
    let pick = if hi == 0 {
        ladder[0].0
    } else {
        let (lb, lv) = ladder[hi - 1];
        let (hb, hv) = ladder[hi];
        let (dl, dh) = (a - lv, hv - a);
        if dl < dh {
            lb
        } else if dh < dl {
            hb
        } else if lb % 2 == 0 {
            lb
        } else {
            hb
        }
    };
    sign | pick
}

pub fn conv2d_oracle(x: &Tensor, spec: &Conv2dSpec, blob: &[f32]) -> Tensor {
    let s = x.shape();
    let p = spec.pad;
    let (ph, pw) = (s.h + 2 * p, s.w + 2 * p);
    // explicit zero-padded copy
    let mut padded = vec![vec![vec![vec![0.0f32; pw]; ph]; s.c]; s.n];
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                for xx in 0..s.w {
                    padded[n][c][y + p][xx + p] = x.data()[((n * s.c + c) * s.h + y) * s.w + xx];
                }
            }
        }
    }
    let oh = (ph - spec.kernel_h) / spec.stride + 1;
    let ow = (pw - spec.kernel_w) / spec.stride + 1;
    let weight = |oc: usize, ic: usize, ky: usize, kx: usize| {
        blob[spec.weight_offset + oc * s.c * spec.kernel_h * spec.kernel_w + ic * spec.kernel_h * spec.kernel_w + ky * spec.kernel_w + kx]
    };
    let mut out = Vec::new();
    for n in 0..s.n {
        for oc in 0..spec.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f32;
                    for ic in 0..s.c {
                        for ky in 0..spec.kernel_h {
                            for kx in 0..spec.kernel_w {
                                acc += weight(oc, ic, ky, kx) * padded[n][ic][oy * spec.stride + ky][ox * spec.stride + kx];
                            }
                        }
                    }
                    out.push(acc + blob[spec.bias_offset + oc]);
                }
            }
        }
    }
    Tensor::new(Shape::new(s.n, spec.out_channels, oh, ow), out).unwrap()
}

pub fn maxpool_oracle(x: &Tensor, spec: &PoolSpec) -> Tensor {
    let s = x.shape();
    let p = spec.pad;
    let (ph, pw) = (s.h + 2 * p, s.w + 2 * p);
    let oh = (ph - spec.kernel) / spec.stride + 1;
    let ow = (pw - spec.kernel) / spec.stride + 1;
    let mut out = Vec::new();
    for n in 0..s.n {
        for c in 0..s.c {
            let mut plane = vec![vec![f32::NEG_INFINITY; pw]; ph];
            for y in 0..s.h {
                for xx in 0..s.w {
                    plane[y + p][xx + p] = x.get(n, c, y, xx);
                }
            }
            for oy in 0..oh {
                for ox in 0..ow {
                    let window = (0..spec.kernel)
                        .flat_map(|ky| (0..spec.kernel).map(move |kx| (ky, kx)))
                        .map(|(ky, kx)| plane[oy * spec.stride + ky][ox * spec.stride + kx]);
                    out.push(window.fold(f32::NEG_INFINITY, f32::max));
                }
            }
        }
    }
    Tensor::new(Shape::new(s.n, s.c, oh, ow), out).unwrap()
}

pub fn avgpool_oracle(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = Vec::new();
    for n in 0..s.n {
        for c in 0..s.c {
            let mut sum = 0.0f32;
            for y in 0..s.h {
                for xx in 0..s.w {
                    sum += x.get(n, c, y, xx);
                }
            }
            out.push(sum / (s.h * s.w) as f32);
        }
    }
    Tensor::new(Shape::new(s.n, s.c, 1, 1), out).unwrap()
}

pub fn dense_oracle(x: &Tensor, spec: &DenseSpec, blob: &[f32]) -> Tensor {
    let s = x.shape();
    let k = s.c * s.h * s.w;
    let mut out = Vec::new();
    for n in 0..s.n {
        for o in 0..spec.out_features {
            let mut acc = 0.0f32;
            for i in 0..k {
                acc += blob[spec.weight_offset + o * k + i] * x.data()[n * k + i];
            }
            out.push(acc + blob[spec.bias_offset + o]);
        }
    }
    Tensor::new(Shape::new(s.n, spec.out_features, 1, 1), out).unwrap()
}

/// Same arithmetic route as a textbook max-shifted softmax in binary32
/// with a wide sum.
pub fn softmax_oracle(x: &Tensor) -> Tensor {
    let s = x.shape();
    let k = s.c * s.h * s.w;
    let mut out = Vec::with_capacity(x.len());
    for item in x.data().chunks(k) {
        let m = item.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let e: Vec<f32> = item.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().map(|&v| v as f64).sum();
        out.extend(e.iter().map(|&v| (v as f64 / z) as f32));
    }
    Tensor::new(s, out).unwrap()
}

/// Softmax entirely in f64, for tolerance checks.
pub fn softmax_f64(values: &[f32]) -> Vec<f64> {
    let m = values.iter().map(|&v| v as f64).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|&v| (v as f64 - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn relu_oracle(x: &Tensor) -> Tensor {
    Tensor::new(x.shape(), x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()).unwrap()
}

pub fn concat_oracle(parts: &[&Tensor]) -> Tensor {
    let s0 = parts[0].shape();
    let c: usize = parts.iter().map(|t| t.shape().c).sum();
    let mut out = Vec::new();
    for n in 0..s0.n {
        for t in parts {
            for ch in 0..t.shape().c {
                for y in 0..s0.h {
                    for xx in 0..s0.w {
                        out.push(t.get(n, ch, y, xx));
                    }
                }
            }
        }
    }
    Tensor::new(Shape::new(s0.n, c, s0.h, s0.w), out).unwrap()
}

/// Evaluates a graph in binary32 with the oracle kernels. Returns every
/// layer output in execution order.
pub fn forward_oracle(g: &NetworkGraph, input: &Tensor) -> Vec<Tensor> {
    let means = g.means();
    let s = input.shape();
    let mut x0 = input.clone();
    if !means.is_empty() {
        for n in 0..s.n {
            for c in 0..s.c {
                for y in 0..s.h {
                    for xx in 0..s.w {
                        let v = x0.get(n, c, y, xx) - means[c];
                        x0.set(n, c, y, xx, v);
                    }
                }
            }
        }
    }
    let blob = g.weights();
    let mut outs: Vec<Tensor> = Vec::new();
    for layer in g.layers() {
        let args: Vec<&Tensor> = layer
            .sources()
            .iter()
            .map(|s| match s {
                Source::Input => &x0,
                Source::Layer(j) => &outs[*j],
            })
            .collect();
        let y = match layer.kind() {
            LayerKind::Conv2d(c) => conv2d_oracle(args[0], c, blob),
            LayerKind::Relu => relu_oracle(args[0]),
            LayerKind::MaxPool(p) => maxpool_oracle(args[0], p),
            LayerKind::AvgPoolGlobal => avgpool_oracle(args[0]),
            LayerKind::Dense(d) => dense_oracle(args[0], d, blob),
            LayerKind::Softmax => softmax_oracle(args[0]),
            LayerKind::Concat => concat_oracle(&args),
        };
        outs.push(y);
    }
    outs
}

/// Random small valid graph ending in a softmax, with its input.
pub fn random_graph(rng: &mut impl Rng) -> (NetworkGraph, Tensor) {
    random_graph_with(rng, false)
}

/// `wide` graphs have at least 27 terms in every convolution sum, so
/// accumulation rounding is not drowned out by a handful of products.
pub fn random_graph_with(rng: &mut impl Rng, wide: bool) -> (NetworkGraph, Tensor) {
    let (c, h, w) = if wide {
        (rng.gen_range(3..=4), rng.gen_range(6..=10), rng.gen_range(6..=10))
    } else {
        (rng.gen_range(1..=3), rng.gen_range(3..=8), rng.gen_range(3..=8))
    };
    let input = Shape::new(1, c, h, w);
    let mut blob: Vec<f32> = Vec::new();
    let mut specs = Vec::new();
    let mut push_weights = |rng: &mut dyn rand::RngCore, n: usize| {
        let off = blob.len();
        blob.extend((0..n).map(|_| rng.gen_range(-1.0f32..1.0)));
        off
    };

    let conv = |rng: &mut dyn rand::RngCore, id: &str, src: &str, in_c: usize, shape_hw: (usize, usize), push: &mut dyn FnMut(&mut dyn rand::RngCore, usize) -> usize| {
        let out = if wide { rng.gen_range(4..=8) } else { rng.gen_range(1..=4) };
        let pad = rng.gen_range(0..=1);
        let max_k = (shape_hw.0.min(shape_hw.1) + 2 * pad).min(3);
        let k = if wide { 3 } else { rng.gen_range(1..=max_k) };
        let stride = rng.gen_range(1..=2);
        let wo = push(rng, out * in_c * k * k);
        let bo = push(rng, out);
        let spec = Conv2dSpec { out_channels: out, kernel_h: k, kernel_w: k, stride, pad, weight_offset: wo, bias_offset: bo };
        let oh = (shape_hw.0 + 2 * pad - k) / stride + 1;
        let ow = (shape_hw.1 + 2 * pad - k) / stride + 1;
        (LayerSpec::new(id, &[src], LayerKind::Conv2d(spec)), out, (oh, ow))
    };

    let (l, mut ch, mut hw) = conv(rng, "conv1", "input", c, (h, w), &mut push_weights);
    specs.push(l);
    let mut last = "conv1".to_string();

    if rng.gen_bool(0.5) {
        // two-branch block joined by concat
        let (a, ca, hwa) = {
            let spec = Conv2dSpec {
                out_channels: rng.gen_range(1..=3),
                kernel_h: 1,
                kernel_w: 1,
                stride: 1,
                pad: 0,
                weight_offset: 0,
                bias_offset: 0,
            };
            let wo = push_weights(rng, spec.out_channels * ch);
            let bo = push_weights(rng, spec.out_channels);
            let spec = Conv2dSpec { weight_offset: wo, bias_offset: bo, ..spec };
            (LayerSpec::new("branch_a", &[&last], LayerKind::Conv2d(spec)), spec.out_channels, hw)
        };
        let (b, cb, hwb) = {
            let out = rng.gen_range(1..=3);
            let k = if hw.0.min(hw.1) + 2 >= 3 { 3 } else { 1 };
            let pad = if k == 3 { 1 } else { 0 };
            let wo = push_weights(rng, out * ch * k * k);
            let bo = push_weights(rng, out);
            let spec = Conv2dSpec { out_channels: out, kernel_h: k, kernel_w: k, stride: 1, pad, weight_offset: wo, bias_offset: bo };
            (LayerSpec::new("branch_b", &[&last], LayerKind::Conv2d(spec)), out, hw)
        };
        assert_eq!(hwa, hwb);
        specs.push(a);
        specs.push(b);
        specs.push(LayerSpec::new("join", &["branch_a", "branch_b"], LayerKind::Concat));
        ch = ca + cb;
        last = "join".into();
    }

    specs.push(LayerSpec::new("relu1", &[&last], LayerKind::Relu));
    last = "relu1".into();

    if rng.gen_bool(0.6) && hw.0 >= 2 && hw.1 >= 2 {
        let pool = PoolSpec { kernel: 2, stride: rng.gen_range(1..=2), pad: rng.gen_range(0..=1) };
        specs.push(LayerSpec::new("pool1", &[&last], LayerKind::MaxPool(pool)));
        hw = ((hw.0 + 2 * pool.pad - 2) / pool.stride + 1, (hw.1 + 2 * pool.pad - 2) / pool.stride + 1);
        last = "pool1".into();
    }

    let classes = rng.gen_range(2..=6);
    if rng.gen_bool(0.3) {
        specs.push(LayerSpec::new("gap", &[&last], LayerKind::AvgPoolGlobal));
        last = "gap".into();
        hw = (1, 1);
    }
    let in_f = ch * hw.0 * hw.1;
    let wo = push_weights(rng, classes * in_f);
    let bo = push_weights(rng, classes);
    specs.push(LayerSpec::new(
        "fc",
        &[&last],
        LayerKind::Dense(DenseSpec { out_features: classes, weight_offset: wo, bias_offset: bo }),
    ));
    specs.push(LayerSpec::new("prob", &["fc"], LayerKind::Softmax));

    let means = if rng.gen_bool(0.5) { (0..c).map(|_| rng.gen_range(0.0f32..0.5)).collect() } else { vec![] };
    let g = NetworkGraph::new(input, means, specs, blob).expect("generated graph is valid");
    let x = Tensor::new(input, (0..input.len()).map(|_| rng.gen_range(0.0f32..1.0)).collect()).unwrap();
    (g, x)
}

/// Graph whose weights, inputs and every intermediate value are small
/// integers, all exactly representable in binary16 (largest magnitude
/// stays under 2048).
pub fn integer_graph(rng: &mut impl Rng) -> (NetworkGraph, Tensor) {
    let input = Shape::new(1, 2, 4, 4);
    let mut blob: Vec<f32> = Vec::new();
    blob.extend((0..3 * 2 * 9).map(|_| rng.gen_range(-2i32..=2) as f32));
    blob.extend((0..3).map(|_| rng.gen_range(-2i32..=2) as f32));
    let dense_w = blob.len();
    blob.extend((0..4 * 12).map(|_| rng.gen_range(-1i32..=1) as f32));
    let dense_b = blob.len();
    blob.extend((0..4).map(|_| rng.gen_range(-3i32..=3) as f32));
    let specs = vec![
        LayerSpec::new(
            "conv",
            &["input"],
            LayerKind::Conv2d(Conv2dSpec { out_channels: 3, kernel_h: 3, kernel_w: 3, stride: 1, pad: 1, weight_offset: 0, bias_offset: 54 }),
        ),
        LayerSpec::new("relu", &["conv"], LayerKind::Relu),
        LayerSpec::new("pool", &["relu"], LayerKind::MaxPool(PoolSpec { kernel: 2, stride: 2, pad: 0 })),
        LayerSpec::new(
            "fc",
            &["pool"],
            LayerKind::Dense(DenseSpec { out_features: 4, weight_offset: dense_w, bias_offset: dense_b }),
        ),
        LayerSpec::new("prob", &["fc"], LayerKind::Softmax),
    ];
    let g = NetworkGraph::new(input, vec![], specs, blob).unwrap();
    let x = Tensor::new(input, (0..input.len()).map(|_| rng.gen_range(0i32..=4) as f32).collect()).unwrap();
    (g, x)
}

/// Smallest useful graph: `c×h×w` input, dense to `classes`, softmax.
pub fn dense_graph(c: usize, h: usize, w: usize, classes: usize) -> NetworkGraph {
    let in_f = c * h * w;
    let blob: Vec<f32> = (0..classes * in_f + classes).map(|i| ((i % 7) as f32 - 3.0) / 8.0).collect();
    let specs = vec![
        LayerSpec::new(
            "fc",
            &["input"],
            LayerKind::Dense(DenseSpec { out_features: classes, weight_offset: 0, bias_offset: classes * in_f }),
        ),
        LayerSpec::new("prob", &["fc"], LayerKind::Softmax),
    ];
    NetworkGraph::new(Shape::new(1, c, h, w), vec![], specs, blob).unwrap()
}
