//! Forward-pass execution in binary32 or emulated binary16.
//!
//! The kernels are plain nested loops. Accumulation order is fixed (input
//! channel, then kernel row, then kernel column, bias last) so results are
//! bit-reproducible.
//!
//! In the FP16 modes the input, the channel means, the weights and every
//! layer output are rounded through [`half16`]. Softmax is evaluated in
//! binary32 from the (already rounded) logits and its output is left in
//! binary32, so confidences still sum to one.

use std::fmt;
use std::time::Instant;

use thiserror::Error;

use crate::half16;
use crate::netgraph::{Conv2dSpec, DenseSpec, LayerKind, NetworkGraph, PoolSpec, Source};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PrecisionMode {
    /// Reference binary32.
    #[default]
    Fp32,
    /// Binary16 storage, binary32 accumulation, each layer output rounded.
    Fp16Layer,
    /// As `Fp16Layer`, and the accumulator is rounded after every
    /// multiply-accumulate.
    Fp16Strict,
}

impl PrecisionMode {
    pub fn is_half(self) -> bool {
        !matches!(self, PrecisionMode::Fp32)
    }

    fn strict(self) -> bool {
        matches!(self, PrecisionMode::Fp16Strict)
    }
}

impl fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecisionMode::Fp32 => "fp32",
            PrecisionMode::Fp16Layer => "fp16-layer",
            PrecisionMode::Fp16Strict => "fp16-strict",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InferError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("output layer `{0}` is not a softmax")]
    NonSoftmaxOutput(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerTiming {
    pub layer_id: String,
    pub wall_nanos: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub confidences: Vec<f32>,
    pub timings: Vec<LayerTiming>,
}

#[inline]
fn mac(acc: f32, a: f32, b: f32, strict: bool) -> f32 {
    let s = acc + a * b;
    if strict {
        half16::round_f32(s)
    } else {
        s
    }
}

#[inline]
fn add(acc: f32, v: f32, strict: bool) -> f32 {
    let s = acc + v;
    if strict {
        half16::round_f32(s)
    } else {
        s
    }
}

/// Per-channel mean subtraction. An empty `means` is the identity.
pub fn subtract_means(x: &Tensor, means: &[f32]) -> Result<Tensor, InferError> {
    if means.is_empty() {
        return Ok(x.clone());
    }
    let s = x.shape();
    if means.len() != s.c {
        return Err(InferError::ShapeMismatch(format!("{} means for {} channels", means.len(), s.c)));
    }
    let plane = s.h * s.w;
    let mut out = x.clone();
    if plane > 0 {
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let m = means[i % s.c];
            chunk.iter_mut().for_each(|v| *v -= m);
        }
    }
    Ok(out)
}

/// Direct convolution. `weights` is the whole blob; the spec's offsets index into it.
pub fn conv2d(x: &Tensor, spec: &Conv2dSpec, weights: &[f32], mode: PrecisionMode) -> Result<Tensor, InferError> {
    let out_shape = LayerKind::Conv2d(*spec)
        .output_shape(&[x.shape()])
        .map_err(|e| InferError::ShapeMismatch(e.to_string()))?;
    let s = x.shape();
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let w_len = spec.out_channels * s.c * kh * kw;
    let w = weights
        .get(spec.weight_offset..spec.weight_offset + w_len)
        .ok_or_else(|| InferError::ShapeMismatch("conv2d weights outside blob".into()))?;
    let bias = weights
        .get(spec.bias_offset..spec.bias_offset + spec.out_channels)
        .ok_or_else(|| InferError::ShapeMismatch("conv2d bias outside blob".into()))?;
    let strict = mode.strict();
    let (pad, stride) = (spec.pad as isize, spec.stride as isize);
    let xd = x.data();
    let mut out = Tensor::zeros(out_shape);
    let od = out.data_mut();
    let mut o = 0;
    for n in 0..s.n {
        for oc in 0..spec.out_channels {
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let mut acc = 0.0f32;
                    for ic in 0..s.c {
                        for ky in 0..kh {
                            let iy = oy as isize * stride - pad + ky as isize;
                            if iy < 0 || iy >= s.h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = ox as isize * stride - pad + kx as isize;
                                if ix < 0 || ix >= s.w as isize {
                                    continue;
                                }
                                let xv = xd[s.offset(n, ic, iy as usize, ix as usize)];
                                let wv = w[((oc * s.c + ic) * kh + ky) * kw + kx];
                                acc = mac(acc, wv, xv, strict);
                            }
                        }
                    }
                    od[o] = add(acc, bias[oc], strict);
                    o += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Max pooling; padded positions never win.
pub fn maxpool(x: &Tensor, spec: &PoolSpec) -> Result<Tensor, InferError> {
    let out_shape = LayerKind::MaxPool(*spec)
        .output_shape(&[x.shape()])
        .map_err(|e| InferError::ShapeMismatch(e.to_string()))?;
    let s = x.shape();
    let (pad, stride) = (spec.pad as isize, spec.stride as isize);
    let mut out = Tensor::zeros(out_shape);
    let od = out.data_mut();
    let mut o = 0;
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let mut best = f32::NEG_INFINITY;
                    for ky in 0..spec.kernel {
                        let iy = oy as isize * stride - pad + ky as isize;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        for kx in 0..spec.kernel {
                            let ix = ox as isize * stride - pad + kx as isize;
                            if ix < 0 || ix >= s.w as isize {
                                continue;
                            }
                            let v = x.get(n, c, iy as usize, ix as usize);
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    od[o] = best;
                    o += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Mean over each channel plane.
pub fn avgpool_global(x: &Tensor, mode: PrecisionMode) -> Result<Tensor, InferError> {
    let s = x.shape();
    let plane = s.h * s.w;
    if plane == 0 {
        return Err(InferError::ShapeMismatch(format!("avgpool_global over empty plane {s}")));
    }
    let strict = mode.strict();
    let data = x
        .data()
        .chunks(plane)
        .map(|p| p.iter().fold(0.0f32, |acc, &v| add(acc, v, strict)) / plane as f32)
        .collect();
    Ok(Tensor::new(Shape::new(s.n, s.c, 1, 1), data).expect("one value per channel"))
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = if *v > 0.0 { *v } else { 0.0 });
    out
}

/// Fully connected layer over the flattened `c·h·w` of each batch item.
pub fn dense(x: &Tensor, spec: &DenseSpec, weights: &[f32], mode: PrecisionMode) -> Result<Tensor, InferError> {
    let s = x.shape();
    let in_f = s.item_len();
    if in_f == 0 {
        return Err(InferError::ShapeMismatch(format!("dense over empty input {s}")));
    }
    let w = weights
        .get(spec.weight_offset..spec.weight_offset + spec.out_features * in_f)
        .ok_or_else(|| InferError::ShapeMismatch("dense weights outside blob".into()))?;
    let bias = weights
        .get(spec.bias_offset..spec.bias_offset + spec.out_features)
        .ok_or_else(|| InferError::ShapeMismatch("dense bias outside blob".into()))?;
    let strict = mode.strict();
    let mut data = Vec::with_capacity(s.n * spec.out_features);
    for item in x.data().chunks(in_f) {
        for o in 0..spec.out_features {
            let row = &w[o * in_f..(o + 1) * in_f];
            let acc = row.iter().zip(item).fold(0.0f32, |acc, (&wv, &xv)| mac(acc, wv, xv, strict));
            data.push(add(acc, bias[o], strict));
        }
    }
    Ok(Tensor::new(Shape::new(s.n, spec.out_features, 1, 1), data).expect("n * out_features values"))
}

/// Softmax over the flattened `c·h·w` of each batch item, max-subtracted.
pub fn softmax(x: &Tensor) -> Tensor {
    let s = x.shape();
    let len = s.item_len();
    let mut out = x.clone();
    if len == 0 {
        return out;
    }
    for item in out.data_mut().chunks_mut(len) {
        let max = item.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for v in item.iter_mut() {
            *v = (*v - max).exp();
            sum += *v as f64;
        }
        for v in item.iter_mut() {
            *v = (*v as f64 / sum) as f32;
        }
    }
    out
}

/// Channel concatenation in operand order.
pub fn concat(inputs: &[&Tensor]) -> Result<Tensor, InferError> {
    let shapes: Vec<Shape> = inputs.iter().map(|t| t.shape()).collect();
    let out_shape = LayerKind::Concat
        .output_shape(&shapes)
        .map_err(|e| InferError::ShapeMismatch(e.to_string()))?;
    let mut data = Vec::with_capacity(out_shape.len());
    for n in 0..out_shape.n {
        for t in inputs {
            let item = t.shape().item_len();
            data.extend_from_slice(&t.data()[n * item..(n + 1) * item]);
        }
    }
    Ok(Tensor::new(out_shape, data).expect("concat length"))
}

fn run_layer(kind: &LayerKind, args: &[&Tensor], weights: &[f32], mode: PrecisionMode) -> Result<Tensor, InferError> {
    match kind {
        LayerKind::Conv2d(c) => conv2d(args[0], c, weights, mode),
        LayerKind::Relu => Ok(relu(args[0])),
        LayerKind::MaxPool(p) => maxpool(args[0], p),
        LayerKind::AvgPoolGlobal => avgpool_global(args[0], mode),
        LayerKind::Dense(d) => dense(args[0], d, weights, mode),
        LayerKind::Softmax => Ok(softmax(args[0])),
        LayerKind::Concat => concat(args),
    }
}

struct Trace {
    outputs: Vec<Option<Tensor>>,
    timings: Vec<LayerTiming>,
}

fn execute(g: &NetworkGraph, input: &Tensor, mode: PrecisionMode, keep_all: bool) -> Result<Trace, InferError> {
    if input.shape() != g.input_shape() {
        return Err(InferError::ShapeMismatch(format!(
            "input {} does not match graph input {}",
            input.shape(),
            g.input_shape()
        )));
    }
    let (x0, weights) = if mode.is_half() {
        let means: Vec<f32> = g.means().iter().map(|&m| half16::round_f32(m)).collect();
        (half16::quantize(&subtract_means(&half16::quantize(input), &means)?), g.half_weights())
    } else {
        (subtract_means(input, g.means())?, g.weights())
    };

    let layers = g.layers();
    let mut uses = vec![0usize; layers.len()];
    for l in layers {
        for s in l.sources() {
            if let Source::Layer(j) = s {
                uses[*j] += 1;
            }
        }
    }

    let mut outputs: Vec<Option<Tensor>> = vec![None; layers.len()];
    let mut timings = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let start = Instant::now();
        let mut result = {
            let args: Vec<&Tensor> = layer
                .sources()
                .iter()
                .map(|s| match s {
                    Source::Input => &x0,
                    Source::Layer(j) => outputs[*j].as_ref().expect("operand computed before use"),
                })
                .collect();
            run_layer(layer.kind(), &args, weights, mode)?
        };
        if mode.is_half() && !matches!(layer.kind(), LayerKind::Softmax) {
            half16::quantize_slice(result.data_mut());
        }
        timings.push(LayerTiming { layer_id: layer.id().to_string(), wall_nanos: start.elapsed().as_nanos() as u64 });
        if !keep_all {
            for s in layer.sources() {
                if let Source::Layer(j) = s {
                    uses[*j] -= 1;
                    if uses[*j] == 0 {
                        outputs[*j] = None;
                    }
                }
            }
        }
        outputs[i] = Some(result);
    }
    Ok(Trace { outputs, timings })
}

/// Runs the whole graph and returns the flattened softmax output.
pub fn forward(g: &NetworkGraph, input: &Tensor, mode: PrecisionMode) -> Result<Inference, InferError> {
    let out = g.output_layer();
    if !matches!(out.kind(), LayerKind::Softmax) {
        return Err(InferError::NonSoftmaxOutput(out.id().to_string()));
    }
    let mut trace = execute(g, input, mode, false)?;
    let confidences = trace.outputs.pop().flatten().expect("output layer result").into_data();
    Ok(Inference { confidences, timings: trace.timings })
}

/// Runs the graph and returns every layer's output, in execution order.
/// The output layer may be of any kind.
pub fn forward_layers(g: &NetworkGraph, input: &Tensor, mode: PrecisionMode) -> Result<Vec<Tensor>, InferError> {
    let trace = execute(g, input, mode, true)?;
    Ok(trace.outputs.into_iter().map(|t| t.expect("kept")).collect())
}

/// Index of the largest confidence; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            None if !v.is_nan() => best = Some((i, v)),
            Some((_, b)) if v > b => best = Some((i, v)),
            _ => {}
        }
    }
    best.map(|(i, _)| i)
}
