//! Network manifests: a JSON layer list plus a raw binary32 weight blob.
//!
//! ```json
//! {
//!   "input": {"c": 1, "h": 16, "w": 16},
//!   "means": [0.5],
//!   "layers": [
//!     {"id": "conv1", "kind": "conv2d", "inputs": ["input"], "out_channels": 8,
//!      "kernel_h": 3, "kernel_w": 3, "stride": 1, "pad": 1,
//!      "weight_offset": 0, "bias_offset": 72},
//!     {"id": "relu1", "kind": "relu", "inputs": ["conv1"]},
//!     {"id": "prob", "kind": "softmax", "inputs": ["relu1"]}
//!   ]
//! }
//! ```
//!
//! `"input"` is reserved and names the network input. Offsets count `f32`
//! elements, not bytes. Conv weights are laid out `[out][in][kh][kw]`, dense
//! weights `[out][in]` where `in` is the flattened `c·h·w` of the input.
//!
//! Layers may appear in any order; [`NetworkGraph::new`] sorts them
//! topologically, keeping manifest order among independent layers. That
//! order also fixes the channel order of every concat.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::half16;
use crate::tensor::Shape;

/// Id reserved for the graph input.
pub const INPUT_ID: &str = "input";

// Field values above this are rejected outright; no desk-scale network needs them
// and it keeps every offset/size product far from overflow.
const MAX_FIELD: u64 = u32::MAX as u64;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("layer `{layer}`: unknown kind `{kind}`")]
    UnknownLayerKind { layer: String, kind: String },
    #[error("layer `{layer}` references unknown layer `{missing}`")]
    DanglingLayerRef { layer: String, missing: String },
    #[error("layer `{layer}`: {what} needs blob elements up to {end}, blob has {len}")]
    WeightBlobOverrun { layer: String, what: &'static str, end: u128, len: usize },
    #[error("weight blob is {0} bytes, not a multiple of 4")]
    WeightBlobMisaligned(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("layer graph has a cycle through {0:?}")]
    CyclicGraph(Vec<String>),
    #[error("I/O failure on {path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseSpec {
    pub out_features: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d(Conv2dSpec),
    Relu,
    MaxPool(PoolSpec),
    AvgPoolGlobal,
    Dense(DenseSpec),
    Softmax,
    Concat,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv2d(_) => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool(_) => "maxpool",
            LayerKind::AvgPoolGlobal => "avgpool_global",
            LayerKind::Dense(_) => "dense",
            LayerKind::Softmax => "softmax",
            LayerKind::Concat => "concat",
        }
    }

    /// Output shape for the given input shapes.
    pub fn output_shape(&self, inputs: &[Shape]) -> Result<Shape, GraphError> {
        let single = || -> Result<Shape, GraphError> {
            match inputs {
                [s] => Ok(*s),
                _ => Err(GraphError::ShapeMismatch(format!(
                    "{} takes exactly one input, got {}",
                    self.name(),
                    inputs.len()
                ))),
            }
        };
        match self {
            LayerKind::Conv2d(c) => {
                let x = single()?;
                let h = window_out(x.h, c.kernel_h, c.stride, c.pad, "conv2d")?;
                let w = window_out(x.w, c.kernel_w, c.stride, c.pad, "conv2d")?;
                Ok(Shape::new(x.n, c.out_channels, h, w))
            }
            LayerKind::MaxPool(p) => {
                let x = single()?;
                let h = window_out(x.h, p.kernel, p.stride, p.pad, "maxpool")?;
                let w = window_out(x.w, p.kernel, p.stride, p.pad, "maxpool")?;
                Ok(Shape::new(x.n, x.c, h, w))
            }
            LayerKind::AvgPoolGlobal => {
                let x = single()?;
                if x.h == 0 || x.w == 0 {
                    return Err(GraphError::ShapeMismatch(format!("avgpool_global over empty plane {x}")));
                }
                Ok(Shape::new(x.n, x.c, 1, 1))
            }
            LayerKind::Dense(d) => {
                let x = single()?;
                Ok(Shape::new(x.n, d.out_features, 1, 1))
            }
            LayerKind::Relu | LayerKind::Softmax => single(),
            LayerKind::Concat => {
                let Some(first) = inputs.first() else {
                    return Err(GraphError::ShapeMismatch("concat with no inputs".into()));
                };
                let mut c = 0usize;
                for s in inputs {
                    if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
                        return Err(GraphError::ShapeMismatch(format!(
                            "concat inputs {first} and {s} differ outside the channel axis"
                        )));
                    }
                    c = c
                        .checked_add(s.c)
                        .ok_or_else(|| GraphError::ShapeMismatch("concat channel overflow".into()))?;
                }
                Ok(Shape::new(first.n, c, first.h, first.w))
            }
        }
    }
}

fn window_out(len: usize, kernel: usize, stride: usize, pad: usize, what: &str) -> Result<usize, GraphError> {
    let padded = len + 2 * pad;
    if kernel > padded {
        return Err(GraphError::ShapeMismatch(format!(
            "{what} kernel {kernel} exceeds padded extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub id: String,
    pub inputs: Vec<String>,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, inputs: &[&str], kind: LayerKind) -> LayerSpec {
        LayerSpec { id: id.into(), inputs: inputs.iter().map(|s| s.to_string()).collect(), kind }
    }
}

/// Where a layer reads one of its operands from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Input,
    Layer(usize),
}

/// A validated layer with resolved operands and shapes.
#[derive(Clone, Debug)]
pub struct Layer {
    spec: LayerSpec,
    sources: Vec<Source>,
    input_shapes: Vec<Shape>,
    output_shape: Shape,
}

impl Layer {
    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn kind(&self) -> &LayerKind {
        &self.spec.kind
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    /// Operands as indices into [`NetworkGraph::layers`] (or the graph input).
    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn input_shapes(&self) -> &[Shape] {
        &self.input_shapes
    }

    pub fn output_shape(&self) -> Shape {
        self.output_shape
    }
}

/// A validated, topologically ordered network with its weights.
#[derive(Clone, Debug)]
pub struct NetworkGraph {
    input_shape: Shape,
    means: Vec<f32>,
    layers: Vec<Layer>,
    weights: Arc<[f32]>,
    half_weights: OnceLock<Arc<[f32]>>,
}

impl PartialEq for NetworkGraph {
    fn eq(&self, other: &Self) -> bool {
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.input_shape == other.input_shape
            && bits(&self.means) == bits(&other.means)
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.spec == b.spec)
            && bits(&self.weights) == bits(&other.weights)
    }
}

impl NetworkGraph {
    /// Validates and orders a layer list.
    ///
    /// `input` must have `n == 1`; `means` is empty or has one entry per
    /// input channel.
    pub fn new(input: Shape, means: Vec<f32>, specs: Vec<LayerSpec>, weights: Vec<f32>) -> Result<NetworkGraph, GraphError> {
        if input.n != 1 {
            return Err(GraphError::SchemaViolation(format!("input batch must be 1, got {}", input.n)));
        }
        if input.c == 0 || input.h == 0 || input.w == 0 {
            return Err(GraphError::SchemaViolation(format!("input dimensions must be positive, got {input}")));
        }
        if input.checked_len().is_none() {
            return Err(GraphError::SchemaViolation(format!("input shape {input} overflows")));
        }
        if !means.is_empty() && means.len() != input.c {
            return Err(GraphError::ShapeMismatch(format!(
                "{} channel means for {} input channels",
                means.len(),
                input.c
            )));
        }
        if specs.is_empty() {
            return Err(GraphError::SchemaViolation("network has no layers".into()));
        }

        let mut index_of = HashMap::with_capacity(specs.len());
        for (i, s) in specs.iter().enumerate() {
            validate_spec(s)?;
            if index_of.insert(s.id.as_str(), i).is_some() {
                return Err(GraphError::SchemaViolation(format!("duplicate layer id `{}`", s.id)));
            }
        }

        // Resolve operands against manifest positions.
        let mut raw_sources = Vec::with_capacity(specs.len());
        for s in &specs {
            let mut srcs = Vec::with_capacity(s.inputs.len());
            for name in &s.inputs {
                if name == INPUT_ID {
                    srcs.push(Source::Input);
                } else if let Some(&j) = index_of.get(name.as_str()) {
                    srcs.push(Source::Layer(j));
                } else {
                    return Err(GraphError::DanglingLayerRef { layer: s.id.clone(), missing: name.clone() });
                }
            }
            raw_sources.push(srcs);
        }

        let order = topo_order(&specs, &raw_sources)?;

        let mut consumers = vec![0usize; specs.len()];
        for srcs in &raw_sources {
            for src in srcs {
                if let Source::Layer(j) = src {
                    consumers[*j] += 1;
                }
            }
        }
        let sinks: Vec<&str> = (0..specs.len()).filter(|&i| consumers[i] == 0).map(|i| specs[i].id.as_str()).collect();
        if sinks.len() != 1 {
            return Err(GraphError::SchemaViolation(format!(
                "graph must have exactly one output layer, found {sinks:?}"
            )));
        }

        let mut position = vec![0usize; specs.len()];
        for (pos, &i) in order.iter().enumerate() {
            position[i] = pos;
        }

        let mut layers: Vec<Layer> = Vec::with_capacity(specs.len());
        let mut specs: Vec<Option<LayerSpec>> = specs.into_iter().map(Some).collect();
        for &i in &order {
            let spec = specs[i].take().expect("each layer visited once");
            let sources: Vec<Source> = raw_sources[i]
                .iter()
                .map(|s| match s {
                    Source::Input => Source::Input,
                    Source::Layer(j) => Source::Layer(position[*j]),
                })
                .collect();
            let input_shapes: Vec<Shape> = sources
                .iter()
                .map(|s| match s {
                    Source::Input => input,
                    Source::Layer(j) => layers[*j].output_shape,
                })
                .collect();
            let output_shape = spec
                .kind
                .output_shape(&input_shapes)
                .map_err(|e| match e {
                    GraphError::ShapeMismatch(m) => GraphError::ShapeMismatch(format!("layer `{}`: {m}", spec.id)),
                    other => other,
                })?;
            if output_shape.checked_len().is_none() {
                return Err(GraphError::ShapeMismatch(format!("layer `{}` output {output_shape} overflows", spec.id)));
            }
            check_blob(&spec, &input_shapes, weights.len())?;
            layers.push(Layer { spec, sources, input_shapes, output_shape });
        }

        Ok(NetworkGraph { input_shape: input, means, layers, weights: weights.into(), half_weights: OnceLock::new() })
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn means(&self) -> &[f32] {
        &self.means
    }

    /// Layers in execution order.
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("validated graphs have at least one layer")
    }

    pub fn output_shape(&self) -> Shape {
        self.output_layer().output_shape
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// The weight blob rounded through binary16, computed once.
    pub fn half_weights(&self) -> &[f32] {
        self.half_weights.get_or_init(|| {
            let mut w = self.weights.to_vec();
            half16::quantize_slice(&mut w);
            w.into()
        })
    }

    /// Serializes the manifest as pretty JSON, layers in execution order.
    pub fn to_manifest_json(&self) -> String {
        let doc = ManifestDoc {
            input: InputDoc { c: self.input_shape.c as u64, h: self.input_shape.h as u64, w: self.input_shape.w as u64 },
            means: if self.means.is_empty() { None } else { Some(self.means.clone()) },
            layers: self.layers.iter().map(|l| LayerDoc::from_spec(&l.spec)).collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("manifest serialization is infallible");
        s.push('\n');
        s
    }

    pub fn weight_bytes(&self) -> Vec<u8> {
        self.weights.iter().flat_map(|w| w.to_bits().to_le_bytes()).collect()
    }

    /// Writes the manifest and weight blob.
    pub fn save(&self, manifest: impl AsRef<Path>, weights: impl AsRef<Path>) -> Result<(), GraphError> {
        write_file(manifest.as_ref(), self.to_manifest_json().as_bytes())?;
        write_file(weights.as_ref(), &self.weight_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), GraphError> {
    fs::write(path, bytes).map_err(|source| GraphError::Io { path: path.display().to_string(), source })
}

fn validate_spec(s: &LayerSpec) -> Result<(), GraphError> {
    let bad = |m: String| Err(GraphError::SchemaViolation(format!("layer `{}`: {m}", s.id)));
    if s.id.is_empty() {
        return Err(GraphError::SchemaViolation("empty layer id".into()));
    }
    if s.id == INPUT_ID {
        return bad(format!("`{INPUT_ID}` is reserved for the network input"));
    }
    match (&s.kind, s.inputs.len()) {
        (LayerKind::Concat, n) if n < 2 => return bad(format!("concat needs at least 2 inputs, got {n}")),
        (LayerKind::Concat, _) => {}
        (_, 1) => {}
        (k, n) => return bad(format!("{} takes exactly 1 input, got {n}", k.name())),
    }
    match &s.kind {
        LayerKind::Conv2d(c) => {
            if c.out_channels == 0 || c.kernel_h == 0 || c.kernel_w == 0 || c.stride == 0 {
                return bad("out_channels, kernel_h, kernel_w and stride must be >= 1".into());
            }
        }
        LayerKind::MaxPool(p) => {
            if p.kernel == 0 || p.stride == 0 {
                return bad("kernel and stride must be >= 1".into());
            }
            if p.pad >= p.kernel {
                return bad(format!("maxpool pad {} must be smaller than kernel {}", p.pad, p.kernel));
            }
        }
        LayerKind::Dense(d) => {
            if d.out_features == 0 {
                return bad("out_features must be >= 1".into());
            }
        }
        LayerKind::Relu | LayerKind::AvgPoolGlobal | LayerKind::Softmax | LayerKind::Concat => {}
    }
    Ok(())
}

fn check_blob(spec: &LayerSpec, inputs: &[Shape], len: usize) -> Result<(), GraphError> {
    let check = |what: &'static str, offset: usize, count: u128| -> Result<(), GraphError> {
        let end = offset as u128 + count;
        if end > len as u128 {
            return Err(GraphError::WeightBlobOverrun { layer: spec.id.clone(), what, end, len });
        }
        Ok(())
    };
    match &spec.kind {
        LayerKind::Conv2d(c) => {
            let in_c = inputs[0].c as u128;
            check("weights", c.weight_offset, c.out_channels as u128 * in_c * c.kernel_h as u128 * c.kernel_w as u128)?;
            check("bias", c.bias_offset, c.out_channels as u128)
        }
        LayerKind::Dense(d) => {
            let x = inputs[0];
            let in_f = x.c as u128 * x.h as u128 * x.w as u128;
            check("weights", d.weight_offset, d.out_features as u128 * in_f)?;
            check("bias", d.bias_offset, d.out_features as u128)
        }
        _ => Ok(()),
    }
}

/// Kahn's algorithm; among ready layers the earliest in manifest order goes first.
fn topo_order(specs: &[LayerSpec], sources: &[Vec<Source>]) -> Result<Vec<usize>, GraphError> {
    let n = specs.len();
    let mut indegree = vec![0usize; n];
    let mut successors = vec![Vec::new(); n];
    for (i, srcs) in sources.iter().enumerate() {
        for s in srcs {
            if let Source::Layer(j) = s {
                indegree[i] += 1;
                successors[*j].push(i);
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &k in &successors[i] {
            indegree[k] -= 1;
            if indegree[k] == 0 {
                ready.insert(k);
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).filter(|&i| indegree[i] > 0).map(|i| specs[i].id.clone()).collect();
        return Err(GraphError::CyclicGraph(stuck));
    }
    Ok(order)
}

/// Output shape of every layer, keyed by id, in execution order.
pub fn infer_shapes(g: &NetworkGraph) -> IndexMap<String, Shape> {
    g.layers.iter().map(|l| (l.spec.id.clone(), l.output_shape)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputDoc {
    c: u64,
    h: u64,
    w: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    input: InputDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    means: Option<Vec<f32>>,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    id: String,
    kind: String,
    inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_channels: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel_h: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel_w: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pad: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_features: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight_offset: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias_offset: Option<u64>,
}

impl LayerDoc {
    fn from_spec(s: &LayerSpec) -> LayerDoc {
        let mut d = LayerDoc { id: s.id.clone(), kind: s.kind.name().to_string(), inputs: s.inputs.clone(), ..Default::default() };
        let u = |v: usize| Some(v as u64);
        match &s.kind {
            LayerKind::Conv2d(c) => {
                d.out_channels = u(c.out_channels);
                d.kernel_h = u(c.kernel_h);
                d.kernel_w = u(c.kernel_w);
                d.stride = u(c.stride);
                d.pad = u(c.pad);
                d.weight_offset = u(c.weight_offset);
                d.bias_offset = u(c.bias_offset);
            }
            LayerKind::MaxPool(p) => {
                d.kernel = u(p.kernel);
                d.stride = u(p.stride);
                d.pad = u(p.pad);
            }
            LayerKind::Dense(x) => {
                d.out_features = u(x.out_features);
                d.weight_offset = u(x.weight_offset);
                d.bias_offset = u(x.bias_offset);
            }
            LayerKind::Relu | LayerKind::AvgPoolGlobal | LayerKind::Softmax | LayerKind::Concat => {}
        }
        d
    }

    fn into_spec(self) -> Result<LayerSpec, GraphError> {
        let fields: [(&str, Option<u64>); 9] = [
            ("out_channels", self.out_channels),
            ("kernel_h", self.kernel_h),
            ("kernel_w", self.kernel_w),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("pad", self.pad),
            ("out_features", self.out_features),
            ("weight_offset", self.weight_offset),
            ("bias_offset", self.bias_offset),
        ];
        let allowed: &[&str] = match self.kind.as_str() {
            "conv2d" => &["out_channels", "kernel_h", "kernel_w", "stride", "pad", "weight_offset", "bias_offset"],
            "maxpool" => &["kernel", "stride", "pad"],
            "dense" => &["out_features", "weight_offset", "bias_offset"],
            "relu" | "avgpool_global" | "softmax" | "concat" => &[],
            other => return Err(GraphError::UnknownLayerKind { layer: self.id, kind: other.to_string() }),
        };
        let id = &self.id;
        for (name, value) in &fields {
            if value.is_some() && !allowed.contains(name) {
                return Err(GraphError::SchemaViolation(format!(
                    "layer `{id}`: field `{name}` is not valid for kind `{}`",
                    self.kind
                )));
            }
        }
        let get = |name: &str| -> Result<usize, GraphError> {
            let v = fields
                .iter()
                .find(|(n, _)| *n == name)
                .and_then(|(_, v)| *v)
                .ok_or_else(|| GraphError::SchemaViolation(format!("layer `{id}`: missing field `{name}`")))?;
            if v > MAX_FIELD {
                return Err(GraphError::SchemaViolation(format!("layer `{id}`: `{name}` = {v} is out of range")));
            }
            Ok(v as usize)
        };
        let kind = match self.kind.as_str() {
            "conv2d" => LayerKind::Conv2d(Conv2dSpec {
                out_channels: get("out_channels")?,
                kernel_h: get("kernel_h")?,
                kernel_w: get("kernel_w")?,
                stride: get("stride")?,
                pad: get("pad")?,
                weight_offset: get("weight_offset")?,
                bias_offset: get("bias_offset")?,
            }),
            "maxpool" => LayerKind::MaxPool(PoolSpec { kernel: get("kernel")?, stride: get("stride")?, pad: get("pad")? }),
            "dense" => LayerKind::Dense(DenseSpec {
                out_features: get("out_features")?,
                weight_offset: get("weight_offset")?,
                bias_offset: get("bias_offset")?,
            }),
            "relu" => LayerKind::Relu,
            "avgpool_global" => LayerKind::AvgPoolGlobal,
            "softmax" => LayerKind::Softmax,
            "concat" => LayerKind::Concat,
            _ => unreachable!("kind checked above"),
        };
        Ok(LayerSpec { id: self.id, inputs: self.inputs, kind })
    }
}

/// Parses manifest JSON and validates it against `weights`.
pub fn parse_manifest(json: &str, weights: Vec<f32>) -> Result<NetworkGraph, GraphError> {
    let doc: ManifestDoc = serde_json::from_str(json).map_err(|e| GraphError::SchemaViolation(e.to_string()))?;
    let dim = |v: u64, name: &str| -> Result<usize, GraphError> {
        if v > MAX_FIELD {
            return Err(GraphError::SchemaViolation(format!("input `{name}` = {v} is out of range")));
        }
        Ok(v as usize)
    };
    let input = Shape::new(1, dim(doc.input.c, "c")?, dim(doc.input.h, "h")?, dim(doc.input.w, "w")?);
    let specs = doc.layers.into_iter().map(LayerDoc::into_spec).collect::<Result<Vec<_>, _>>()?;
    NetworkGraph::new(input, doc.means.unwrap_or_default(), specs, weights)
}

/// Decodes a raw little-endian binary32 blob.
pub fn parse_weight_blob(bytes: &[u8]) -> Result<Vec<f32>, GraphError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(GraphError::WeightBlobMisaligned(bytes.len()));
    }
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
}

/// Loads and validates a manifest and its weight blob.
pub fn load_manifest(manifest: impl AsRef<Path>, weights: impl AsRef<Path>) -> Result<NetworkGraph, GraphError> {
    let read_err = |p: &Path| {
        let path = p.display().to_string();
        move |source| GraphError::Io { path, source }
    };
    let (manifest, weights) = (manifest.as_ref(), weights.as_ref());
    let json = fs::read_to_string(manifest).map_err(read_err(manifest))?;
    let blob = fs::read(weights).map_err(read_err(weights))?;
    parse_manifest(&json, parse_weight_blob(&blob)?)
}
