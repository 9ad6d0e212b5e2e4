//! Deterministic synthetic network and dataset.
//!
//! Labels are the binary32 argmax of the network itself, so the host
//! device scores zero top-1 error on a generated dataset.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpuflow::infer::{argmax, forward, PrecisionMode};
use vpuflow::netgraph::{Conv2dSpec, DenseSpec, LayerKind, LayerSpec, NetworkGraph, PoolSpec};
use vpuflow::tensor::{write_labels, write_tensor_file, Label, Shape, Tensor};

use crate::config::RunConfig;
use crate::CliError;

/// Multiplier on the uniform fan-in bound `sqrt(3 / fan_in)`.
pub const WEIGHT_GAIN: f32 = 2.0;
/// Nonzero weights per dense row in the exact variant.
const EXACT_DENSE_FANIN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixtureSpec {
    pub samples: usize,
    /// Small-integer weights and inputs whose every intermediate value is
    /// exactly representable in binary16.
    pub exact: bool,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub conv_out: usize,
    pub classes: usize,
    pub subset_size: usize,
}

impl Default for FixtureSpec {
    fn default() -> FixtureSpec {
        FixtureSpec { samples: 500, exact: false, channels: 1, height: 16, width: 16, conv_out: 8, classes: 10, subset_size: 100 }
    }
}

/// Where [`cmd_gen_fixture`] put things.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixtureFiles {
    pub manifest: PathBuf,
    pub weights: PathBuf,
    pub dataset: PathBuf,
    pub labels: PathBuf,
    pub config: PathBuf,
}

/// conv 3×3 pad 1 → relu → maxpool 2/2 → dense → softmax.
pub fn build_network(rng: &mut impl Rng, spec: &FixtureSpec) -> Result<NetworkGraph, CliError> {
    if spec.height < 2 || spec.width < 2 || spec.channels == 0 || spec.conv_out == 0 || spec.classes == 0 {
        return Err(CliError::Config(format!("fixture spec too small: {spec:?}")));
    }
    let input = Shape::new(1, spec.channels, spec.height, spec.width);
    let conv_fan = spec.channels * 9;
    let dense_fan = spec.conv_out * (spec.height / 2) * (spec.width / 2);

    let mut blob = Vec::new();
    let conv_w = spec.conv_out * conv_fan;
    let dense_w = spec.classes * dense_fan;
    if spec.exact {
        blob.extend((0..conv_w).map(|_| rng.gen_range(-1i32..=1) as f32));
        blob.extend((0..spec.conv_out).map(|_| rng.gen_range(-2i32..=2) as f32));
        for _ in 0..spec.classes {
            let mut row = vec![0.0f32; dense_fan];
            for _ in 0..EXACT_DENSE_FANIN.min(dense_fan) {
                row[rng.gen_range(0..dense_fan)] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            }
            blob.extend(row);
        }
        blob.extend((0..spec.classes).map(|_| rng.gen_range(-4i32..=4) as f32));
    } else {
        let bound = |fan: usize| WEIGHT_GAIN * (3.0 / fan as f32).sqrt();
        let (a, b) = (bound(conv_fan), bound(dense_fan));
        blob.extend((0..conv_w).map(|_| rng.gen_range(-a..a)));
        blob.extend((0..spec.conv_out).map(|_| rng.gen_range(-0.1f32..0.1)));
        blob.extend((0..dense_w).map(|_| rng.gen_range(-b..b)));
        blob.extend((0..spec.classes).map(|_| rng.gen_range(-0.1f32..0.1)));
    }
    let specs = vec![
        LayerSpec::new(
            "conv1",
            &["input"],
            LayerKind::Conv2d(Conv2dSpec {
                out_channels: spec.conv_out,
                kernel_h: 3,
                kernel_w: 3,
                stride: 1,
                pad: 1,
                weight_offset: 0,
                bias_offset: conv_w,
            }),
        ),
        LayerSpec::new("relu1", &["conv1"], LayerKind::Relu),
        LayerSpec::new("pool1", &["relu1"], LayerKind::MaxPool(PoolSpec { kernel: 2, stride: 2, pad: 0 })),
        LayerSpec::new(
            "fc",
            &["pool1"],
            LayerKind::Dense(DenseSpec {
                out_features: spec.classes,
                weight_offset: conv_w + spec.conv_out,
                bias_offset: conv_w + spec.conv_out + dense_w,
            }),
        ),
        LayerSpec::new("prob", &["fc"], LayerKind::Softmax),
    ];
    let means = if spec.exact { vec![] } else { vec![0.5; spec.channels] };
    Ok(NetworkGraph::new(input, means, specs, blob)?)
}

pub fn sample_input(rng: &mut impl Rng, shape: Shape, exact: bool) -> Tensor {
    let data = (0..shape.len())
        .map(|_| if exact { rng.gen_range(0i32..=3) as f32 } else { rng.gen::<f32>() })
        .collect();
    Tensor::new(shape, data).expect("length matches shape")
}

/// Writes `model.json`, `weights.bin`, `dataset/NNNNNN.ntsr`, `labels.tsv`
/// and a ready-to-use `config.json` into `dir`. Stale `.ntsr` files in
/// `dir/dataset` are removed first so the dataset matches the labels.
pub fn cmd_gen_fixture(dir: impl AsRef<Path>, seed: u64, spec: &FixtureSpec) -> Result<FixtureFiles, CliError> {
    if spec.samples == 0 || spec.subset_size == 0 {
        return Err(CliError::Config("samples and subset_size must be >= 1".into()));
    }
    let dir = dir.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = build_network(&mut rng, spec)?;

    let files = FixtureFiles {
        manifest: dir.join("model.json"),
        weights: dir.join("weights.bin"),
        dataset: dir.join("dataset"),
        labels: dir.join("labels.tsv"),
        config: dir.join("config.json"),
    };
    fs::create_dir_all(&files.dataset).map_err(CliError::io(&files.dataset))?;
    for entry in fs::read_dir(&files.dataset).map_err(CliError::io(&files.dataset))? {
        let p = entry.map_err(CliError::io(&files.dataset))?.path();
        if p.extension().is_some_and(|e| e == "ntsr") {
            fs::remove_file(&p).map_err(CliError::io(&p))?;
        }
    }
    graph.save(&files.manifest, &files.weights)?;

    let width = spec.samples.to_string().len().max(6);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let x = sample_input(&mut rng, graph.input_shape(), spec.exact);
        let conf = forward(&graph, &x, PrecisionMode::Fp32).map_err(|e| CliError::Config(e.to_string()))?.confidences;
        let id = format!("{i:0width$}");
        write_tensor_file(&x, files.dataset.join(format!("{id}.ntsr")))?;
        labels.push(Label { sample_id: id, class: argmax(&conf).unwrap_or(0) });
    }
    write_labels(&labels, &files.labels).map_err(CliError::io(&files.labels))?;

    let cfg = RunConfig {
        manifest: Some("model.json".into()),
        weights: Some("weights.bin".into()),
        dataset: Some("dataset".into()),
        labels: Some("labels.tsv".into()),
        subset_size: spec.subset_size,
        seed,
        ..RunConfig::default()
    };
    let json = serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n";
    fs::write(&files.config, json).map_err(CliError::io(&files.config))?;
    Ok(files)
}
