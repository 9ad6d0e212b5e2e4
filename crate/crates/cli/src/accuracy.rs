//! Host binary32 against simulated binary16, per subset.

use std::sync::Arc;

use vpuflow::device::{DeviceDescriptor, DeviceHandle};
use vpuflow::metrics::{confidence_diff, throughput, throughput_per_watt, top1_error, MetricsError};
use vpuflow::netgraph::load_manifest;
use vpuflow::scheduler::{run_grouped, BatchResult, Group};
use vpuflow::tensor::read_labels;

use crate::bench::subset_jobs;
use crate::config::RunConfig;
use crate::dataset::{labels_for, load_dataset};
use crate::report::CsvRow;
use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetAccuracy {
    /// `None` for the whole dataset.
    pub subset: Option<usize>,
    pub n_images: usize,
    pub top1_fp32: f32,
    pub top1_fp16: f32,
    /// `None` when no sample is classified correctly by both.
    pub conf_diff: Option<f32>,
    pub wall_fp32: f64,
    pub wall_fp16: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyReport {
    pub subsets: Vec<SubsetAccuracy>,
    pub overall: SubsetAccuracy,
    pub host: DeviceDescriptor,
    pub vpu: DeviceDescriptor,
}

fn compare(
    subset: Option<usize>,
    reference: &[&[f32]],
    test: &[&[f32]],
    labels: &[usize],
    walls: (f64, f64),
) -> Result<SubsetAccuracy, CliError> {
    let conf_diff = match confidence_diff(reference, test, labels) {
        Ok(d) => Some(d),
        Err(MetricsError::NoSurvivingSamples) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(SubsetAccuracy {
        subset,
        n_images: labels.len(),
        top1_fp32: top1_error(reference, labels)?,
        top1_fp16: top1_error(test, labels)?,
        conf_diff,
        wall_fp32: walls.0,
        wall_fp16: walls.1,
    })
}

fn confidences(r: &BatchResult) -> Vec<&[f32]> {
    r.results.iter().map(|x| x.confidences.as_slice()).collect()
}

/// Runs every sample on one host device and one simulated VPU side by
/// side, subset by subset.
pub fn cmd_accuracy(cfg: &RunConfig) -> Result<AccuracyReport, CliError> {
    cfg.validate()?;
    let manifest = cfg.require(&cfg.manifest, "manifest")?;
    let weights = cfg.require(&cfg.weights, "weights")?;
    let dataset = cfg.require(&cfg.dataset, "dataset")?;
    let labels_path = cfg.require(&cfg.labels, "labels")?;

    let samples = load_dataset(dataset)?;
    let labels = labels_for(&samples, &read_labels(labels_path)?)?;
    let graph = Arc::new(load_manifest(manifest, weights)?);

    let (host_desc, vpu_desc) = (DeviceDescriptor::host(), DeviceDescriptor::sim_vpu());
    let host = [DeviceHandle::open(host_desc, Arc::clone(&graph))?];
    let vpu = [DeviceHandle::open(vpu_desc, Arc::clone(&graph))?];

    let mut subsets = Vec::new();
    let mut all_ref = Vec::with_capacity(samples.len());
    let mut all_test = Vec::with_capacity(samples.len());
    let (mut wall_ref, mut wall_test) = (0.0, 0.0);
    for (i, chunk) in samples.chunks(cfg.subset_size).enumerate() {
        let jobs = subset_jobs(chunk);
        let mut out = run_grouped(&[Group::new(&host, jobs.clone()), Group::new(&vpu, jobs)])?.into_iter();
        let a = out.next().expect("two groups")?;
        let b = out.next().expect("two groups")?;
        let first = i * cfg.subset_size;
        let l = &labels[first..first + chunk.len()];
        subsets.push(compare(Some(i), &confidences(&a), &confidences(&b), l, (a.wall_seconds, b.wall_seconds))?);
        wall_ref += a.wall_seconds;
        wall_test += b.wall_seconds;
        all_ref.extend(a.results.into_iter().map(|r| r.confidences));
        all_test.extend(b.results.into_iter().map(|r| r.confidences));
    }
    let r: Vec<&[f32]> = all_ref.iter().map(Vec::as_slice).collect();
    let t: Vec<&[f32]> = all_test.iter().map(Vec::as_slice).collect();
    let overall = compare(None, &r, &t, &labels, (wall_ref, wall_test))?;
    Ok(AccuracyReport { subsets, overall, host: host_desc, vpu: vpu_desc })
}

impl AccuracyReport {
    /// Two rows per subset, host first, then the same pair over the whole
    /// dataset with subset `all`. The VPU row carries the confidence gap.
    pub fn rows(&self, seed: u64) -> Result<Vec<CsvRow>, CliError> {
        let mut rows = Vec::new();
        for s in self.subsets.iter().chain(std::iter::once(&self.overall)) {
            let subset = s.subset.map_or("all".to_string(), |i| i.to_string());
            for (desc, wall, top1, diff) in [
                (&self.host, s.wall_fp32, s.top1_fp32, None),
                (&self.vpu, s.wall_fp16, s.top1_fp16, s.conf_diff),
            ] {
                let ips = throughput(s.n_images, wall).ok();
                rows.push(CsvRow {
                    run_id: format!("{seed}-{}-s{subset}", desc.kind.name()),
                    batch_size: 1,
                    device_kind: desc.kind.name().to_string(),
                    device_count: 1,
                    subset: subset.clone(),
                    repetition: "0".into(),
                    n_images: s.n_images,
                    wall_seconds: Some(wall),
                    img_per_sec: ips,
                    tdp_watts_total: Some(desc.tdp_watts),
                    img_per_watt: ips.map(|v| throughput_per_watt(v, desc.tdp_watts)).transpose()?,
                    top1_error: Some(top1),
                    conf_diff: diff,
                    scaling_factor: None,
                });
            }
        }
        Ok(rows)
    }
}
