//! Throughput sweep over batch sizes.

use std::collections::BTreeMap;
use std::sync::Arc;

use vpuflow::device::{fleet_tdp_watts, DeviceDescriptor, DeviceHandle, DeviceKind};
use vpuflow::metrics::{self, throughput, throughput_per_watt, top1_error};
use vpuflow::netgraph::load_manifest;
use vpuflow::scheduler::{run_batch, Job};
use vpuflow::tensor::read_labels;

use crate::config::RunConfig;
use crate::dataset::{labels_for, load_dataset, Sample};
use crate::report::CsvRow;
use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<CsvRow>,
}

impl BenchReport {
    /// Rows for individual repetitions.
    pub fn runs(&self) -> impl Iterator<Item = &CsvRow> {
        self.rows.iter().filter(|r| r.repetition.parse::<usize>().is_ok())
    }

    /// Aggregate rows holding means.
    pub fn means(&self) -> impl Iterator<Item = &CsvRow> {
        self.rows.iter().filter(|r| r.repetition == "mean")
    }

    pub fn stddevs(&self) -> impl Iterator<Item = &CsvRow> {
        self.rows.iter().filter(|r| r.repetition == "stddev")
    }
}

/// Kind names of a fleet, deduplicated, joined by `+`.
pub(crate) fn kind_label(descs: &[DeviceDescriptor]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for d in descs {
        if !names.contains(&d.kind.name()) {
            names.push(d.kind.name());
        }
    }
    names.join("+")
}

pub(crate) fn subset_jobs(chunk: &[Sample]) -> Vec<Job> {
    chunk.iter().enumerate().map(|(i, s)| Job::new(i, s.id.clone(), Arc::clone(&s.input))).collect()
}

/// For each batch size `B`, opens the first `min(B, fleet size)` devices
/// and times every subset `repetitions` times.
///
/// Scaling factors are relative to the mean throughput of the smallest
/// batch size on the same subset.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchReport, CliError> {
    cfg.validate()?;
    let fleet = cfg.fleet()?;
    let manifest = cfg.require(&cfg.manifest, "manifest")?;
    let weights = cfg.require(&cfg.weights, "weights")?;
    let dataset = cfg.require(&cfg.dataset, "dataset")?;

    let samples = load_dataset(dataset)?;
    let graph = Arc::new(load_manifest(manifest, weights)?);
    let labels = match &cfg.labels {
        Some(p) => Some(labels_for(&samples, &read_labels(p)?)?),
        None => None,
    };

    let mut rows = Vec::new();
    for &batch in &cfg.batch_sizes {
        let descs = &fleet[..batch.min(fleet.len())];
        let handles = descs
            .iter()
            .map(|d| DeviceHandle::open(*d, Arc::clone(&graph)))
            .collect::<Result<Vec<_>, _>>()?;
        let tdp = fleet_tdp_watts(&handles);
        for (subset, chunk) in samples.chunks(cfg.subset_size).enumerate() {
            let jobs = subset_jobs(chunk);
            let first = subset * cfg.subset_size;
            for rep in 0..cfg.repetitions {
                let res = run_batch(&handles, &jobs)?;
                let ips = throughput(jobs.len(), res.wall_seconds)?;
                let top1 = match &labels {
                    // synthetic confidences carry no prediction
                    Some(_) if descs.iter().any(|d| d.kind == DeviceKind::SyntheticDelay) => None,
                    Some(l) => {
                        let preds: Vec<&[f32]> = res.results.iter().map(|r| r.confidences.as_slice()).collect();
                        Some(top1_error(&preds, &l[first..first + chunk.len()])?)
                    }
                    None => None,
                };
                rows.push(CsvRow {
                    run_id: format!("{}-b{batch}-s{subset}-r{rep}", cfg.seed),
                    batch_size: batch,
                    device_kind: kind_label(descs),
                    device_count: descs.len(),
                    subset: subset.to_string(),
                    repetition: rep.to_string(),
                    n_images: jobs.len(),
                    wall_seconds: Some(res.wall_seconds),
                    img_per_sec: Some(ips),
                    tdp_watts_total: Some(tdp),
                    img_per_watt: Some(throughput_per_watt(ips, tdp)?),
                    top1_error: top1,
                    conf_diff: None,
                    scaling_factor: None,
                });
            }
        }
    }

    // baseline: mean throughput of the smallest batch size, per subset
    let smallest = *cfg.batch_sizes.iter().min().expect("validated non-empty");
    let mut baseline: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.batch_size == smallest) {
        baseline.entry(r.subset.clone()).or_default().extend(r.img_per_sec);
    }
    let baseline: BTreeMap<String, f32> =
        baseline.into_iter().map(|(k, v)| Ok((k, metrics::mean(&v)?))).collect::<Result<_, CliError>>()?;
    for r in &mut rows {
        let base = baseline[&r.subset];
        let ips = r.img_per_sec.expect("set above");
        r.scaling_factor = Some(metrics::normalize_scaling(&[(r.device_count, ips)], base)?[0].1);
    }

    Ok(BenchReport { rows: with_aggregates(rows, cfg.repetitions) })
}

/// Appends `mean` and `stddev` rows after each group of repetitions.
pub(crate) fn with_aggregates(rows: Vec<CsvRow>, reps: usize) -> Vec<CsvRow> {
    let mut out = Vec::with_capacity(rows.len() + rows.len() / reps * 2);
    for cell in rows.chunks(reps) {
        out.extend_from_slice(cell);
        let head = &cell[0];
        let id_stem = head.run_id.rsplit_once('-').map_or(head.run_id.as_str(), |(a, _)| a);
        let (mean, sd) = (aggregate(cell, Stat::Mean), aggregate(cell, Stat::Stddev));
        for (label, values) in [("mean", mean), ("stddev", sd)] {
            out.push(CsvRow { run_id: format!("{id_stem}-{label}"), repetition: label.into(), ..values });
        }
    }
    out
}

#[derive(Clone, Copy)]
enum Stat {
    Mean,
    Stddev,
}

fn aggregate(cell: &[CsvRow], stat: Stat) -> CsvRow {
    let f32_col = |get: fn(&CsvRow) -> Option<f32>| -> Option<f32> {
        let v: Vec<f32> = cell.iter().filter_map(get).collect();
        if v.len() != cell.len() {
            return None;
        }
        match stat {
            Stat::Mean => metrics::mean(&v).ok(),
            Stat::Stddev => metrics::stddev(&v).ok(),
        }
    };
    let walls: Vec<f64> = cell.iter().filter_map(|r| r.wall_seconds).collect();
    let n = walls.len() as f64;
    let wall_mean = walls.iter().sum::<f64>() / n;
    let wall = match stat {
        Stat::Mean => wall_mean,
        Stat::Stddev => (walls.iter().map(|w| (w - wall_mean).powi(2)).sum::<f64>() / n).sqrt(),
    };
    CsvRow {
        wall_seconds: (walls.len() == cell.len()).then_some(wall),
        img_per_sec: f32_col(|r| r.img_per_sec),
        tdp_watts_total: f32_col(|r| r.tdp_watts_total),
        img_per_watt: f32_col(|r| r.img_per_watt),
        top1_error: f32_col(|r| r.top1_error),
        conf_diff: f32_col(|r| r.conf_diff),
        scaling_factor: f32_col(|r| r.scaling_factor),
        ..cell[0].clone()
    }
}
