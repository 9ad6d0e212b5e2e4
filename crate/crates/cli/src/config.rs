//! Run configuration: a JSON file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vpuflow::device::{Bandwidth, DeviceDescriptor, DeviceKind};

use crate::CliError;

/// One entry of the device list: `count` identical devices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub kind: String,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tdp_watts: Option<f32>,
    /// Absent means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_bytes_per_sec: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_ms: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_capacity: Option<usize>,
}

fn one() -> usize {
    1
}

impl DeviceSpec {
    pub fn new(kind: impl Into<String>, count: usize) -> DeviceSpec {
        DeviceSpec {
            kind: kind.into(),
            count,
            tdp_watts: None,
            bandwidth_bytes_per_sec: None,
            service_ms: None,
            queue_capacity: None,
        }
    }

    /// Parses the `KIND:COUNT[:TDP]` flag syntax.
    pub fn parse_flag(s: &str) -> Result<DeviceSpec, CliError> {
        let bad = || CliError::Config(format!("device `{s}` is not KIND:COUNT[:TDP]"));
        let parts: Vec<&str> = s.split(':').collect();
        let (kind, count, tdp) = match parts[..] {
            [k, c] => (k, c, None),
            [k, c, t] => (k, c, Some(t)),
            _ => return Err(bad()),
        };
        let count = count.parse().map_err(|_| bad())?;
        let tdp_watts = tdp.map(|t| t.parse::<f32>().map_err(|_| bad())).transpose()?;
        Ok(DeviceSpec { tdp_watts, ..DeviceSpec::new(kind, count) })
    }

    pub fn descriptor(&self) -> Result<DeviceDescriptor, CliError> {
        let kind: DeviceKind = self.kind.parse().map_err(CliError::Config)?;
        let mut d = DeviceDescriptor::new(kind);
        if let Some(t) = self.tdp_watts {
            d = d.with_tdp(t);
        }
        if let Some(b) = self.bandwidth_bytes_per_sec {
            d = d.with_bandwidth(Bandwidth::BytesPerSec(b));
        }
        if let Some(q) = self.queue_capacity {
            d = d.with_queue_capacity(q);
        }
        match (kind, self.service_ms) {
            (DeviceKind::SyntheticDelay, None) => {
                return Err(CliError::Config(format!("device `{}` needs service_ms", self.kind)));
            }
            (_, Some(ms)) => d.service_ms = ms,
            _ => {}
        }
        d.validate().map_err(|e| CliError::Config(format!("device `{}`: {e}", self.kind)))?;
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default = "default_devices")]
    pub devices: Vec<DeviceSpec>,
    #[serde(default = "default_batch_sizes")]
    pub batch_sizes: Vec<usize>,
    #[serde(default = "default_subset_size")]
    pub subset_size: usize,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// CSV destination; standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_devices() -> Vec<DeviceSpec> {
    vec![DeviceSpec::new("sim-vpu", 8)]
}

fn default_batch_sizes() -> Vec<usize> {
    vec![1, 2, 4, 8]
}

fn default_subset_size() -> usize {
    10_000
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            manifest: None,
            weights: None,
            dataset: None,
            labels: None,
            devices: default_devices(),
            batch_sizes: default_batch_sizes(),
            subset_size: default_subset_size(),
            repetitions: 1,
            out: None,
            seed: 0,
        }
    }
}

/// Flag values that replace whatever the config file says.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Replaces the whole device list when non-empty.
    pub devices: Vec<DeviceSpec>,
    pub batch_sizes: Option<Vec<usize>>,
    pub subset_size: Option<usize>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Applied to every synthetic device.
    pub service_ms: Option<f32>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, CliError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.weights, &mut cfg.dataset, &mut cfg.labels, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        let set = |slot: &mut Option<PathBuf>, v: Option<PathBuf>| {
            if v.is_some() {
                *slot = v;
            }
        };
        set(&mut self.manifest, o.manifest);
        set(&mut self.weights, o.weights);
        set(&mut self.dataset, o.dataset);
        set(&mut self.labels, o.labels);
        set(&mut self.out, o.out);
        if !o.devices.is_empty() {
            self.devices = o.devices;
        }
        if let Some(b) = o.batch_sizes {
            self.batch_sizes = b;
        }
        if let Some(s) = o.subset_size {
            self.subset_size = s;
        }
        if let Some(r) = o.repetitions {
            self.repetitions = r;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(ms) = o.service_ms {
            for d in &mut self.devices {
                if matches!(d.kind.parse(), Ok(DeviceKind::SyntheticDelay)) {
                    d.service_ms = Some(ms);
                }
            }
        }
    }

    /// Checks the invariants and expands the device list, one descriptor
    /// per physical device, in list order.
    pub fn fleet(&self) -> Result<Vec<DeviceDescriptor>, CliError> {
        let mut out = Vec::new();
        for spec in &self.devices {
            let d = spec.descriptor()?;
            out.extend(std::iter::repeat_n(d, spec.count));
        }
        if out.is_empty() {
            return Err(CliError::Config("at least one device is required".into()));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.fleet()?;
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(CliError::Config("batch sizes must be a non-empty list of values >= 1".into()));
        }
        if self.subset_size == 0 {
            return Err(CliError::Config("subset_size must be >= 1".into()));
        }
        if self.repetitions == 0 {
            return Err(CliError::Config("repetitions must be >= 1".into()));
        }
        Ok(())
    }

    pub(crate) fn require<'a>(&self, value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, CliError> {
        value.as_deref().ok_or_else(|| CliError::Config(format!("`{name}` path is not set")))
    }
}
