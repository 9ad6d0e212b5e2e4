//! The fixed CSV layout shared by `bench` and `accuracy`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Serialize, Serializer};

use crate::CliError;

/// One output line. Empty cells are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CsvRow {
    pub run_id: String,
    pub batch_size: usize,
    pub device_kind: String,
    pub device_count: usize,
    pub subset: String,
    /// A repetition number, or `mean` / `stddev` on aggregate rows.
    pub repetition: String,
    pub n_images: usize,
    #[serde(serialize_with = "nanos")]
    pub wall_seconds: Option<f64>,
    pub img_per_sec: Option<f32>,
    pub tdp_watts_total: Option<f32>,
    pub img_per_watt: Option<f32>,
    pub top1_error: Option<f32>,
    pub conf_diff: Option<f32>,
    pub scaling_factor: Option<f32>,
}

/// Seconds to nanosecond resolution, which is all the clock offers.
fn nanos<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_str(&format!("{x:.9}")),
        None => s.serialize_none(),
    }
}

pub const COLUMNS: [&str; 14] = [
    "run_id",
    "batch_size",
    "device_kind",
    "device_count",
    "subset",
    "repetition",
    "n_images",
    "wall_seconds",
    "img_per_sec",
    "tdp_watts_total",
    "img_per_watt",
    "top1_error",
    "conf_diff",
    "scaling_factor",
];

pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(CliError::io("CSV output"))?;
    Ok(())
}

/// Writes to `path`, or to standard output when there is none.
pub fn emit(rows: &[CsvRow], path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(CliError::io(dir))?;
            }
            let f = fs::File::create(p).map_err(CliError::io(p))?;
            write_csv(rows, io::BufWriter::new(f))
        }
        None => write_csv(rows, io::stdout().lock()),
    }
}
