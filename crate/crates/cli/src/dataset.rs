use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use vpuflow::tensor::{read_tensor_file, Label, Tensor};

use crate::CliError;

/// One decoded input, identified by its file stem.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub input: Arc<Tensor>,
}

/// Reads every `*.ntsr` file in `dir`, sorted by file name.
///
/// Decoding happens here, ahead of any timed run.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Sample>, CliError> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "ntsr") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(CliError::DatasetEmpty(dir.to_path_buf()));
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(Sample { id, input: Arc::new(read_tensor_file(&p)?) })
        })
        .collect()
}

/// Class of every sample, in sample order.
pub fn labels_for(samples: &[Sample], labels: &[Label]) -> Result<Vec<usize>, CliError> {
    let by_id: HashMap<&str, usize> = labels.iter().map(|l| (l.sample_id.as_str(), l.class)).collect();
    samples
        .iter()
        .map(|s| by_id.get(s.id.as_str()).copied().ok_or_else(|| CliError::MissingLabel(s.id.clone())))
        .collect()
}
