use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::json::{read_json, write_json};
use crate::error::{Error, Result};
use crate::evaluation::ModelKind;
use crate::inference::{LossTrace, TrainConfig, VariationalState};
use crate::model::{GenerativeConfig, GenerativeParams};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub version: u32,
    pub kind: ModelKind,
    pub config: String,
    pub params: String,
    pub state: String,
    pub trace: String,
}

/// Settings a fit was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub model: GenerativeConfig,
    pub train: TrainConfig,
    /// Dataset directory the fit read, as given on the command line.
    pub dataset: Option<String>,
    /// Trials of that dataset the fit saw, in the order of the state's
    /// weight entries.
    pub train_trials: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub record: FitRecord,
    pub params: GenerativeParams,
    pub state: VariationalState,
    pub trace: LossTrace,
}

pub fn save_archive(dir: &Path, archive: &ModelArchive) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = ArchiveManifest {
        version: ARCHIVE_VERSION,
        kind: ModelKind::Ntfa,
        config: "config.json".into(),
        params: "params.json".into(),
        state: "state.json".into(),
        trace: "trace.json".into(),
    };
    write_json(&dir.join(&manifest.config), &archive.record)?;
    write_json(&dir.join(&manifest.params), &archive.params)?;
    write_json(&dir.join(&manifest.state), &archive.state)?;
    write_json(&dir.join(&manifest.trace), &archive.trace)?;
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn load_archive(dir: &Path) -> Result<ModelArchive> {
    let manifest_path = dir.join("manifest.json");
    let manifest: ArchiveManifest = read_json(&manifest_path)?;
    if manifest.version != ARCHIVE_VERSION || manifest.kind != ModelKind::Ntfa {
        return Err(Error::Format {
            path: manifest_path,
            offset: 0,
            message: format!("unsupported archive: version {}, kind {:?}", manifest.version, manifest.kind),
        });
    }
    let archive = ModelArchive {
        record: read_json(&dir.join(&manifest.config))?,
        params: read_json(&dir.join(&manifest.params))?,
        state: read_json(&dir.join(&manifest.state))?,
        trace: read_json(&dir.join(&manifest.trace))?,
    };
    if archive.params.config != archive.record.model {
        return Err(Error::contract("archive parameters disagree with its model config"));
    }
    if archive.state.weights.len() != archive.record.train_trials.len() {
        return Err(Error::contract(format!(
            "archive state has {} trials, record lists {}",
            archive.state.weights.len(),
            archive.record.train_trials.len()
        )));
    }
    Ok(archive)
}

/// Held-out evaluation of one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub model: ModelKind,
    pub factors: usize,
    pub embedding_dim: Option<usize>,
    pub train: TrainConfig,
    pub parameter_count: usize,
    pub particles: usize,
    pub seed: u64,
    pub train_trials: Vec<usize>,
    pub test_trials: Vec<usize>,
    pub final_loss: Option<f64>,
    pub log_predictive: f64,
    pub log_predictive_per_trial: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BlockType, StudyDataset, Trial, VoxelGrid};
    use crate::diffcore::Tensor;
    use crate::inference::initialize;

    #[test]
    fn round_trip_is_exact() {
        let grid = VoxelGrid::from_points(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 2.0, 1.0]]).unwrap();
        let trials = (0..4)
            .map(|n| {
                let data = Tensor::matrix(2, 3, (0..6).map(|i| ((n * 6 + i) as f64).sin()).collect()).unwrap();
                Trial::new(n % 2, n / 2, 0, BlockType::Task, data)
            })
            .collect();
        let ds = StudyDataset::new(2, 2, grid, trials).unwrap();
        let train = TrainConfig::default();
        let model = GenerativeConfig::new(2, 2, 3).unwrap();
        let (params, state) = initialize(&ds, &train, model).unwrap();
        let archive = ModelArchive {
            record: FitRecord {
                model,
                train,
                dataset: Some("data".into()),
                train_trials: vec![0, 1, 2, 3],
            },
            params,
            state,
            trace: LossTrace {
                losses: vec![1.0 / 3.0],
                lr_theta: vec![1e-4],
                lr_lambda: vec![0.01],
            },
        };
        let dir = tempfile::tempdir().unwrap();
        save_archive(dir.path(), &archive).unwrap();
        assert_eq!(load_archive(dir.path()).unwrap(), archive);
    }
}
