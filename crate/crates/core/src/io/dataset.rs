use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::json::{read_json, write_json};
use super::matrix::{read_matrix, write_matrix};
use crate::data::{BlockType, StudyDataset, Trial, VoxelGrid};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
const GRID_FILE: &str = "grid.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant: usize,
    pub stimulus: usize,
    pub run: usize,
    pub block: BlockType,
    pub time_points: usize,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub participants: usize,
    pub stimuli: usize,
    pub voxels: usize,
    pub grid: String,
    pub trials: Vec<TrialRecord>,
    /// Display names; empty means "use the index".
    #[serde(default)]
    pub participant_labels: Vec<String>,
    #[serde(default)]
    pub stimulus_labels: Vec<String>,
}

/// Human-readable names of participants and stimuli.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetLabels {
    pub participants: Vec<String>,
    pub stimuli: Vec<String>,
}

impl DatasetLabels {
    pub fn participant(&self, p: usize) -> String {
        self.participants.get(p).cloned().unwrap_or_else(|| format!("p{p}"))
    }

    pub fn stimulus(&self, s: usize) -> String {
        self.stimuli.get(s).cloned().unwrap_or_else(|| format!("s{s}"))
    }
}

pub fn save_dataset(dir: &Path, dataset: &StudyDataset) -> Result<()> {
    save_dataset_labeled(dir, dataset, &DatasetLabels::default())
}

/// Writes `manifest.json`, `grid.bin` and one matrix file per trial under
/// `trials/`.
pub fn save_dataset_labeled(dir: &Path, dataset: &StudyDataset, labels: &DatasetLabels) -> Result<()> {
    dataset.validate()?;
    let trial_dir = dir.join("trials");
    fs::create_dir_all(&trial_dir).map_err(|e| Error::io(&trial_dir, e))?;
    write_matrix(&dir.join(GRID_FILE), dataset.grid.coords())?;
    let mut trials = Vec::with_capacity(dataset.len());
    for (n, t) in dataset.trials.iter().enumerate() {
        let name = format!("trials/{n:05}.bin");
        write_matrix(&dir.join(&name), &t.data)?;
        trials.push(TrialRecord {
            participant: t.participant,
            stimulus: t.stimulus,
            run: t.run,
            block: t.block,
            time_points: t.time_points(),
            data: name,
        });
    }
    let manifest = DatasetManifest {
        participants: dataset.participants,
        stimuli: dataset.stimuli,
        voxels: dataset.voxels(),
        grid: GRID_FILE.into(),
        trials,
        participant_labels: labels.participants.clone(),
        stimulus_labels: labels.stimuli.clone(),
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn load_dataset(dir: &Path) -> Result<StudyDataset> {
    load_dataset_labeled(dir).map(|(d, _)| d)
}

pub fn load_dataset_labeled(dir: &Path) -> Result<(StudyDataset, DatasetLabels)> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: DatasetManifest = read_json(&manifest_path)?;
    let resolve = |name: &str| -> PathBuf { dir.join(name) };
    let grid = VoxelGrid::new(read_matrix(&resolve(&manifest.grid))?)?;
    if grid.voxels() != manifest.voxels {
        return Err(Error::contract(format!(
            "{}: manifest says V={}, grid has {}",
            manifest_path.display(),
            manifest.voxels,
            grid.voxels()
        )));
    }
    let mut trials = Vec::with_capacity(manifest.trials.len());
    for (n, r) in manifest.trials.iter().enumerate() {
        let data = read_matrix(&resolve(&r.data))?;
        if data.rows() != r.time_points {
            return Err(Error::contract(format!(
                "trial {n}: manifest says T={}, {} has {} rows",
                r.time_points,
                r.data,
                data.rows()
            )));
        }
        trials.push(Trial::new(r.participant, r.stimulus, r.run, r.block, data));
    }
    let dataset = StudyDataset::new(manifest.participants, manifest.stimuli, grid, trials)?;
    let labels = DatasetLabels {
        participants: manifest.participant_labels,
        stimuli: manifest.stimulus_labels,
    };
    Ok((dataset, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    fn small() -> StudyDataset {
        let grid = VoxelGrid::from_points(&[[0.0; 3], [1.0, 0.5, -2.0]]).unwrap();
        let trials = vec![
            Trial::new(0, 1, 0, BlockType::Task, Tensor::matrix(2, 2, vec![0.1, -3.0, 2.5, 1e-3]).unwrap()),
            Trial::new(1, 0, 1, BlockType::Rest, Tensor::matrix(3, 2, vec![1.0; 6]).unwrap()),
        ];
        StudyDataset::new(2, 2, grid, trials).unwrap()
    }

    #[test]
    fn round_trip_is_stable_at_single_precision() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small();
        save_dataset(dir.path(), &ds).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in ds.trials.iter().zip(&back.trials) {
            assert_eq!((a.participant, a.stimulus, a.run, a.block), (b.participant, b.stimulus, b.run, b.block));
            let rounded: Vec<f64> = a.data.data().iter().map(|&x| x as f32 as f64).collect();
            assert_eq!(b.data.data(), rounded.as_slice());
        }
        let again = tempfile::tempdir().unwrap();
        save_dataset(again.path(), &back).unwrap();
        assert_eq!(load_dataset(again.path()).unwrap(), back);
    }

    #[test]
    fn missing_trial_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &small()).unwrap();
        fs::remove_file(dir.path().join("trials/00001.bin")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn missing_manifest_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
    }
}
