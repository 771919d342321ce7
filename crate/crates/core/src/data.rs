//! In-memory study layout shared by every stage of the pipeline.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockType {
    Task,
    Rest,
}

/// Voxel positions, one row of three coordinates per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    coords: Arc<Tensor>,
}

impl VoxelGrid {
    pub fn new(coords: Tensor) -> Result<Self> {
        if coords.shape().len() != 2 || coords.cols() != 3 {
            return Err(Error::dim(
                "voxel_grid",
                format!("expected V×3 coordinates, got {:?}", coords.shape()),
            ));
        }
        if !coords.all_finite() {
            return Err(Error::contract("voxel coordinates must be finite"));
        }
        Ok(VoxelGrid {
            coords: Arc::new(coords),
        })
    }

    pub fn from_points(points: &[[f64; 3]]) -> Result<Self> {
        let data = points.iter().flatten().copied().collect();
        VoxelGrid::new(Tensor::matrix(points.len(), 3, data)?)
    }

    pub fn voxels(&self) -> usize {
        self.coords.rows()
    }

    pub fn coords(&self) -> &Tensor {
        &self.coords
    }

    pub fn shared(&self) -> Arc<Tensor> {
        Arc::clone(&self.coords)
    }

    pub fn point(&self, v: usize) -> [f64; 3] {
        let r = self.coords.row(v);
        [r[0], r[1], r[2]]
    }
}

/// One recording segment: a `T×V` matrix plus its design labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub participant: usize,
    pub stimulus: usize,
    pub run: usize,
    pub block: BlockType,
    pub data: Arc<Tensor>,
}

impl Trial {
    pub fn new(participant: usize, stimulus: usize, run: usize, block: BlockType, data: Tensor) -> Self {
        Trial {
            participant,
            stimulus,
            run,
            block,
            data: Arc::new(data),
        }
    }

    pub fn time_points(&self) -> usize {
        self.data.rows()
    }

    /// Mean over time points, one value per voxel.
    pub fn time_average(&self) -> Vec<f64> {
        self.data.col_means()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyDataset {
    pub participants: usize,
    pub stimuli: usize,
    pub grid: VoxelGrid,
    pub trials: Vec<Trial>,
}

impl StudyDataset {
    pub fn new(participants: usize, stimuli: usize, grid: VoxelGrid, trials: Vec<Trial>) -> Result<Self> {
        let ds = StudyDataset {
            participants,
            stimuli,
            grid,
            trials,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.voxels();
        for (n, t) in self.trials.iter().enumerate() {
            if t.participant >= self.participants || t.stimulus >= self.stimuli {
                return Err(Error::contract(format!(
                    "trial {n}: participant {} / stimulus {} out of range ({} / {})",
                    t.participant, t.stimulus, self.participants, self.stimuli
                )));
            }
            if t.data.cols() != v || t.data.shape().len() != 2 {
                return Err(Error::dim(
                    "dataset",
                    format!("trial {n} has shape {:?}, grid has {v} voxels", t.data.shape()),
                ));
            }
        }
        Ok(())
    }

    pub fn voxels(&self) -> usize {
        self.grid.voxels()
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Same participants, stimuli and grid, restricted to `indices`.
    pub fn subset(&self, indices: &[usize]) -> StudyDataset {
        StudyDataset {
            participants: self.participants,
            stimuli: self.stimuli,
            grid: self.grid.clone(),
            trials: indices.iter().map(|&i| self.trials[i].clone()).collect(),
        }
    }

    pub fn participant_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.participants];
        self.trials.iter().for_each(|t| c[t.participant] += 1);
        c
    }

    pub fn stimulus_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.stimuli];
        self.trials.iter().for_each(|t| c[t.stimulus] += 1);
        c
    }

    /// Checks that every participant and stimulus has at least one trial.
    pub fn require_coverage(&self) -> Result<()> {
        if let Some(p) = self.participant_counts().iter().position(|&c| c == 0) {
            return Err(Error::contract(format!("participant {p} has no trials")));
        }
        if let Some(s) = self.stimulus_counts().iter().position(|&c| c == 0) {
            return Err(Error::contract(format!("stimulus {s} has no trials")));
        }
        Ok(())
    }

    /// Mean absolute signal per voxel over every trial and time point.
    pub fn mean_abs_activity(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.voxels()];
        let mut rows = 0usize;
        for t in &self.trials {
            for r in 0..t.data.rows() {
                for (a, v) in acc.iter_mut().zip(t.data.row(r)) {
                    *a += v.abs();
                }
            }
            rows += t.data.rows();
        }
        if rows > 0 {
            acc.iter_mut().for_each(|a| *a /= rows as f64);
        }
        acc
    }

    /// Population standard deviation of every observed value.
    pub fn data_std(&self) -> f64 {
        let (mut n, mut sum, mut sq) = (0.0, 0.0, 0.0);
        for t in &self.trials {
            for &v in t.data.data() {
                n += 1.0;
                sum += v;
                sq += v * v;
            }
        }
        if n == 0.0 {
            return 0.0;
        }
        let mean = sum / n;
        (sq / n - mean * mean).max(0.0).sqrt()
    }

    pub fn max_time_points(&self) -> usize {
        self.trials.iter().map(Trial::time_points).max().unwrap_or(0)
    }
}
