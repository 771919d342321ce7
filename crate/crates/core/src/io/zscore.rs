use std::collections::BTreeMap;

use crate::data::{BlockType, StudyDataset, Trial};
use crate::error::{Error, Result};

/// Z-scores the task trials of one run against the pooled rest trials.
///
/// Mean and population standard deviation are taken per voxel over every
/// rest time point. Voxels with no rest variance map to 0.
pub fn zscore_to_rest(trials: &[Trial]) -> Result<Vec<Trial>> {
    let rest: Vec<&Trial> = trials.iter().filter(|t| t.block == BlockType::Rest).collect();
    if rest.is_empty() {
        return Err(Error::contract("run has no rest trials"));
    }
    let v = rest[0].data.cols();
    if trials.iter().any(|t| t.data.cols() != v) {
        return Err(Error::dim("zscore_to_rest", "trials have different voxel counts"));
    }
    let rows: usize = rest.iter().map(|t| t.time_points()).sum();
    if rows == 0 {
        return Err(Error::contract("rest trials have no time points"));
    }
    let mut mean = vec![0.0; v];
    for t in &rest {
        for r in 0..t.time_points() {
            mean.iter_mut().zip(t.data.row(r)).for_each(|(m, x)| *m += x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut sd = vec![0.0; v];
    for t in &rest {
        for r in 0..t.time_points() {
            sd.iter_mut().zip(t.data.row(r)).zip(&mean).for_each(|((s, x), m)| *s += (x - m).powi(2));
        }
    }
    sd.iter_mut().for_each(|s| *s = (*s / rows as f64).sqrt());

    trials
        .iter()
        .filter(|t| t.block == BlockType::Task)
        .map(|t| {
            let mut out = t.data.as_ref().clone();
            for row in out.data_mut().chunks_mut(v) {
                for ((x, m), s) in row.iter_mut().zip(&mean).zip(&sd) {
                    *x = if *s > 0.0 { (*x - m) / s } else { 0.0 };
                }
            }
            Ok(Trial::new(t.participant, t.stimulus, t.run, t.block, out))
        })
        .collect()
}

/// Applies [`zscore_to_rest`] to every (participant, run) and keeps only the
/// task trials, in their original order.
pub fn zscore_dataset(dataset: &StudyDataset) -> Result<StudyDataset> {
    let mut runs: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (n, t) in dataset.trials.iter().enumerate() {
        runs.entry((t.participant, t.run)).or_default().push(n);
    }
    let mut normalized: Vec<Option<Trial>> = vec![None; dataset.len()];
    for idx in runs.values() {
        let trials: Vec<Trial> = idx.iter().map(|&i| dataset.trials[i].clone()).collect();
        let tasks = idx.iter().filter(|&&i| dataset.trials[i].block == BlockType::Task);
        for (&i, z) in tasks.zip(zscore_to_rest(&trials)?) {
            normalized[i] = Some(z);
        }
    }
    StudyDataset::new(
        dataset.participants,
        dataset.stimuli,
        dataset.grid.clone(),
        normalized.into_iter().flatten().collect(),
    )
}
