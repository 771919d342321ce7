//! Ground-truth synthetic studies with planted participant groups and
//! stimulus categories.
//!
//! Each participant has one run laid out as `rest, task, rest, ..., task,
//! rest`. Every block becomes one trial. Rest blocks carry their own stimulus
//! index, so a design with `C` categories of `N_C` stimuli has
//! `S = 2·C·N_C + 1` stimuli and `P·S` trials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{BlockType, StudyDataset, Trial, VoxelGrid};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::model::rbf_factor_matrix;

/// Regular unit-spaced lattice in a cube centered at the origin, truncated to
/// the first `voxels` points in lexicographic order.
pub fn make_voxel_grid(voxels: usize) -> Result<VoxelGrid> {
    if voxels == 0 {
        return Err(Error::contract("voxel grid needs at least one voxel"));
    }
    let mut side = (voxels as f64).cbrt().round() as usize;
    while side * side * side < voxels {
        side += 1;
    }
    while side > 1 && (side - 1).pow(3) >= voxels {
        side -= 1;
    }
    let half = (side as f64 - 1.0) / 2.0;
    let mut points = Vec::with_capacity(voxels);
    'outer: for i in 0..side {
        for j in 0..side {
            for l in 0..side {
                if points.len() == voxels {
                    break 'outer;
                }
                points.push([i as f64 - half, j as f64 - half, l as f64 - half]);
            }
        }
    }
    VoxelGrid::from_points(&points)
}

/// Mixture parameters and geometry for a synthetic study.
///
/// Covariances are diagonal and given as per-dimension standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDesign {
    pub groups: usize,
    pub participants_per_group: usize,
    pub categories: usize,
    pub stimuli_per_category: usize,
    pub block_len: usize,
    pub voxels: usize,
    pub embedding_dim: usize,
    pub category_means: Vec<Vec<f64>>,
    pub category_sd: Vec<Vec<f64>>,
    pub group_means: Vec<Vec<f64>>,
    pub group_sd: Vec<Vec<f64>>,
    pub centers: Vec<[f64; 3]>,
    pub width_mean: f64,
    pub width_sd: f64,
    pub weight_sd: f64,
    /// When set, group `g` responds only in factor `group_regions[g]`; other
    /// factors get zero-mean weights in that group's task blocks.
    pub group_regions: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for SynthDesign {
    fn default() -> Self {
        SynthDesign {
            groups: 3,
            participants_per_group: 3,
            categories: 2,
            stimuli_per_category: 4,
            block_len: 20,
            voxels: 5000,
            embedding_dim: 2,
            category_means: vec![vec![1.0, 0.0], vec![2.0, 0.0]],
            category_sd: vec![vec![0.15, 0.15]; 2],
            group_means: vec![vec![1.0, -1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            group_sd: vec![vec![0.1, 0.1]; 3],
            centers: vec![[-4.5, -4.5, -3.5], [3.5, -2.5, 3.5], [-1.5, 4.5, 0.5]],
            width_mean: 6f64.ln(),
            width_sd: 0.1,
            weight_sd: 0.25,
            group_regions: Some(vec![0, 1, 2]),
            seed: 0,
        }
    }
}

impl SynthDesign {
    pub fn factors(&self) -> usize {
        self.centers.len()
    }

    pub fn participants(&self) -> usize {
        self.groups * self.participants_per_group
    }

    pub fn task_stimuli(&self) -> usize {
        self.categories * self.stimuli_per_category
    }

    pub fn rest_blocks(&self) -> usize {
        self.task_stimuli() + 1
    }

    pub fn stimuli(&self) -> usize {
        self.task_stimuli() + self.rest_blocks()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.embedding_dim;
        let bad = |msg: String| Err(Error::contract(format!("synthetic design: {msg}")));
        if self.groups == 0 || self.participants_per_group == 0 {
            return bad("needs at least one group and participant".into());
        }
        if self.categories == 0 || self.stimuli_per_category == 0 || self.block_len == 0 {
            return bad("needs categories, stimuli and a positive block length".into());
        }
        if self.centers.is_empty() {
            return bad("needs at least one factor center".into());
        }
        if self.voxels < self.factors() {
            return bad(format!("V={} < K={}", self.voxels, self.factors()));
        }
        let shapes_ok = |means: &[Vec<f64>], sds: &[Vec<f64>], n: usize| {
            means.len() == n
                && sds.len() == n
                && means.iter().chain(sds).all(|v| v.len() == d)
        };
        if !shapes_ok(&self.category_means, &self.category_sd, self.categories) {
            return bad("category means/sds must be C vectors of length D".into());
        }
        if !shapes_ok(&self.group_means, &self.group_sd, self.groups) {
            return bad("group means/sds must be G vectors of length D".into());
        }
        let sds = self.category_sd.iter().chain(&self.group_sd).flatten();
        if sds.chain([&self.width_sd, &self.weight_sd]).any(|&s| !(s >= 0.0) || !s.is_finite()) {
            return bad("standard deviations must be finite and non-negative".into());
        }
        if let Some(regions) = &self.group_regions {
            if regions.len() != self.groups || regions.iter().any(|&r| r >= self.factors()) {
                return bad("group_regions must map every group to a factor index".into());
            }
        }
        Ok(())
    }

    /// Stimulus index of task stimulus `j` of category `c`.
    pub fn task_stimulus(&self, category: usize, j: usize) -> usize {
        category * self.stimuli_per_category + j
    }

    /// Block order of one run as stimulus indices: rest, task, rest, ..., rest.
    /// Categories alternate across task blocks.
    pub fn block_order(&self) -> Vec<usize> {
        let tasks: Vec<usize> = (0..self.stimuli_per_category)
            .flat_map(|j| (0..self.categories).map(move |c| (c, j)))
            .map(|(c, j)| self.task_stimulus(c, j))
            .collect();
        let first_rest = self.task_stimuli();
        let mut order = Vec::with_capacity(self.stimuli());
        for (i, &s) in tasks.iter().enumerate() {
            order.push(first_rest + i);
            order.push(s);
        }
        order.push(first_rest + tasks.len());
        order
    }
}

/// Everything planted by [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub participant_embeddings: Vec<Vec<f64>>,
    pub participant_groups: Vec<usize>,
    /// Zero vectors for rest blocks.
    pub stimulus_embeddings: Vec<Vec<f64>>,
    /// `None` for rest blocks.
    pub stimulus_categories: Vec<Option<usize>>,
    pub centers: Vec<[f64; 3]>,
    pub log_widths: Vec<f64>,
    pub group_regions: Option<Vec<usize>>,
    /// Planted `T × K` weights, one per trial in dataset order.
    pub weights: Vec<Tensor>,
}

impl GroundTruth {
    /// Expected weight of every factor for a (participant, stimulus) pair.
    pub fn mean_weights(&self, participant: usize, stimulus: usize) -> Vec<f64> {
        let k = self.centers.len();
        if self.stimulus_categories[stimulus].is_none() {
            return vec![0.0; k];
        }
        let dot: f64 = self.participant_embeddings[participant]
            .iter()
            .zip(&self.stimulus_embeddings[stimulus])
            .map(|(a, b)| a * b)
            .sum();
        match &self.group_regions {
            Some(regions) => {
                let region = regions[self.participant_groups[participant]];
                (0..k).map(|kk| if kk == region { dot } else { 0.0 }).collect()
            }
            None => vec![dot; k],
        }
    }

    pub fn factor_matrix(&self, grid: &VoxelGrid) -> Result<Tensor> {
        let k = self.centers.len();
        let c = Tensor::matrix(k, 3, self.centers.iter().flatten().copied().collect())?;
        rbf_factor_matrix(&c, &Tensor::vector(self.log_widths.clone()), grid)
    }

    /// Noiseless expected image for a (participant, stimulus) pair.
    pub fn expected_image(&self, participant: usize, stimulus: usize, grid: &VoxelGrid) -> Result<Vec<f64>> {
        let w = Tensor::vector(self.mean_weights(participant, stimulus));
        Ok(w.matmul(&self.factor_matrix(grid)?)?.into_data())
    }
}

fn diag_gaussian(mean: &[f64], sd: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    mean.iter()
        .zip(sd)
        .map(|(&m, &s)| {
            let e: f64 = StandardNormal.sample(rng);
            m + s * e
        })
        .collect()
}

fn draw_embeddings(design: &SynthDesign, rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut stimuli = Vec::with_capacity(design.task_stimuli());
    for c in 0..design.categories {
        for _ in 0..design.stimuli_per_category {
            stimuli.push(diag_gaussian(&design.category_means[c], &design.category_sd[c], rng));
        }
    }
    let mut participants = Vec::with_capacity(design.participants());
    for g in 0..design.groups {
        for _ in 0..design.participants_per_group {
            participants.push(diag_gaussian(&design.group_means[g], &design.group_sd[g], rng));
        }
    }
    (participants, stimuli)
}

/// Participant embeddings (group-major) and task-stimulus embeddings
/// (category-major) drawn from the design's mixtures.
pub fn sample_design_embeddings(design: &SynthDesign, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(draw_embeddings(design, &mut rng))
}

pub fn generate_synthetic(design: &SynthDesign) -> Result<(StudyDataset, GroundTruth)> {
    design.validate()?;
    let grid = make_voxel_grid(design.voxels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let k = design.factors();

    let log_widths: Vec<f64> = (0..k)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            design.width_mean + design.width_sd * e
        })
        .collect();
    let (participant_embeddings, task_embeddings) = draw_embeddings(design, &mut rng);

    let mut stimulus_embeddings = task_embeddings;
    stimulus_embeddings.resize(design.stimuli(), vec![0.0; design.embedding_dim]);
    let stimulus_categories: Vec<Option<usize>> = (0..design.stimuli())
        .map(|s| (s < design.task_stimuli()).then(|| s / design.stimuli_per_category))
        .collect();
    let participant_groups: Vec<usize> = (0..design.participants())
        .map(|p| p / design.participants_per_group)
        .collect();

    let mut truth = GroundTruth {
        participant_embeddings,
        participant_groups,
        stimulus_embeddings,
        stimulus_categories,
        centers: design.centers.clone(),
        log_widths,
        group_regions: design.group_regions.clone(),
        weights: Vec::new(),
    };
    let factors = truth.factor_matrix(&grid)?;

    let t_len = design.block_len;
    let mut trials = Vec::new();
    for p in 0..design.participants() {
        for s in design.block_order() {
            let mean = truth.mean_weights(p, s);
            let mut w = Vec::with_capacity(t_len * k);
            for _ in 0..t_len {
                for &m in &mean {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    w.push(m + design.weight_sd * e);
                }
            }
            let w = Tensor::matrix(t_len, k, w)?;
            let y = w.matmul(&factors)?;
            let block = if truth.stimulus_categories[s].is_some() {
                BlockType::Task
            } else {
                BlockType::Rest
            };
            trials.push(Trial::new(p, s, p, block, y));
            truth.weights.push(w);
        }
    }

    let dataset = StudyDataset::new(design.participants(), design.stimuli(), grid, trials)?;
    Ok((dataset, truth))
}
