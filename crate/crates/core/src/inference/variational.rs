use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::StudyDataset;
use crate::diffcore::{Gradients, Graph, Tensor, Var, LOG_SCALE_MAX, LOG_SCALE_MIN};
use crate::error::{Error, Result};
use crate::model::Latents;

/// Diagonal Gaussian with per-element mean and log standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Tensor,
    pub log_sigma: Tensor,
}

impl GaussianParams {
    pub fn new(mean: Tensor, log_sigma: Tensor) -> Result<Self> {
        if mean.shape() != log_sigma.shape() {
            return Err(Error::dim(
                "gaussian_params",
                format!("mean {:?} vs log_sigma {:?}", mean.shape(), log_sigma.shape()),
            ));
        }
        Ok(GaussianParams { mean, log_sigma })
    }

    pub fn filled(shape: &[usize], mean: f64, log_sigma: f64) -> Self {
        GaussianParams {
            mean: Tensor::filled(shape, mean),
            log_sigma: Tensor::filled(shape, log_sigma),
        }
    }

    /// Standard deviations, with the same clamp the density uses.
    pub fn sigma(&self) -> Tensor {
        self.log_sigma.map(|l| l.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX).exp())
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn count(&self) -> usize {
        self.mean.len() + self.log_sigma.len()
    }

    pub(crate) fn register(&self, g: &mut Graph) -> (Var, Var) {
        (g.leaf(self.mean.clone()), g.leaf(self.log_sigma.clone()))
    }
}

/// Mean-field posterior over every latent of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub factors: usize,
    pub embedding_dim: usize,
    /// Length `D`, one per participant.
    pub participants: Vec<GaussianParams>,
    /// Length `D`, one per stimulus.
    pub stimuli: Vec<GaussianParams>,
    /// `K × 3`, one per participant.
    pub centers: Vec<GaussianParams>,
    /// Length `K`, one per participant.
    pub log_widths: Vec<GaussianParams>,
    /// `T × K`, one per trial.
    pub weights: Vec<GaussianParams>,
}

/// Standard deviation of the initial embedding means.
pub const EMBEDDING_INIT_SD: f64 = 0.1;
pub const EMBEDDING_INIT_LOG_SIGMA: f64 = -1.0;
pub const GEOMETRY_INIT_LOG_SIGMA: f64 = -1.0;
pub const WEIGHT_INIT_LOG_SIGMA: f64 = 0.0;

impl VariationalState {
    /// Embedding means drawn around zero, geometry means at the K-means
    /// solution, weight means at zero.
    pub fn init(
        dataset: &StudyDataset,
        factors: usize,
        embedding_dim: usize,
        centers: &Tensor,
        log_widths: &[f64],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if centers.shape() != [factors, 3] || log_widths.len() != factors {
            return Err(Error::dim(
                "variational_init",
                format!("centers {:?}, {} widths, K={factors}", centers.shape(), log_widths.len()),
            ));
        }
        let normal = Normal::new(0.0, EMBEDDING_INIT_SD).expect("valid sd");
        let embedding = |rng: &mut dyn rand::RngCore| GaussianParams {
            mean: Tensor::vector((0..embedding_dim).map(|_| normal.sample(rng)).collect()),
            log_sigma: Tensor::filled(&[embedding_dim], EMBEDDING_INIT_LOG_SIGMA),
        };
        let participants = (0..dataset.participants).map(|_| embedding(rng)).collect();
        let stimuli = (0..dataset.stimuli).map(|_| embedding(rng)).collect();
        let geometry_c = GaussianParams {
            mean: centers.clone(),
            log_sigma: Tensor::filled(&[factors, 3], GEOMETRY_INIT_LOG_SIGMA),
        };
        let geometry_w = GaussianParams {
            mean: Tensor::vector(log_widths.to_vec()),
            log_sigma: Tensor::filled(&[factors], GEOMETRY_INIT_LOG_SIGMA),
        };
        let weights = dataset
            .trials
            .iter()
            .map(|t| GaussianParams::filled(&[t.time_points(), factors], 0.0, WEIGHT_INIT_LOG_SIGMA))
            .collect();
        Ok(VariationalState {
            factors,
            embedding_dim,
            participants,
            stimuli,
            centers: vec![geometry_c; dataset.participants],
            log_widths: vec![geometry_w; dataset.participants],
            weights,
        })
    }

    /// `2D(P+S) + P·8K + 2·K·ΣT`.
    pub fn expected_count(participants: usize, stimuli: usize, factors: usize, embedding_dim: usize, time_points: &[usize]) -> usize {
        let total_t: usize = time_points.iter().sum();
        2 * embedding_dim * (participants + stimuli) + participants * 8 * factors + 2 * total_t * factors
    }

    pub fn parameter_count(&self) -> usize {
        self.groups().map(GaussianParams::count).sum()
    }

    fn groups(&self) -> impl Iterator<Item = &GaussianParams> {
        self.participants
            .iter()
            .chain(&self.stimuli)
            .chain(&self.centers)
            .chain(&self.log_widths)
            .chain(&self.weights)
    }

    /// Every tensor, mean before log-scale, in the order participants,
    /// stimuli, centers, log-widths, weights.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.groups().flat_map(|g| [&g.mean, &g.log_sigma]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.participants
            .iter_mut()
            .chain(self.stimuli.iter_mut())
            .chain(self.centers.iter_mut())
            .chain(self.log_widths.iter_mut())
            .chain(self.weights.iter_mut())
            .flat_map(|g| [&mut g.mean, &mut g.log_sigma])
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.groups().all(|g| g.mean.all_finite() && g.log_sigma.all_finite())
    }

    /// Checks that the state has one entry per participant, stimulus and
    /// trial of `dataset`, with matching shapes.
    pub fn check_against(&self, dataset: &StudyDataset) -> Result<()> {
        self.check_embeddings(dataset.participants, dataset.stimuli)?;
        if self.weights.len() != dataset.len() {
            return Err(Error::contract(format!(
                "variational state has {} trials, dataset has {}",
                self.weights.len(),
                dataset.len()
            )));
        }
        for (n, (w, t)) in self.weights.iter().zip(&dataset.trials).enumerate() {
            if w.mean.shape() != [t.time_points(), self.factors] {
                return Err(Error::dim(
                    "variational_state",
                    format!("trial {n}: weights {:?}, data has T={}", w.mean.shape(), t.time_points()),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn check_embeddings(&self, participants: usize, stimuli: usize) -> Result<()> {
        if self.participants.len() < participants || self.stimuli.len() < stimuli {
            return Err(Error::contract(format!(
                "variational state covers {} participants / {} stimuli, need {participants} / {stimuli}",
                self.participants.len(),
                self.stimuli.len()
            )));
        }
        let (d, k) = (self.embedding_dim, self.factors);
        let bad = self.participants.iter().chain(&self.stimuli).any(|g| g.mean.len() != d)
            || self.centers.len() != self.participants.len()
            || self.log_widths.len() != self.participants.len()
            || self.centers.iter().any(|g| g.mean.shape() != [k, 3])
            || self.log_widths.iter().any(|g| g.mean.len() != k);
        if bad {
            return Err(Error::dim("variational_state", format!("inconsistent with K={k}, D={d}")));
        }
        Ok(())
    }

    /// Variational means as a point estimate of every latent.
    pub fn mean_latents(&self) -> Latents {
        Latents {
            participant_embeddings: self.participants.iter().map(|g| g.mean.data().to_vec()).collect(),
            stimulus_embeddings: self.stimuli.iter().map(|g| g.mean.data().to_vec()).collect(),
            centers: self.centers.iter().map(|g| g.mean.clone()).collect(),
            log_widths: self.log_widths.iter().map(|g| g.mean.clone()).collect(),
            weights: self.weights.iter().map(|g| g.mean.clone()).collect(),
        }
    }

    /// Time-averaged weight means of every trial, `K` values each.
    pub fn mean_weight_rows(&self) -> Vec<Vec<f64>> {
        self.weights.iter().map(|g| g.mean.col_means()).collect()
    }
}

/// Graph handles for the variational tensors that one bound touches.
#[derive(Debug, Clone)]
pub(crate) struct QVars {
    pub participants: Vec<Option<(Var, Var)>>,
    pub stimuli: Vec<Option<(Var, Var)>>,
    pub centers: Vec<Option<(Var, Var)>>,
    pub log_widths: Vec<Option<(Var, Var)>>,
    pub weights: Vec<Option<(Var, Var)>>,
}

impl QVars {
    pub fn empty(state: &VariationalState) -> Self {
        QVars {
            participants: vec![None; state.participants.len()],
            stimuli: vec![None; state.stimuli.len()],
            centers: vec![None; state.centers.len()],
            log_widths: vec![None; state.log_widths.len()],
            weights: vec![None; state.weights.len()],
        }
    }

    /// Gradients in [`VariationalState::tensors`] order; `None` for tensors
    /// the bound did not touch.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Option<Tensor>> {
        self.participants
            .iter()
            .chain(&self.stimuli)
            .chain(&self.centers)
            .chain(&self.log_widths)
            .chain(&self.weights)
            .flat_map(|slot| match slot {
                Some((m, s)) => [grads.try_get(*m).cloned(), grads.try_get(*s).cloned()],
                None => [None, None],
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BlockType, Trial, VoxelGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(t: &[usize]) -> StudyDataset {
        let grid = VoxelGrid::from_points(&[[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        let trials = t
            .iter()
            .enumerate()
            .map(|(n, &tp)| Trial::new(n % 2, n % 3, 0, BlockType::Task, Tensor::zeros(&[tp, 2])))
            .collect();
        StudyDataset::new(2, 3, grid, trials).unwrap()
    }

    #[test]
    fn count_matches_closed_form() {
        let ds = dataset(&[4, 5, 6, 7]);
        let centers = Tensor::zeros(&[3, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = VariationalState::init(&ds, 3, 2, &centers, &[0.0; 3], &mut rng).unwrap();
        assert_eq!(q.parameter_count(), VariationalState::expected_count(2, 3, 3, 2, &[4, 5, 6, 7]));
        assert_eq!(q.tensors().iter().map(|t| t.len()).sum::<usize>(), q.parameter_count());
        assert!(q.check_against(&ds).is_ok());
    }

    #[test]
    fn synthetic_closed_form() {
        let t = vec![20; 153];
        assert_eq!(VariationalState::expected_count(9, 8, 3, 2, &t), 68 + 216 + 18360);
    }

    #[test]
    fn mismatched_dataset_is_rejected() {
        let ds = dataset(&[4, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = VariationalState::init(&ds, 1, 1, &Tensor::zeros(&[1, 3]), &[0.0], &mut rng).unwrap();
        assert!(q.check_against(&dataset(&[4, 5, 6])).is_err());
        assert!(q.check_against(&dataset(&[4, 6])).is_err());
    }
}
