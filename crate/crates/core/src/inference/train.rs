use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::StudyDataset;
use crate::diffcore::{Adam, Tensor};
use crate::error::{Error, Result};
use crate::model::{GenerativeConfig, GenerativeParams};

use super::elbo::{elbo_iwae, elbo_iwae_grad};
use super::kmeans::init_kmeans;
use super::schedule::Plateau;
use super::variational::VariationalState;

/// Log-scales of the factor network's initial geometry prior.
pub const CENTER_PRIOR_LOG_SCALE: f64 = 0.0;
pub const WIDTH_PRIOR_LOG_SCALE: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_lambda: f64,
    pub lr_theta: f64,
    pub epochs: usize,
    pub patience: usize,
    pub decay: f64,
    pub particles: usize,
    /// Trials per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_lambda: 0.01,
            lr_theta: 1e-4,
            epochs: 1500,
            patience: 100,
            decay: 0.5,
            particles: 1,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_lambda > 0.0
            && self.lr_theta > 0.0
            && self.lr_lambda.is_finite()
            && self.lr_theta.is_finite()
            && self.patience >= 1
            && self.decay > 0.0
            && self.decay < 1.0
            && self.particles >= 1
            && self.batch_size >= 1;
        if !ok {
            return Err(Error::contract(format!("invalid training config: {self:?}")));
        }
        Ok(())
    }
}

/// Per-epoch mean negative bound and the learning rates used in that epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub losses: Vec<f64>,
    pub lr_theta: Vec<f64>,
    pub lr_lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub params: GenerativeParams,
    pub state: VariationalState,
    pub trace: LossTrace,
}

/// Generative parameters and variational state before the first step.
pub fn initialize(dataset: &StudyDataset, config: &TrainConfig, model: GenerativeConfig) -> Result<(GenerativeParams, VariationalState)> {
    config.validate()?;
    dataset.validate()?;
    dataset.require_coverage()?;
    if model.voxels != dataset.voxels() {
        return Err(Error::dim(
            "fit",
            format!("model V={} but dataset has {} voxels", model.voxels, dataset.voxels()),
        ));
    }
    let (centers, log_widths) = init_kmeans(dataset, model.factors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = GenerativeParams::init(model, &mut rng);
    params.seed_factor_bias(&centers, &log_widths, CENTER_PRIOR_LOG_SCALE, WIDTH_PRIOR_LOG_SCALE)?;
    let sd = dataset.data_std();
    params.log_sigma_y.data_mut()[0] = if sd > 0.0 { sd.ln() } else { 0.0 };
    let state = VariationalState::init(dataset, model.factors, model.embedding_dim, &centers, &log_widths, &mut rng)?;
    Ok((params, state))
}

/// One optimizer step on a batch: returns the bound, or the non-finite bound
/// without touching any parameter.
pub(crate) trait BatchObjective {
    fn step(&mut self, batch: &[usize], seed: u64, lr_theta: f64, lr_lambda: f64) -> Result<f64>;
    /// First trial of `batch` whose own bound is not finite.
    fn diagnose(&self, batch: &[usize], seed: u64) -> Option<usize>;
}

/// Shuffled mini-batch epochs with plateau annealing of both learning rates.
pub(crate) fn run_epochs(trials: usize, config: &TrainConfig, objective: &mut impl BatchObjective) -> Result<LossTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut plateau = Plateau::new(config.patience, config.decay);
    let (mut lr_theta, mut lr_lambda) = (config.lr_theta, config.lr_lambda);
    let mut trace = LossTrace::default();
    let mut order: Vec<usize> = (0..trials).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(config.batch_size) {
            let seed: u64 = rng.random();
            let bound = objective.step(batch, seed, lr_theta, lr_lambda)?;
            if !bound.is_finite() {
                let culprit = objective.diagnose(batch, seed);
                return Err(Error::Numerical(match culprit {
                    Some(n) => format!("non-finite bound in epoch {epoch}, trial {n}"),
                    None => format!("non-finite bound in epoch {epoch}, batch {batch:?}"),
                }));
            }
            total -= bound;
            batches += 1;
        }
        let loss = total / batches as f64;
        trace.losses.push(loss);
        trace.lr_theta.push(lr_theta);
        trace.lr_lambda.push(lr_lambda);
        let m = plateau.observe(loss);
        lr_theta *= m;
        lr_lambda *= m;
    }
    Ok(trace)
}

struct NtfaObjective<'a> {
    dataset: &'a StudyDataset,
    particles: usize,
    params: GenerativeParams,
    state: VariationalState,
    adam_theta: Adam,
    adam_lambda: Adam,
}

impl BatchObjective for NtfaObjective<'_> {
    fn step(&mut self, batch: &[usize], seed: u64, lr_theta: f64, lr_lambda: f64) -> Result<f64> {
        let b = elbo_iwae_grad(&self.params, &self.state, self.dataset, batch, self.particles, seed)?;
        if !b.value.is_finite() {
            return Ok(b.value);
        }
        let descent = |g: Vec<Option<Tensor>>| -> Vec<Option<Tensor>> { g.into_iter().map(|t| t.map(|t| t.map(|x| -x))).collect() };
        self.adam_theta.step(self.params.tensors_mut(), &descent(b.theta), lr_theta)?;
        self.adam_lambda.step(self.state.tensors_mut(), &descent(b.lambda), lr_lambda)?;
        let value = b.value;
        Ok(value)
    }

    fn diagnose(&self, batch: &[usize], seed: u64) -> Option<usize> {
        batch.iter().copied().find(|&n| {
            !elbo_iwae(&self.params, &self.state, self.dataset, &[n], self.particles, seed)
                .map(f64::is_finite)
                .unwrap_or(false)
        })
    }
}

/// Initializes from K-means and maximizes the importance-weighted bound with
/// separate Adam optimizers for the generative parameters and the
/// variational state.
pub fn fit(dataset: &StudyDataset, config: &TrainConfig, model: GenerativeConfig) -> Result<FitOutput> {
    let (params, state) = initialize(dataset, config, model)?;
    fit_from(dataset, config, params, state)
}

/// Continues training from a given state.
pub fn fit_from(
    dataset: &StudyDataset,
    config: &TrainConfig,
    params: GenerativeParams,
    state: VariationalState,
) -> Result<FitOutput> {
    config.validate()?;
    state.check_against(dataset)?;
    let mut objective = NtfaObjective {
        dataset,
        particles: config.particles,
        adam_theta: Adam::new(params.tensors()),
        adam_lambda: Adam::new(state.tensors()),
        params,
        state,
    };
    let trace = run_epochs(dataset.len(), config, &mut objective)?;
    Ok(FitOutput {
        params: objective.params,
        state: objective.state,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BlockType, Trial, VoxelGrid};
    use crate::diffcore::Tensor;

    fn tiny() -> StudyDataset {
        let mut pts = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                pts.push([i as f64, j as f64, 0.0]);
            }
        }
        let grid = VoxelGrid::from_points(&pts).unwrap();
        let trials = (0..6)
            .map(|n| {
                let y = Tensor::matrix(3, 9, (0..27).map(|i| ((i * 7 + n * 3) % 11) as f64 * 0.1).collect()).unwrap();
                Trial::new(n % 2, n % 3, n % 2, BlockType::Task, y)
            })
            .collect();
        StudyDataset::new(2, 3, grid, trials).unwrap()
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = tiny();
        let model = GenerativeConfig::new(2, 2, 9).unwrap();
        let (p0, q0) = initialize(&ds, &config(0), model).unwrap();
        let out = fit(&ds, &config(0), model).unwrap();
        assert_eq!(out.params, p0);
        assert_eq!(out.state, q0);
        assert!(out.trace.losses.is_empty());
    }

    #[test]
    fn fit_is_deterministic_and_moves_parameters() {
        let ds = tiny();
        let model = GenerativeConfig::new(2, 2, 9).unwrap();
        let a = fit(&ds, &config(3), model).unwrap();
        let b = fit(&ds, &config(3), model).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.state, b.state);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.losses.len(), 3);
        let (p0, _) = initialize(&ds, &config(3), model).unwrap();
        assert_ne!(a.params, p0);
    }

    #[test]
    fn loss_decreases_on_tiny_data() {
        let ds = tiny();
        let model = GenerativeConfig::new(2, 2, 9).unwrap();
        let out = fit(&ds, &config(300), model).unwrap();
        let first: f64 = out.trace.losses[..20].iter().sum::<f64>() / 20.0;
        let last: f64 = out.trace.losses[280..].iter().sum::<f64>() / 20.0;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn uncovered_stimulus_is_rejected() {
        let mut ds = tiny();
        ds.stimuli = 4;
        let model = GenerativeConfig::new(2, 2, 9).unwrap();
        assert!(matches!(fit(&ds, &config(1), model), Err(Error::Contract(_))));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = TrainConfig {
            decay: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
