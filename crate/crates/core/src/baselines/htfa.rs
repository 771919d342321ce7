//! Hierarchical topographic factor analysis: every trial's factor geometry
//! varies around one shared template, weights have a standard normal prior.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::StudyDataset;
use crate::diffcore::{Adam, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::evaluation::{trial_log_likelihood, PredictiveBound};
use crate::inference::{check_batch, init_kmeans, run_epochs, BatchObjective, GaussianParams, LossTrace, TrainConfig};
use crate::model::{likelihood_term, rbf_factor_matrix};

/// Log-scale of the template centers' prior around the K-means centers.
pub const TEMPLATE_CENTER_LOG_SCALE: f64 = 1.0;
/// Log-scale of the template log-widths' prior around the K-means widths.
pub const TEMPLATE_WIDTH_LOG_SCALE: f64 = 0.0;
/// Log-scale of a trial's centers around the template.
pub const TRIAL_CENTER_LOG_SCALE: f64 = 0.0;
/// Log-scale of a trial's log-widths around the template.
pub const TRIAL_WIDTH_LOG_SCALE: f64 = -1.0;

const INIT_LOG_SIGMA: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HtfaState {
    pub factors: usize,
    /// Fixed prior means of the template, from K-means.
    pub prior_centers: Tensor,
    pub prior_log_widths: Tensor,
    pub template_centers: GaussianParams,
    pub template_log_widths: GaussianParams,
    /// Per trial, `K × 3`.
    pub centers: Vec<GaussianParams>,
    /// Per trial, length `K`.
    pub log_widths: Vec<GaussianParams>,
    /// Per trial, `T × K`.
    pub weights: Vec<GaussianParams>,
    pub log_sigma_y: Tensor,
}

impl HtfaState {
    pub fn init(dataset: &StudyDataset, factors: usize) -> Result<Self> {
        dataset.validate()?;
        if dataset.is_empty() {
            return Err(Error::contract("HTFA needs at least one trial"));
        }
        let (centers, log_widths) = init_kmeans(dataset, factors)?;
        let widths = Tensor::vector(log_widths);
        let gc = GaussianParams::new(centers.clone(), Tensor::filled(&[factors, 3], INIT_LOG_SIGMA))?;
        let gw = GaussianParams::new(widths.clone(), Tensor::filled(&[factors], INIT_LOG_SIGMA))?;
        let sd = dataset.data_std();
        Ok(HtfaState {
            factors,
            prior_centers: centers,
            prior_log_widths: widths,
            template_centers: gc.clone(),
            template_log_widths: gw.clone(),
            centers: vec![gc; dataset.len()],
            log_widths: vec![gw; dataset.len()],
            weights: dataset
                .trials
                .iter()
                .map(|t| GaussianParams::filled(&[t.time_points(), factors], 0.0, 0.0))
                .collect(),
            log_sigma_y: Tensor::scalar(if sd > 0.0 { sd.ln() } else { 0.0 }),
        })
    }

    /// `2·4K` template values, `2·4K` per trial, `2K` per time point.
    pub fn expected_count(factors: usize, time_points: &[usize]) -> usize {
        let total_t: usize = time_points.iter().sum();
        8 * factors + time_points.len() * 8 * factors + 2 * factors * total_t
    }

    /// Variational values; the fixed priors and the noise scale are not counted.
    pub fn parameter_count(&self) -> usize {
        self.variational().map(|g| 2 * g.len()).sum()
    }

    fn variational(&self) -> impl Iterator<Item = &GaussianParams> {
        [&self.template_centers, &self.template_log_widths]
            .into_iter()
            .chain(&self.centers)
            .chain(&self.log_widths)
            .chain(&self.weights)
    }

    fn variational_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        [&mut self.template_centers, &mut self.template_log_widths]
            .into_iter()
            .chain(self.centers.iter_mut())
            .chain(self.log_widths.iter_mut())
            .chain(self.weights.iter_mut())
            .flat_map(|g| [&mut g.mean, &mut g.log_sigma])
            .collect()
    }

    fn variational_tensors(&self) -> Vec<&Tensor> {
        self.variational().flat_map(|g| [&g.mean, &g.log_sigma]).collect()
    }

    fn check_against(&self, dataset: &StudyDataset) -> Result<()> {
        if self.weights.len() != dataset.len() || self.centers.len() != dataset.len() {
            return Err(Error::contract(format!(
                "HTFA state has {} trials, dataset has {}",
                self.weights.len(),
                dataset.len()
            )));
        }
        for (n, (w, t)) in self.weights.iter().zip(&dataset.trials).enumerate() {
            if w.mean.shape() != [t.time_points(), self.factors] {
                return Err(Error::dim("htfa_state", format!("trial {n}: weights {:?}", w.mean.shape())));
            }
        }
        Ok(())
    }

    /// Time-averaged weight means of every trial.
    pub fn mean_weight_rows(&self) -> Vec<Vec<f64>> {
        self.weights.iter().map(|g| g.mean.col_means()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HtfaFit {
    pub state: HtfaState,
    pub trace: LossTrace,
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

struct HtfaGraph {
    graph: Graph,
    bound: Var,
    /// `(mean, log_sigma)` per variational group in `variational()` order.
    slots: Vec<Option<(Var, Var)>>,
    log_sigma_y: Var,
}

fn build_htfa_bound(state: &HtfaState, dataset: &StudyDataset, batch: &[usize], particles: usize, seed: u64) -> Result<HtfaGraph> {
    check_batch(dataset, batch, particles)?;
    state.check_against(dataset)?;
    let k = state.factors;
    let n_trials = dataset.len();
    let mut g = Graph::new();
    let mut slots: Vec<Option<(Var, Var)>> = vec![None; 2 + 3 * n_trials];
    let reg = |g: &mut Graph, p: &GaussianParams| (g.leaf(p.mean.clone()), g.leaf(p.log_sigma.clone()));
    slots[0] = Some(reg(&mut g, &state.template_centers));
    slots[1] = Some(reg(&mut g, &state.template_log_widths));
    for &n in batch {
        if slots[2 + n].is_none() {
            slots[2 + n] = Some(reg(&mut g, &state.centers[n]));
            slots[2 + n_trials + n] = Some(reg(&mut g, &state.log_widths[n]));
            slots[2 + 2 * n_trials + n] = Some(reg(&mut g, &state.weights[n]));
        }
    }
    let log_sigma_y = g.leaf(state.log_sigma_y.clone());
    let prior_c = g.leaf(state.prior_centers.clone());
    let prior_w = g.leaf(state.prior_log_widths.clone());
    let tmpl_c_scale = g.scalar(TEMPLATE_CENTER_LOG_SCALE);
    let tmpl_w_scale = g.scalar(TEMPLATE_WIDTH_LOG_SCALE);
    let trial_c_scale = g.scalar(TRIAL_CENTER_LOG_SCALE);
    let trial_w_scale = g.scalar(TRIAL_WIDTH_LOG_SCALE);
    let zero = g.scalar(0.0);
    let ys: Vec<Var> = batch.iter().map(|&n| g.constant(dataset.trials[n].data.clone())).collect();
    let template_weight = batch.len() as f64 / n_trials as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_weights = Vec::with_capacity(particles);
    for _ in 0..particles {
        let mut terms = Vec::new();
        let (cm, cl) = slots[0].expect("template");
        let (wm, wl) = slots[1].expect("template");
        let tc = g.reparam_sample(cm, cl, normals(&mut rng, 3 * k))?;
        let tw = g.reparam_sample(wm, wl, normals(&mut rng, k))?;
        let lp_c = g.gaussian_logpdf(tc, prior_c, tmpl_c_scale)?;
        let lp_w = g.gaussian_logpdf(tw, prior_w, tmpl_w_scale)?;
        let lq_c = g.gaussian_logpdf(tc, cm, cl)?;
        let lq_w = g.gaussian_logpdf(tw, wm, wl)?;
        let lp = g.add(lp_c, lp_w)?;
        let lq = g.add(lq_c, lq_w)?;
        let diff = g.sub(lp, lq)?;
        terms.push(g.scale(diff, template_weight));
        for (&n, &y) in batch.iter().zip(&ys) {
            let t = &dataset.trials[n];
            let (cm, cl) = slots[2 + n].expect("registered");
            let (wm, wl) = slots[2 + n_trials + n].expect("registered");
            let (am, al) = slots[2 + 2 * n_trials + n].expect("registered");
            let c = g.reparam_sample(cm, cl, normals(&mut rng, 3 * k))?;
            let w = g.reparam_sample(wm, wl, normals(&mut rng, k))?;
            let a = g.reparam_sample(am, al, normals(&mut rng, t.time_points() * k))?;
            let lp_c = g.gaussian_logpdf(c, tc, trial_c_scale)?;
            let lp_w = g.gaussian_logpdf(w, tw, trial_w_scale)?;
            let lp_a = g.gaussian_logpdf(a, zero, zero)?;
            let lq_c = g.gaussian_logpdf(c, cm, cl)?;
            let lq_w = g.gaussian_logpdf(w, wm, wl)?;
            let lq_a = g.gaussian_logpdf(a, am, al)?;
            let f = g.rbf(c, w, dataset.grid.shared())?;
            let ll = likelihood_term(&mut g, y, a, f, log_sigma_y)?;
            let lp = g.sum_scalars(&[lp_c, lp_w, lp_a, ll])?;
            let lq = g.sum_scalars(&[lq_c, lq_w, lq_a])?;
            terms.push(g.sub(lp, lq)?);
        }
        log_weights.push(g.sum_scalars(&terms)?);
    }
    let bound = if particles == 1 {
        log_weights[0]
    } else {
        let stacked = g.concat(&log_weights)?;
        let lse = g.log_sum_exp(stacked);
        g.offset(lse, -(particles as f64).ln())
    };
    Ok(HtfaGraph {
        graph: g,
        bound,
        slots,
        log_sigma_y,
    })
}

/// Importance-weighted bound of the HTFA joint over `batch`; template terms
/// are scaled by the batch's share of all trials.
pub fn htfa_bound(state: &HtfaState, dataset: &StudyDataset, batch: &[usize], particles: usize, seed: u64) -> Result<f64> {
    let b = build_htfa_bound(state, dataset, batch, particles, seed)?;
    Ok(b.graph.scalar_value(b.bound))
}

struct HtfaObjective<'a> {
    dataset: &'a StudyDataset,
    particles: usize,
    state: HtfaState,
    adam_noise: Adam,
    adam_q: Adam,
}

impl BatchObjective for HtfaObjective<'_> {
    fn step(&mut self, batch: &[usize], seed: u64, lr_theta: f64, lr_lambda: f64) -> Result<f64> {
        let b = build_htfa_bound(&self.state, self.dataset, batch, self.particles, seed)?;
        let value = b.graph.scalar_value(b.bound);
        if !value.is_finite() {
            return Ok(value);
        }
        let mut g = b.graph;
        let loss = g.scale(b.bound, -1.0);
        let grads = g.backward(loss)?;
        let q: Vec<Option<Tensor>> = b
            .slots
            .iter()
            .flat_map(|slot| match slot {
                Some((m, s)) => [grads.try_get(*m).cloned(), grads.try_get(*s).cloned()],
                None => [None, None],
            })
            .collect();
        let noise = [grads.try_get(b.log_sigma_y).cloned()];
        self.adam_noise.step(vec![&mut self.state.log_sigma_y], &noise, lr_theta)?;
        self.adam_q.step(self.state.variational_tensors_mut(), &q, lr_lambda)?;
        Ok(value)
    }

    fn diagnose(&self, batch: &[usize], seed: u64) -> Option<usize> {
        batch.iter().copied().find(|&n| {
            !htfa_bound(&self.state, self.dataset, &[n], self.particles, seed)
                .map(f64::is_finite)
                .unwrap_or(false)
        })
    }
}

/// Fits the HTFA baseline with the same objective, optimizer and schedule as
/// the main model. The noise scale follows `lr_theta`, everything else
/// `lr_lambda`.
pub fn htfa_fit(dataset: &StudyDataset, factors: usize, config: &TrainConfig) -> Result<HtfaFit> {
    config.validate()?;
    let state = HtfaState::init(dataset, factors)?;
    htfa_fit_from(dataset, config, state)
}

pub fn htfa_fit_from(dataset: &StudyDataset, config: &TrainConfig, state: HtfaState) -> Result<HtfaFit> {
    config.validate()?;
    state.check_against(dataset)?;
    let mut objective = HtfaObjective {
        dataset,
        particles: config.particles,
        adam_noise: Adam::new([&state.log_sigma_y]),
        adam_q: Adam::new(state.variational_tensors()),
        state,
    };
    let trace = run_epochs(dataset.len(), config, &mut objective)?;
    Ok(HtfaFit {
        state: objective.state,
        trace,
    })
}

/// Predictive bound of held-out trials: geometry drawn around the template's
/// posterior means, weights from their standard normal prior.
///
/// The predictive distribution is the same for every trial, so every trial
/// is scored against the same draws.
pub fn htfa_log_predictive(
    state: &HtfaState,
    dataset: &StudyDataset,
    trials: &[usize],
    particles: usize,
    seed: u64,
) -> Result<PredictiveBound> {
    if particles == 0 {
        return Err(Error::contract("predictive bound needs at least one particle"));
    }
    if let Some(&n) = trials.iter().find(|&&n| n >= dataset.len()) {
        return Err(Error::contract(format!("trial {n} not in dataset of {}", dataset.len())));
    }
    let k = state.factors;
    let c_scale = Tensor::filled(&[k, 3], TRIAL_CENTER_LOG_SCALE);
    let w_scale = Tensor::filled(&[k], TRIAL_WIDTH_LOG_SCALE);
    let ls_y = state.log_sigma_y.item();
    let per_trial = trials
        .par_iter()
        .map(|&n| {
            let t = &dataset.trials[n];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = 0.0;
            for _ in 0..particles {
                let c = sample(&state.template_centers.mean, &c_scale, &mut rng);
                let rho = sample(&state.template_log_widths.mean, &w_scale, &mut rng);
                let w = Tensor::matrix(t.time_points(), k, normals(&mut rng, t.time_points() * k))?;
                let f = rbf_factor_matrix(&c, &rho, &dataset.grid)?;
                acc += trial_log_likelihood(t, &w, &f, ls_y)?;
            }
            Ok(acc / particles as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let total = per_trial.iter().sum();
    Ok(PredictiveBound { per_trial, total })
}

fn sample(mean: &Tensor, log_scale: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
    let data = mean
        .data()
        .iter()
        .zip(log_scale.data())
        .map(|(&m, &l)| {
            let e: f64 = StandardNormal.sample(rng);
            m + l.exp() * e
        })
        .collect();
    Tensor::new(mean.shape().to_vec(), data).expect("same shape")
}
