//! Held-out splits, the posterior-predictive bound, predictive means and
//! parameter counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::htfa::HtfaState;
use crate::data::{StudyDataset, Trial};
use crate::diffcore::{Graph, Tensor, LOG_SCALE_MAX, LOG_SCALE_MIN};
use crate::error::{Error, Result};
use crate::inference::VariationalState;
use crate::model::{eta_f_forward, eta_w_forward, likelihood_term, rbf_factor_matrix, GenerativeConfig, GenerativeParams};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Diagonal split: trial `n` is held out when `p_n mod S == s_n`.
pub fn heldout_split(dataset: &StudyDataset) -> Result<SplitPlan> {
    let (p, s) = (dataset.participants, dataset.stimuli);
    if p < 2 || s < 2 {
        return Err(Error::contract(format!("diagonal split needs P >= 2 and S >= 2, got P={p}, S={s}")));
    }
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&n| dataset.trials[n].participant % s == dataset.trials[n].stimulus);
    let train_set = dataset.subset(&train);
    if let Some(pp) = train_set.participant_counts().iter().position(|&c| c == 0) {
        return Err(Error::contract(format!("participant {pp} has no training trial after the split")));
    }
    if let Some(ss) = train_set.stimulus_counts().iter().position(|&c| c == 0) {
        return Err(Error::contract(format!("stimulus {ss} has no training trial after the split")));
    }
    Ok(SplitPlan { train, test })
}

/// Per-trial contributions and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveBound {
    pub per_trial: Vec<f64>,
    pub total: f64,
}

impl PredictiveBound {
    fn from_parts(per_trial: Vec<f64>) -> Self {
        let total = per_trial.iter().sum();
        PredictiveBound { per_trial, total }
    }
}

fn draw(mu: &Tensor, log_sigma: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
    let data = mu
        .data()
        .iter()
        .zip(log_sigma.data())
        .map(|(&m, &l)| {
            let e: f64 = StandardNormal.sample(rng);
            m + l.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX).exp() * e
        })
        .collect();
    Tensor::new(mu.shape().to_vec(), data).expect("same shape")
}

/// `log p(Y | W, F, sigma_Y)` through the shared likelihood term.
pub(crate) fn trial_log_likelihood(trial: &Trial, w: &Tensor, f: &Tensor, log_sigma_y: f64) -> Result<f64> {
    let mut g = Graph::new();
    let y = g.constant(trial.data.clone());
    let (wv, fv) = (g.leaf(w.clone()), g.leaf(f.clone()));
    let s = g.scalar(log_sigma_y);
    let lp = likelihood_term(&mut g, y, wv, fv, s)?;
    Ok(g.scalar_value(lp))
}

/// Seeded generator for trial `n`; streams keep trials independent of the
/// order they are evaluated in.
pub(crate) fn trial_rng(seed: u64, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng
}

fn check_trials(dataset: &StudyDataset, trials: &[usize], particles: usize) -> Result<()> {
    if particles == 0 {
        return Err(Error::contract("predictive bound needs at least one particle"));
    }
    if let Some(&n) = trials.iter().find(|&&n| n >= dataset.len()) {
        return Err(Error::contract(format!("trial {n} not in dataset of {}", dataset.len())));
    }
    Ok(())
}

/// Posterior-predictive lower bound of the held-out `trials`.
///
/// Each particle draws the embeddings from the variational posterior, then
/// geometry and weights from the generative model, and scores the trial
/// under the likelihood. Contributions are averaged over particles and summed
/// over trials.
pub fn log_predictive_bound(
    params: &GenerativeParams,
    state: &VariationalState,
    dataset: &StudyDataset,
    trials: &[usize],
    particles: usize,
    seed: u64,
) -> Result<PredictiveBound> {
    check_trials(dataset, trials, particles)?;
    for &n in trials {
        let t = &dataset.trials[n];
        if t.participant >= state.participants.len() || t.stimulus >= state.stimuli.len() {
            return Err(Error::contract(format!(
                "no embedding for participant {} / stimulus {} of trial {n}",
                t.participant, t.stimulus
            )));
        }
    }
    state.check_embeddings(state.participants.len(), state.stimuli.len())?;
    let k = params.config.factors;
    let log_sigma_y = params.log_sigma_y.item();
    let per_trial = trials
        .par_iter()
        .map(|&n| {
            let t = &dataset.trials[n];
            let mut rng = trial_rng(seed, n);
            let mut acc = 0.0;
            for _ in 0..particles {
                let qp = &state.participants[t.participant];
                let qs = &state.stimuli[t.stimulus];
                let zp = draw(&qp.mean, &qp.log_sigma, &mut rng);
                let zs = draw(&qs.mean, &qs.log_sigma, &mut rng);
                let fp = eta_f_forward(params, zp.data())?;
                let c = draw(&fp.mu_x, &fp.log_sigma_x, &mut rng);
                let rho = draw(&fp.mu_rho, &fp.log_sigma_rho, &mut rng);
                let wp = eta_w_forward(params, zp.data(), zs.data())?;
                let mut rows = Vec::with_capacity(t.time_points() * k);
                for _ in 0..t.time_points() {
                    rows.extend(draw(&wp.mu, &wp.log_sigma, &mut rng).into_data());
                }
                let w = Tensor::matrix(t.time_points(), k, rows)?;
                let f = rbf_factor_matrix(&c, &rho, &dataset.grid)?;
                acc += trial_log_likelihood(t, &w, &f, log_sigma_y)?;
            }
            Ok(acc / particles as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PredictiveBound::from_parts(per_trial))
}

/// Time-averaged predictive image of a (participant, stimulus) pair from the
/// variational embedding means pushed through both networks' means.
pub fn posterior_predictive_mean(
    params: &GenerativeParams,
    state: &VariationalState,
    participant: usize,
    stimulus: usize,
    dataset: &StudyDataset,
) -> Result<Vec<f64>> {
    let (qp, qs) = match (state.participants.get(participant), state.stimuli.get(stimulus)) {
        (Some(p), Some(s)) => (p, s),
        _ => {
            return Err(Error::contract(format!(
                "no embedding for participant {participant} / stimulus {stimulus}"
            )))
        }
    };
    let fp = eta_f_forward(params, qp.mean.data())?;
    let wp = eta_w_forward(params, qp.mean.data(), qs.mean.data())?;
    let f = rbf_factor_matrix(&fp.mu_x, &fp.mu_rho, &dataset.grid)?;
    Ok(wp.mu.matmul(&f)?.into_data())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ntfa,
    Htfa,
}

/// Trainable parameter count of a model on a study of `n` trials with `t`
/// time points each.
pub fn parameter_count(kind: ModelKind, p: usize, s: usize, n: usize, t: usize, k: usize, d: usize) -> Result<usize> {
    if [p, s, n, t, k, d].contains(&0) {
        return Err(Error::contract("parameter_count arguments must all be >= 1"));
    }
    Ok(match kind {
        ModelKind::Ntfa => {
            let cfg = GenerativeConfig::new(k, d, 1)?;
            GenerativeParams::expected_count(&cfg) + VariationalState::expected_count(p, s, k, d, &vec![t; n])
        }
        ModelKind::Htfa => HtfaState::expected_count(k, &vec![t; n]),
    })
}
