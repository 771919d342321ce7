use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::StudyDataset;
use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{
    embedding_prior_term, geometry_prior_term, likelihood_term, weight_prior_term, GenerativeParams, ParamVars,
};

use super::variational::{QVars, VariationalState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundOptions {
    /// Drop the observation term, leaving only prior and entropy terms.
    pub include_likelihood: bool,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            include_likelihood: true,
        }
    }
}

struct BoundGraph {
    pub graph: Graph,
    pub bound: Var,
    pub params: ParamVars,
    pub q: QVars,
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Fraction of each latent's trials that fall inside `batch`.
pub(crate) fn coverage_weights(counts: &[usize], batch_counts: &[usize]) -> Vec<f64> {
    counts
        .iter()
        .zip(batch_counts)
        .map(|(&c, &b)| if c == 0 { 0.0 } else { b as f64 / c as f64 })
        .collect()
}

pub(crate) fn check_batch(dataset: &StudyDataset, batch: &[usize], particles: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::contract("bound needs a non-empty trial batch"));
    }
    if particles == 0 {
        return Err(Error::contract("bound needs at least one particle"));
    }
    if let Some(&n) = batch.iter().find(|&&n| n >= dataset.len()) {
        return Err(Error::contract(format!("trial {n} not in dataset of {}", dataset.len())));
    }
    Ok(())
}

/// Builds the importance-weighted bound for `batch` on a fresh graph.
///
/// Noise is drawn per particle in a fixed order: for each touched participant
/// (ascending) its embedding, centers and log-widths; then each touched
/// stimulus embedding; then the weights of every batch trial in batch order.
fn build_bound(
    params: &GenerativeParams,
    state: &VariationalState,
    dataset: &StudyDataset,
    batch: &[usize],
    particles: usize,
    seed: u64,
    opts: BoundOptions,
) -> Result<BoundGraph> {
    check_batch(dataset, batch, particles)?;
    state.check_against(dataset)?;
    let cfg = params.config;
    if cfg.factors != state.factors || cfg.embedding_dim != state.embedding_dim || cfg.voxels != dataset.voxels() {
        return Err(Error::dim(
            "elbo_iwae",
            format!(
                "model K={} D={} V={}, state K={} D={}, data V={}",
                cfg.factors,
                cfg.embedding_dim,
                cfg.voxels,
                state.factors,
                state.embedding_dim,
                dataset.voxels()
            ),
        ));
    }
    let (k, d) = (cfg.factors, cfg.embedding_dim);

    let mut batch_p = vec![0; dataset.participants];
    let mut batch_s = vec![0; dataset.stimuli];
    for &n in batch {
        batch_p[dataset.trials[n].participant] += 1;
        batch_s[dataset.trials[n].stimulus] += 1;
    }
    let a_p = coverage_weights(&dataset.participant_counts(), &batch_p);
    let a_s = coverage_weights(&dataset.stimulus_counts(), &batch_s);
    let touched_p: Vec<usize> = (0..dataset.participants).filter(|&p| batch_p[p] > 0).collect();
    let touched_s: Vec<usize> = (0..dataset.stimuli).filter(|&s| batch_s[s] > 0).collect();

    let mut g = Graph::new();
    let pv = params.register(&mut g);
    let mut q = QVars::empty(state);
    for &p in &touched_p {
        q.participants[p] = Some(state.participants[p].register(&mut g));
        q.centers[p] = Some(state.centers[p].register(&mut g));
        q.log_widths[p] = Some(state.log_widths[p].register(&mut g));
    }
    for &s in &touched_s {
        q.stimuli[s] = Some(state.stimuli[s].register(&mut g));
    }
    for &n in batch {
        if q.weights[n].is_none() {
            q.weights[n] = Some(state.weights[n].register(&mut g));
        }
    }
    let ys: Vec<Var> = batch.iter().map(|&n| g.constant(dataset.trials[n].data.clone())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_weights = Vec::with_capacity(particles);
    for _ in 0..particles {
        let mut terms = Vec::new();
        let mut zp = vec![None; dataset.participants];
        let mut factors = vec![None; dataset.participants];
        for &p in &touched_p {
            let (zm, zl) = q.participants[p].expect("registered");
            let (cm, cl) = q.centers[p].expect("registered");
            let (wm, wl) = q.log_widths[p].expect("registered");
            let z = g.reparam_sample(zm, zl, normals(&mut rng, d))?;
            let c = g.reparam_sample(cm, cl, normals(&mut rng, 3 * k))?;
            let w = g.reparam_sample(wm, wl, normals(&mut rng, k))?;
            let lp_z = embedding_prior_term(&mut g, z)?;
            let lp_geo = geometry_prior_term(&mut g, &pv, z, c, w)?;
            let lq_z = g.gaussian_logpdf(z, zm, zl)?;
            let lq_c = g.gaussian_logpdf(c, cm, cl)?;
            let lq_w = g.gaussian_logpdf(w, wm, wl)?;
            let lp = g.add(lp_z, lp_geo)?;
            let lq = g.sum_scalars(&[lq_z, lq_c, lq_w])?;
            let diff = g.sub(lp, lq)?;
            terms.push(g.scale(diff, a_p[p]));
            if opts.include_likelihood {
                factors[p] = Some(g.rbf(c, w, dataset.grid.shared())?);
            }
            zp[p] = Some(z);
        }
        let mut zs = vec![None; dataset.stimuli];
        for &s in &touched_s {
            let (m, l) = q.stimuli[s].expect("registered");
            let z = g.reparam_sample(m, l, normals(&mut rng, d))?;
            let lp = embedding_prior_term(&mut g, z)?;
            let lq = g.gaussian_logpdf(z, m, l)?;
            let diff = g.sub(lp, lq)?;
            terms.push(g.scale(diff, a_s[s]));
            zs[s] = Some(z);
        }
        for (&n, &y) in batch.iter().zip(&ys) {
            let t = &dataset.trials[n];
            let (m, l) = q.weights[n].expect("registered");
            let w = g.reparam_sample(m, l, normals(&mut rng, t.time_points() * k))?;
            let (p, s) = (zp[t.participant].expect("touched"), zs[t.stimulus].expect("touched"));
            let lp = weight_prior_term(&mut g, &pv, p, s, w)?;
            let lq = g.gaussian_logpdf(w, m, l)?;
            terms.push(g.sub(lp, lq)?);
            if opts.include_likelihood {
                let f = factors[t.participant].expect("touched");
                terms.push(likelihood_term(&mut g, y, w, f, pv.log_sigma_y)?);
            }
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
    Ok(BoundGraph {
        graph: g,
        bound,
        params: pv,
        q,
    })
}

/// Importance-weighted bound over `batch` with `particles` joint samples.
///
/// Embedding and geometry terms of a participant or stimulus are scaled by
/// the fraction of its trials that lie in the batch, so bounds over a
/// partition of the trials add up to the full-data bound in expectation.
pub fn elbo_iwae(
    params: &GenerativeParams,
    state: &VariationalState,
    dataset: &StudyDataset,
    batch: &[usize],
    particles: usize,
    seed: u64,
) -> Result<f64> {
    elbo_iwae_with(params, state, dataset, batch, particles, seed, BoundOptions::default())
}

pub fn elbo_iwae_with(
    params: &GenerativeParams,
    state: &VariationalState,
    dataset: &StudyDataset,
    batch: &[usize],
    particles: usize,
    seed: u64,
    opts: BoundOptions,
) -> Result<f64> {
    let b = build_bound(params, state, dataset, batch, particles, seed, opts)?;
    Ok(b.graph.scalar_value(b.bound))
}

/// Bound value with its gradient for every generative tensor
/// ([`GenerativeParams::tensors`] order) and variational tensor
/// ([`VariationalState::tensors`] order). `None` marks tensors the batch
/// does not touch.
#[derive(Debug, Clone)]
pub struct BoundGradients {
    pub value: f64,
    pub theta: Vec<Option<Tensor>>,
    pub lambda: Vec<Option<Tensor>>,
}

/// Gradients of the bound; a non-finite value is returned without them.
pub fn elbo_iwae_grad(
    params: &GenerativeParams,
    state: &VariationalState,
    dataset: &StudyDataset,
    batch: &[usize],
    particles: usize,
    seed: u64,
) -> Result<BoundGradients> {
    let b = build_bound(params, state, dataset, batch, particles, seed, BoundOptions::default())?;
    let value = b.graph.scalar_value(b.bound);
    if !value.is_finite() {
        return Ok(BoundGradients {
            value,
            theta: vec![],
            lambda: vec![],
        });
    }
    let grads = b.graph.backward(b.bound)?;
    Ok(BoundGradients {
        value,
        theta: b.params.all().into_iter().map(|v| grads.try_get(v).cloned()).collect(),
        lambda: b.q.gradients(&grads),
    })
}
