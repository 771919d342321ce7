//! The generative model: embeddings, the two conditioning networks, radial
//! basis factors, the Gaussian likelihood and ancestral sampling.
//!
//! Participant embedding `z_p` is mapped by the factor network to a `K×4×2`
//! tensor holding mean/log-scale pairs for the three center coordinates and
//! the log-width of every factor. The weight network maps the concatenated
//! `(z_p, z_s)` to a `K×2` tensor of mean/log-scale pairs for the factor
//! weights of each time point of a trial.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{BlockType, StudyDataset, Trial, VoxelGrid};
use crate::diffcore::{Graph, Tensor, Var, LOG_SCALE_MAX, LOG_SCALE_MIN};
use crate::error::{Error, Result};

/// Initial slope of every PReLU activation.
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerativeConfig {
    pub factors: usize,
    pub embedding_dim: usize,
    pub voxels: usize,
}

impl GenerativeConfig {
    pub fn new(factors: usize, embedding_dim: usize, voxels: usize) -> Result<Self> {
        if factors == 0 || embedding_dim == 0 || voxels == 0 {
            return Err(Error::contract(format!(
                "K, D and V must be positive (K={factors}, D={embedding_dim}, V={voxels})"
            )));
        }
        Ok(GenerativeConfig {
            factors,
            embedding_dim,
            voxels,
        })
    }

    /// Layer widths of the factor network: D → 2D → 4D → 8K.
    pub fn factor_net_widths(&self) -> [usize; 4] {
        let d = self.embedding_dim;
        [d, 2 * d, 4 * d, 8 * self.factors]
    }

    /// Layer widths of the weight network: 2D → 4D → 8D → 2K.
    pub fn weight_net_widths(&self) -> [usize; 4] {
        let d = self.embedding_dim;
        [2 * d, 4 * d, 8 * d, 2 * self.factors]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `in × out`
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Fully connected network with a PReLU after every hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub slopes: Vec<Tensor>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, PReLU slopes at 0.25.
    pub fn glorot(widths: &[usize], rng: &mut impl Rng) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
                Linear {
                    weight: Tensor::matrix(fan_in, fan_out, data).expect("layer shape"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect::<Vec<_>>();
        let slopes = (0..layers.len().saturating_sub(1))
            .map(|_| Tensor::scalar(PRELU_INIT))
            .collect();
        Mlp { layers, slopes }
    }

    /// Network with every weight zero; outputs equal the final-layer bias.
    pub fn zeros(widths: &[usize]) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| Linear {
                weight: Tensor::zeros(&[w[0], w[1]]),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect::<Vec<_>>();
        let slopes = (0..layers.len().saturating_sub(1))
            .map(|_| Tensor::scalar(PRELU_INIT))
            .collect();
        Mlp { layers, slopes }
    }

    pub fn output_bias_mut(&mut self) -> &mut Tensor {
        &mut self.layers.last_mut().expect("non-empty network").bias
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.extend(self.slopes.iter());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.extend(self.slopes.iter_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn register(&self, g: &mut Graph) -> NetVars {
        NetVars {
            layers: self
                .layers
                .iter()
                .map(|l| (g.leaf(l.weight.clone()), g.leaf(l.bias.clone())))
                .collect(),
            slopes: self.slopes.iter().map(|s| g.leaf(s.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetVars {
    layers: Vec<(Var, Var)>,
    slopes: Vec<Var>,
}

impl NetVars {
    fn all(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for &(w, b) in &self.layers {
            out.push(w);
            out.push(b);
        }
        out.extend(self.slopes.iter().copied());
        out
    }

    pub fn forward(&self, g: &mut Graph, input: Var) -> Result<Var> {
        let mut h = input;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let lin = g.matmul(h, w)?;
            h = g.add_row(lin, b)?;
            if let Some(&slope) = self.slopes.get(i) {
                h = g.prelu(h, slope)?;
            }
        }
        Ok(h)
    }
}

/// Trainable generative parameters: both networks and the noise log-scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeParams {
    pub config: GenerativeConfig,
    pub factor_net: Mlp,
    pub weight_net: Mlp,
    pub log_sigma_y: Tensor,
}

impl GenerativeParams {
    pub fn init(config: GenerativeConfig, rng: &mut impl Rng) -> Self {
        GenerativeParams {
            config,
            factor_net: Mlp::glorot(&config.factor_net_widths(), rng),
            weight_net: Mlp::glorot(&config.weight_net_widths(), rng),
            log_sigma_y: Tensor::scalar(0.0),
        }
    }

    pub fn zeros(config: GenerativeConfig) -> Self {
        GenerativeParams {
            config,
            factor_net: Mlp::zeros(&config.factor_net_widths()),
            weight_net: Mlp::zeros(&config.weight_net_widths()),
            log_sigma_y: Tensor::scalar(0.0),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.factor_net.tensors();
        out.extend(self.weight_net.tensors());
        out.push(&self.log_sigma_y);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.factor_net.tensors_mut();
        out.extend(self.weight_net.tensors_mut());
        out.push(&mut self.log_sigma_y);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Closed-form count from the layer widths.
    pub fn expected_count(config: &GenerativeConfig) -> usize {
        let (d, k) = (config.embedding_dim, config.factors);
        let factor = 2 * d * (d + 1) + 4 * d * (2 * d + 1) + 8 * k * (4 * d + 1) + 2;
        let weight = 4 * d * (2 * d + 1) + 8 * d * (4 * d + 1) + 2 * k * (8 * d + 1) + 2;
        factor + weight + 1
    }

    /// Seeds the factor network's output bias so the prior means sit at
    /// `centers` / `log_widths` with the given log-scales.
    pub fn seed_factor_bias(
        &mut self,
        centers: &Tensor,
        log_widths: &[f64],
        center_log_scale: f64,
        width_log_scale: f64,
    ) -> Result<()> {
        let k = self.config.factors;
        if centers.len() != 3 * k || log_widths.len() != k {
            return Err(Error::dim(
                "seed_factor_bias",
                format!("centers {:?}, {} widths, K={k}", centers.shape(), log_widths.len()),
            ));
        }
        let bias = self.factor_net.output_bias_mut().data_mut();
        for kk in 0..k {
            for d in 0..3 {
                bias[kk * 8 + d * 2] = centers.data()[kk * 3 + d];
                bias[kk * 8 + d * 2 + 1] = center_log_scale;
            }
            bias[kk * 8 + 6] = log_widths[kk];
            bias[kk * 8 + 7] = width_log_scale;
        }
        Ok(())
    }

    pub fn register(&self, g: &mut Graph) -> ParamVars {
        let factor_net = self.factor_net.register(g);
        let weight_net = self.weight_net.register(g);
        let log_sigma_y = g.leaf(self.log_sigma_y.clone());
        ParamVars {
            config: self.config,
            factor_net,
            weight_net,
            log_sigma_y,
        }
    }
}

/// Graph handles for every tensor of [`GenerativeParams`], in `tensors()` order.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub config: GenerativeConfig,
    pub factor_net: NetVars,
    pub weight_net: NetVars,
    pub log_sigma_y: Var,
}

impl ParamVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = self.factor_net.all();
        out.extend(self.weight_net.all());
        out.push(self.log_sigma_y);
        out
    }
}

/// Factor-geometry prior produced by the factor network.
#[derive(Debug, Clone, Copy)]
pub struct FactorPriorVars {
    pub mu_x: Var,
    pub log_sigma_x: Var,
    pub mu_rho: Var,
    pub log_sigma_rho: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorPrior {
    /// `K × 3`
    pub mu_x: Tensor,
    /// `K × 3`
    pub log_sigma_x: Tensor,
    pub mu_rho: Tensor,
    pub log_sigma_rho: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct WeightPriorVars {
    pub mu: Var,
    pub log_sigma: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightPrior {
    pub mu: Tensor,
    pub log_sigma: Tensor,
}

fn check_len(op: &'static str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::dim(op, format!("expected length {want}, got {got}")));
    }
    Ok(())
}

/// Factor network on the graph; splits the `8K` output viewed as `K×4×2`.
pub fn factor_prior_vars(g: &mut Graph, vars: &ParamVars, z_p: Var) -> Result<FactorPriorVars> {
    let (d, k) = (vars.config.embedding_dim, vars.config.factors);
    check_len("eta_f_forward", g.value(z_p).len(), d)?;
    let out = vars.factor_net.forward(g, z_p)?;
    let center_idx = |j: usize| -> Vec<usize> {
        (0..k)
            .flat_map(|kk| (0..3).map(move |dd| kk * 8 + dd * 2 + j))
            .collect()
    };
    let width_idx = |j: usize| -> Vec<usize> { (0..k).map(|kk| kk * 8 + 6 + j).collect() };
    Ok(FactorPriorVars {
        mu_x: g.gather(out, center_idx(0), &[k, 3])?,
        log_sigma_x: g.gather(out, center_idx(1), &[k, 3])?,
        mu_rho: g.gather(out, width_idx(0), &[k])?,
        log_sigma_rho: g.gather(out, width_idx(1), &[k])?,
    })
}

/// Weight network on the graph; splits the `2K` output viewed as `K×2`.
pub fn weight_prior_vars(g: &mut Graph, vars: &ParamVars, z_p: Var, z_s: Var) -> Result<WeightPriorVars> {
    let (d, k) = (vars.config.embedding_dim, vars.config.factors);
    check_len("eta_w_forward", g.value(z_p).len(), d)?;
    check_len("eta_w_forward", g.value(z_s).len(), d)?;
    let input = g.concat(&[z_p, z_s])?;
    let out = vars.weight_net.forward(g, input)?;
    Ok(WeightPriorVars {
        mu: g.gather(out, (0..k).map(|kk| kk * 2).collect(), &[k])?,
        log_sigma: g.gather(out, (0..k).map(|kk| kk * 2 + 1).collect(), &[k])?,
    })
}

pub fn eta_f_forward(params: &GenerativeParams, z_p: &[f64]) -> Result<FactorPrior> {
    let mut g = Graph::new();
    let vars = params.register(&mut g);
    let z = g.leaf(Tensor::vector(z_p.to_vec()));
    let out = factor_prior_vars(&mut g, &vars, z)?;
    Ok(FactorPrior {
        mu_x: g.value(out.mu_x).clone(),
        log_sigma_x: g.value(out.log_sigma_x).clone(),
        mu_rho: g.value(out.mu_rho).clone(),
        log_sigma_rho: g.value(out.log_sigma_rho).clone(),
    })
}

pub fn eta_w_forward(params: &GenerativeParams, z_p: &[f64], z_s: &[f64]) -> Result<WeightPrior> {
    let mut g = Graph::new();
    let vars = params.register(&mut g);
    let zp = g.leaf(Tensor::vector(z_p.to_vec()));
    let zs = g.leaf(Tensor::vector(z_s.to_vec()));
    let out = weight_prior_vars(&mut g, &vars, zp, zs)?;
    Ok(WeightPrior {
        mu: g.value(out.mu).clone(),
        log_sigma: g.value(out.log_sigma).clone(),
    })
}

/// `F[k, v] = exp(-|x_v - c_k|^2 / exp(rho_k))`, a `K × V` matrix.
pub fn rbf_factor_matrix(centers: &Tensor, log_widths: &Tensor, grid: &VoxelGrid) -> Result<Tensor> {
    let mut g = Graph::new();
    let c = g.leaf(centers.clone());
    let w = g.leaf(log_widths.clone());
    let f = g.rbf(c, w, grid.shared())?;
    Ok(g.value(f).clone())
}

/// Log-density of `y (T×V)` under `N(w·f, exp(log_sigma_y))`.
///
/// Every model and baseline goes through this one function.
pub fn likelihood_term(g: &mut Graph, y: Var, w: Var, f: Var, log_sigma_y: Var) -> Result<Var> {
    g.linear_gaussian_logpdf(y, w, f, log_sigma_y)
}

pub fn log_likelihood(y: &Tensor, w: &Tensor, f: &Tensor, log_sigma_y: f64) -> Result<f64> {
    let mut g = Graph::new();
    let (yv, wv, fv) = (g.constant(std::sync::Arc::new(y.clone())), g.leaf(w.clone()), g.leaf(f.clone()));
    let s = g.scalar(log_sigma_y);
    let lp = likelihood_term(&mut g, yv, wv, fv, s)?;
    Ok(g.scalar_value(lp))
}

/// Standard-normal log-prior of an embedding.
pub fn embedding_prior_term(g: &mut Graph, z: Var) -> Result<Var> {
    let zero = g.scalar(0.0);
    g.gaussian_logpdf(z, zero, zero)
}

/// Log-density of a participant's centers and log-widths under the factor network.
pub fn geometry_prior_term(
    g: &mut Graph,
    vars: &ParamVars,
    z_p: Var,
    centers: Var,
    log_widths: Var,
) -> Result<Var> {
    let prior = factor_prior_vars(g, vars, z_p)?;
    let lx = g.gaussian_logpdf(centers, prior.mu_x, prior.log_sigma_x)?;
    let lr = g.gaussian_logpdf(log_widths, prior.mu_rho, prior.log_sigma_rho)?;
    g.add(lx, lr)
}

/// Log-density of a trial's `T × K` weights under the weight network.
pub fn weight_prior_term(g: &mut Graph, vars: &ParamVars, z_p: Var, z_s: Var, weights: Var) -> Result<Var> {
    let prior = weight_prior_vars(g, vars, z_p, z_s)?;
    if g.value(weights).cols() != vars.config.factors {
        return Err(Error::dim(
            "weight_prior",
            format!("weights {:?}, K={}", g.value(weights).shape(), vars.config.factors),
        ));
    }
    g.gaussian_logpdf(weights, prior.mu, prior.log_sigma)
}

/// Values of every latent variable of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latents {
    pub participant_embeddings: Vec<Vec<f64>>,
    pub stimulus_embeddings: Vec<Vec<f64>>,
    /// Per participant, `K × 3`.
    pub centers: Vec<Tensor>,
    /// Per participant, length `K`.
    pub log_widths: Vec<Tensor>,
    /// Per trial, `T × K`.
    pub weights: Vec<Tensor>,
}

/// Joint log-density `log p(Y, W, x, rho, z_p, z_s)` restricted to `trials`.
///
/// Embedding and geometry terms enter once for each participant or stimulus
/// that appears in the slice.
pub fn log_joint(
    dataset: &StudyDataset,
    trials: &[usize],
    latents: &Latents,
    params: &GenerativeParams,
) -> Result<f64> {
    let parts = joint_parts(dataset, trials, latents, params)?;
    Ok(parts.total())
}

/// The four groups of terms that make up [`log_joint`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointParts {
    pub embedding_prior: f64,
    pub geometry_prior: f64,
    pub weight_prior: f64,
    pub likelihood: f64,
}

impl JointParts {
    pub fn total(&self) -> f64 {
        self.embedding_prior + self.geometry_prior + self.weight_prior + self.likelihood
    }
}

pub fn joint_parts(
    dataset: &StudyDataset,
    trials: &[usize],
    latents: &Latents,
    params: &GenerativeParams,
) -> Result<JointParts> {
    let mut g = Graph::new();
    let vars = params.register(&mut g);
    let mut used_p = vec![false; dataset.participants];
    let mut used_s = vec![false; dataset.stimuli];
    for &n in trials {
        let t = dataset
            .trials
            .get(n)
            .ok_or_else(|| Error::contract(format!("trial {n} not in dataset")))?;
        used_p[t.participant] = true;
        used_s[t.stimulus] = true;
    }
    let missing = |what: &str, i: usize| Error::contract(format!("missing latent: {what} {i}"));

    let mut zp = vec![None; dataset.participants];
    let mut zs = vec![None; dataset.stimuli];
    let mut parts = JointParts {
        embedding_prior: 0.0,
        geometry_prior: 0.0,
        weight_prior: 0.0,
        likelihood: 0.0,
    };
    let mut factors = vec![None; dataset.participants];
    for p in (0..dataset.participants).filter(|&p| used_p[p]) {
        let z = latents
            .participant_embeddings
            .get(p)
            .ok_or_else(|| missing("participant embedding", p))?;
        let zv = g.leaf(Tensor::vector(z.clone()));
        let term = embedding_prior_term(&mut g, zv)?;
        parts.embedding_prior += g.scalar_value(term);
        let c = g.leaf(latents.centers.get(p).ok_or_else(|| missing("centers", p))?.clone());
        let w = g.leaf(latents.log_widths.get(p).ok_or_else(|| missing("log-widths", p))?.clone());
        let term = geometry_prior_term(&mut g, &vars, zv, c, w)?;
        parts.geometry_prior += g.scalar_value(term);
        factors[p] = Some(g.rbf(c, w, dataset.grid.shared())?);
        zp[p] = Some(zv);
    }
    for s in (0..dataset.stimuli).filter(|&s| used_s[s]) {
        let z = latents
            .stimulus_embeddings
            .get(s)
            .ok_or_else(|| missing("stimulus embedding", s))?;
        let zv = g.leaf(Tensor::vector(z.clone()));
        let term = embedding_prior_term(&mut g, zv)?;
        parts.embedding_prior += g.scalar_value(term);
        zs[s] = Some(zv);
    }
    for &n in trials {
        let t = &dataset.trials[n];
        let w = g.leaf(latents.weights.get(n).ok_or_else(|| missing("weights of trial", n))?.clone());
        let (p, s) = (zp[t.participant].expect("used"), zs[t.stimulus].expect("used"));
        let term = weight_prior_term(&mut g, &vars, p, s, w)?;
        parts.weight_prior += g.scalar_value(term);
        let y = g.constant(t.data.clone());
        let f = factors[t.participant].expect("used");
        let term = likelihood_term(&mut g, y, w, f, vars.log_sigma_y)?;
        parts.likelihood += g.scalar_value(term);
    }
    Ok(parts)
}

/// One planned trial for ancestral sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedTrial {
    pub participant: usize,
    pub stimulus: usize,
    pub time_points: usize,
}

fn normal_draws(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn sample_gaussian(mu: &Tensor, log_sigma: &Tensor, rng: &mut impl Rng) -> Tensor {
    let eps = normal_draws(rng, mu.len());
    let data = mu
        .data()
        .iter()
        .zip(log_sigma.data())
        .zip(eps)
        .map(|((&m, &ls), e)| m + ls.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX).exp() * e)
        .collect();
    Tensor::new(mu.shape().to_vec(), data).expect("same shape")
}

/// Draws a full study from the generative model, ancestrally.
///
/// Embeddings for every participant and stimulus are drawn first, then one
/// factor geometry per participant, then weights and observations trial by
/// trial.
pub fn sample_generative(
    params: &GenerativeParams,
    participants: usize,
    stimuli: usize,
    grid: &VoxelGrid,
    plan: &[PlannedTrial],
    seed: u64,
) -> Result<(StudyDataset, Latents)> {
    if plan.is_empty() {
        return Err(Error::contract("trial plan is empty"));
    }
    let cfg = params.config;
    if grid.voxels() != cfg.voxels {
        return Err(Error::dim(
            "sample_generative",
            format!("grid has {} voxels, config V={}", grid.voxels(), cfg.voxels),
        ));
    }
    for (n, t) in plan.iter().enumerate() {
        if t.participant >= participants || t.stimulus >= stimuli || t.time_points == 0 {
            return Err(Error::contract(format!("invalid planned trial {n}: {t:?}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.embedding_dim;
    let zp: Vec<Vec<f64>> = (0..participants).map(|_| normal_draws(&mut rng, d)).collect();
    let zs: Vec<Vec<f64>> = (0..stimuli).map(|_| normal_draws(&mut rng, d)).collect();

    let mut centers = Vec::with_capacity(participants);
    let mut widths = Vec::with_capacity(participants);
    let mut factor_mats = Vec::with_capacity(participants);
    for z in &zp {
        let prior = eta_f_forward(params, z)?;
        let c = sample_gaussian(&prior.mu_x, &prior.log_sigma_x, &mut rng);
        let w = sample_gaussian(&prior.mu_rho, &prior.log_sigma_rho, &mut rng);
        factor_mats.push(rbf_factor_matrix(&c, &w, grid)?);
        centers.push(c);
        widths.push(w);
    }

    let sigma_y = params.log_sigma_y.item().clamp(LOG_SCALE_MIN, LOG_SCALE_MAX).exp();
    let k = cfg.factors;
    let mut trials = Vec::with_capacity(plan.len());
    let mut weights = Vec::with_capacity(plan.len());
    for t in plan {
        let prior = eta_w_forward(params, &zp[t.participant], &zs[t.stimulus])?;
        let mut rows = Vec::with_capacity(t.time_points * k);
        for _ in 0..t.time_points {
            rows.extend(sample_gaussian(&prior.mu, &prior.log_sigma, &mut rng).into_data());
        }
        let w = Tensor::matrix(t.time_points, k, rows)?;
        let mut y = w.matmul(&factor_mats[t.participant])?;
        for v in y.data_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += sigma_y * e;
        }
        trials.push(Trial::new(t.participant, t.stimulus, t.participant, BlockType::Task, y));
        weights.push(w);
    }

    let dataset = StudyDataset::new(participants, stimuli, grid.clone(), trials)?;
    let latents = Latents {
        participant_embeddings: zp,
        stimulus_embeddings: zs,
        centers,
        log_widths: widths,
        weights,
    };
    Ok((dataset, latents))
}
