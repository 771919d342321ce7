//! One voxel, one factor, one time point, one-dimensional embeddings.
//!
//! The factor network is constant with a very wide kernel, so the factor
//! loading is 1 up to ~1e-12 and geometry drops out of the marginal. The
//! weight network reads only the participant embedding, so the stimulus
//! embedding integrates out too, leaving
//! `p(Y) = ∫ N(z; 0, 1) N(Y; μ(z), sqrt(σ(z)² + σ_Y²)) dz`.

use ntfa::data::{BlockType, StudyDataset, Trial, VoxelGrid};
use ntfa::diffcore::Tensor;
use ntfa::inference::{GaussianParams, VariationalState};
use ntfa::model::{GenerativeConfig, GenerativeParams, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const LOG_SIGMA_Y: f64 = -0.5;
const WIDE_LOG_WIDTH: f64 = 30.0;

pub struct Toy {
    pub params: GenerativeParams,
    /// Observed value of each trial; all trials share participant 0 and
    /// stimulus 0.
    pub values: Vec<f64>,
}

impl Toy {
    pub fn new(seed: u64, trials: usize) -> Toy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = GenerativeConfig::new(1, 1, 1).unwrap();
        let mut params = GenerativeParams::init(cfg, &mut rng);
        let mut factor_net = Mlp::zeros(&cfg.factor_net_widths());
        factor_net
            .output_bias_mut()
            .data_mut()
            .copy_from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, WIDE_LOG_WIDTH, -1.0]);
        params.factor_net = factor_net;
        // the stimulus half of the input is ignored
        let first = &mut params.weight_net.layers[0].weight;
        let width = first.cols();
        first.data_mut()[width..].iter_mut().for_each(|w| *w = 0.0);
        params.weight_net.output_bias_mut().data_mut()[0] = rng.random_range(-1.0..1.0);
        params.weight_net.output_bias_mut().data_mut()[1] = rng.random_range(-1.0..0.0);
        params.log_sigma_y = Tensor::scalar(LOG_SIGMA_Y);

        let z: f64 = StandardNormal.sample(&mut rng);
        let (mu, sd) = weight_prior(&params, z);
        let values = (0..trials)
            .map(|_| {
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                mu + sd * e1 + LOG_SIGMA_Y.exp() * e2
            })
            .collect();
        Toy { params, values }
    }

    pub fn dataset(&self) -> StudyDataset {
        let grid = VoxelGrid::from_points(&[[0.0; 3]]).unwrap();
        let trials = self
            .values
            .iter()
            .map(|&y| Trial::new(0, 0, 0, BlockType::Task, Tensor::matrix(1, 1, vec![y]).unwrap()))
            .collect();
        StudyDataset::new(1, 1, grid, trials).unwrap()
    }

    /// Weight-prior mean and standard deviation at embedding `z`.
    pub fn weight_prior(&self, z: f64) -> (f64, f64) {
        weight_prior(&self.params, z)
    }

    /// `log ∫ w(z) Π_n N(values[n]; μ(z), sqrt(σ(z)² + σ_Y²)) dz` for the
    /// selected trials, `w` a normal density.
    pub fn log_integral(&self, trials: &[usize], w_mean: f64, w_sd: f64) -> f64 {
        let sy2 = (2.0 * LOG_SIGMA_Y).exp();
        log_simpson(w_mean - 12.0 * w_sd, w_mean + 12.0 * w_sd, 20_000, |z| {
            let (mu, sd) = self.weight_prior(z);
            let var = sd * sd + sy2;
            let mut lp = log_normal(z, w_mean, w_sd);
            for &n in trials {
                lp += log_normal(self.values[n], mu, var.sqrt());
            }
            lp
        })
    }

    /// `log p(Y)` of the selected trials.
    pub fn log_marginal(&self, trials: &[usize]) -> f64 {
        self.log_integral(trials, 0.0, 1.0)
    }

    /// Posterior mean and standard deviation of the embedding given the
    /// selected trials.
    pub fn posterior_moments(&self, trials: &[usize]) -> (f64, f64) {
        let log_z = self.log_marginal(trials);
        let sy2 = (2.0 * LOG_SIGMA_Y).exp();
        let density = |z: f64| {
            let (mu, sd) = self.weight_prior(z);
            let var = sd * sd + sy2;
            let lp = log_normal(z, 0.0, 1.0) + trials.iter().map(|&n| log_normal(self.values[n], mu, var.sqrt())).sum::<f64>();
            (lp - log_z).exp()
        };
        let m1 = simpson(-12.0, 12.0, 20_000, |z| z * density(z));
        let m2 = simpson(-12.0, 12.0, 20_000, |z| z * z * density(z));
        (m1, (m2 - m1 * m1).max(1e-12).sqrt())
    }

    /// `log p(Ỹ | Y)` by quadrature over the exact embedding posterior.
    pub fn log_posterior_predictive(&self, observed: &[usize], heldout: &[usize]) -> f64 {
        let all: Vec<usize> = observed.iter().chain(heldout).copied().collect();
        self.log_marginal(&all) - self.log_marginal(observed)
    }

    /// Variational state with the given embedding posterior and random,
    /// deliberately imperfect factors for everything else.
    pub fn state(&self, z_mean: f64, z_log_sigma: f64, rng: &mut ChaCha8Rng) -> VariationalState {
        let jitter = |rng: &mut ChaCha8Rng, s: f64| -> f64 { rng.random_range(-s..s) };
        let g = |m: Vec<f64>, l: Vec<f64>, shape: &[usize]| {
            GaussianParams::new(Tensor::new(shape.to_vec(), m).unwrap(), Tensor::new(shape.to_vec(), l).unwrap()).unwrap()
        };
        let centers = g(
            (0..3).map(|_| jitter(rng, 0.3)).collect(),
            (0..3).map(|_| -1.0 + jitter(rng, 0.5)).collect(),
            &[1, 3],
        );
        let widths = g(vec![WIDE_LOG_WIDTH + jitter(rng, 0.3)], vec![-1.5 + jitter(rng, 0.5)], &[1]);
        let weights = self
            .values
            .iter()
            .map(|&y| g(vec![0.8 * y + jitter(rng, 0.3)], vec![-1.0 + jitter(rng, 0.5)], &[1, 1]))
            .collect();
        VariationalState {
            factors: 1,
            embedding_dim: 1,
            participants: vec![g(vec![z_mean], vec![z_log_sigma], &[1])],
            stimuli: vec![g(vec![jitter(rng, 0.5)], vec![-0.5 + jitter(rng, 0.3)], &[1])],
            centers: vec![centers],
            log_widths: vec![widths],
            weights,
        }
    }
}

fn prelu(x: f64, a: f64) -> f64 {
    if x >= 0.0 { x } else { a * x }
}

/// Forward pass written out by hand: `h ← prelu(h·W + b)` on hidden layers.
fn weight_prior(params: &GenerativeParams, z: f64) -> (f64, f64) {
    let net = &params.weight_net;
    let mut h = vec![z, 0.0];
    for (i, layer) in net.layers.iter().enumerate() {
        let (rows, cols) = (layer.weight.rows(), layer.weight.cols());
        let mut next = layer.bias.data().to_vec();
        for r in 0..rows {
            for c in 0..cols {
                next[c] += h[r] * layer.weight.at(r, c);
            }
        }
        if let Some(s) = net.slopes.get(i) {
            next.iter_mut().for_each(|x| *x = prelu(*x, s.item()));
        }
        h = next;
    }
    (h[0], h[1].clamp(-8.0, 8.0).exp())
}

pub fn log_normal(x: f64, m: f64, sd: f64) -> f64 {
    let r = (x - m) / sd;
    -0.5 * r * r - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

pub fn simpson(a: f64, b: f64, intervals: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `log ∫ exp(g(z)) dz`, shifted by the largest node value.
pub fn log_simpson(a: f64, b: f64, intervals: usize, g: impl Fn(f64) -> f64) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let peak = (0..=n).map(|i| g(a + i as f64 * h)).fold(f64::NEG_INFINITY, f64::max);
    simpson(a, b, n, |z| (g(z) - peak).exp()).ln() + peak
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub struct MarginalCheck {
    pub log_marginal: f64,
    pub mean: f64,
    pub se: f64,
    /// Single-seed estimates above the log marginal.
    pub exceed: usize,
}

/// Bounds of one toy over `seeds` noise seeds, against its log marginal.
pub fn bound_vs_marginal(instance: u64, particles: usize, seeds: u64) -> MarginalCheck {
    let toy = Toy::new(instance, 1);
    let ds = toy.dataset();
    let mut rng = ChaCha8Rng::seed_from_u64(instance ^ 0x5EED);
    let (pm, ps) = toy.posterior_moments(&[0]);
    let state = toy.state(pm + rng.random_range(-0.3..0.3), ps.ln() + rng.random_range(-0.3..0.3), &mut rng);
    let log_marginal = toy.log_marginal(&[0]);
    let bounds: Vec<f64> = (0..seeds)
        .map(|s| ntfa::inference::elbo_iwae(&toy.params, &state, &ds, &[0], particles, s).unwrap())
        .collect();
    let (mean, se) = mean_se(&bounds);
    MarginalCheck {
        log_marginal,
        mean,
        se,
        exceed: bounds.iter().filter(|&&b| b > log_marginal).count(),
    }
}

/// Held-out predictive bound at `particles` for toy `seed` (also the noise
/// seed) and the quadrature `log p(Ỹ|Y)`. The embedding posterior is the
/// moment-matched exact posterior of the observed trial.
pub fn predictive_vs_quadrature(seed: u64, particles: usize) -> (f64, f64) {
    let toy = Toy::new(seed, 2);
    let ds = toy.dataset();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF00D);
    let (pm, ps) = toy.posterior_moments(&[0]);
    let state = toy.state(pm, ps.ln(), &mut rng);
    let bound = ntfa::evaluation::log_predictive_bound(&toy.params, &state, &ds, &[1], particles, seed).unwrap();
    (bound.total, toy.log_posterior_predictive(&[0], &[1]))
}
