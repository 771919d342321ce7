//! Central-difference checks of reverse-mode gradients.

use std::sync::Arc;

use ntfa::data::{BlockType, StudyDataset, Trial, VoxelGrid};
use ntfa::diffcore::{Graph, Tensor, Var};
use ntfa::inference::{elbo_iwae, elbo_iwae_grad, GaussianParams, VariationalState};
use ntfa::model::{GenerativeConfig, GenerativeParams};
use ntfa::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor, so gradients that vanish compare absolutely.
pub const FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

type Build = dyn Fn(&mut Graph, &[Var]) -> Result<Var>;

/// Largest relative error over every input element of `sum(build(inputs) ⊙ R)`
/// for a random fixed `R`. `constant` inputs enter as constants and are not
/// checked.
pub fn check(rng: &mut ChaCha8Rng, inputs: &[Tensor], constant: &[bool], build: &Build) -> f64 {
    let probe = {
        let mut g = Graph::new();
        let vars = register(&mut g, inputs, constant);
        let out = build(&mut g, &vars).unwrap();
        g.value(out).shape().to_vec()
    };
    let weights = Arc::new(uniform(rng, &probe, -1.0, 1.0));
    let eval = |vals: &[Tensor]| -> (Graph, Vec<Var>, Var) {
        let mut g = Graph::new();
        let vars = register(&mut g, vals, constant);
        let out = build(&mut g, &vars).unwrap();
        let r = g.constant(weights.clone());
        let prod = g.mul(out, r).unwrap();
        let root = g.sum(prod);
        (g, vars, root)
    };
    let (g, vars, root) = eval(inputs);
    let grads = g.backward(root).unwrap();
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        if constant[i] {
            continue;
        }
        let analytic = grads.get(&g, vars[i]);
        for j in 0..t.len() {
            let shifted = |delta: f64| {
                let mut vals = inputs.to_vec();
                vals[i].data_mut()[j] += delta;
                let (g, _, root) = eval(&vals);
                g.scalar_value(root)
            };
            let numeric = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
    }
    worst
}

fn register(g: &mut Graph, vals: &[Tensor], constant: &[bool]) -> Vec<Var> {
    vals.iter()
        .zip(constant)
        .map(|(t, &c)| if c { g.constant(Arc::new(t.clone())) } else { g.leaf(t.clone()) })
        .collect()
}

fn dims(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..5)
}

/// Values kept away from zero so kinks sit outside the difference stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.05..2.0);
            if rng.random::<bool>() { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub const PRIMITIVES: [&str; 20] = [
    "matmul",
    "add",
    "sub",
    "mul",
    "add_row",
    "scale",
    "offset",
    "exp",
    "sum",
    "sum_scalars",
    "prelu",
    "gather",
    "concat",
    "gaussian_logpdf_elementwise",
    "gaussian_logpdf_columns",
    "gaussian_logpdf_scalar",
    "linear_gaussian_logpdf",
    "reparam_sample",
    "rbf",
    "log_sum_exp",
];

/// Worst relative error of one random instance of primitive `name`.
pub fn primitive_instance(name: &str, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let (m, k, n) = (dims(r), dims(r), dims(r));
    let inputs;
    let constant;
    let build: Box<Build> = match name {
        "matmul" => {
            inputs = vec![uniform(r, &[m, k], -1.0, 1.0), uniform(r, &[k, n], -1.0, 1.0)];
            Box::new(|g, v| g.matmul(v[0], v[1]))
        }
        "add" | "sub" | "mul" => {
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0), uniform(r, &[m, n], -2.0, 2.0)];
            match name {
                "add" => Box::new(|g, v| g.add(v[0], v[1])),
                "sub" => Box::new(|g, v| g.sub(v[0], v[1])),
                _ => Box::new(|g, v| g.mul(v[0], v[1])),
            }
        }
        "add_row" => {
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0), uniform(r, &[n], -2.0, 2.0)];
            Box::new(|g, v| g.add_row(v[0], v[1]))
        }
        "scale" => {
            let f: f64 = r.random_range(-3.0..3.0);
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0)];
            Box::new(move |g, v| Ok(g.scale(v[0], f)))
        }
        "offset" => {
            let s: f64 = r.random_range(-3.0..3.0);
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0)];
            Box::new(move |g, v| Ok(g.offset(v[0], s)))
        }
        "exp" => {
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0)];
            Box::new(|g, v| Ok(g.exp(v[0])))
        }
        "sum" => {
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0)];
            Box::new(|g, v| Ok(g.sum(v[0])))
        }
        "sum_scalars" => {
            inputs = (0..m + 1).map(|_| uniform(r, &[], -2.0, 2.0)).collect();
            Box::new(|g, v| g.sum_scalars(v))
        }
        "prelu" => {
            inputs = vec![away_from_zero(r, &[m, n]), uniform(r, &[], 0.0, 1.0)];
            Box::new(|g, v| g.prelu(v[0], v[1]))
        }
        "gather" => {
            let src = m * n;
            let idx: Vec<usize> = (0..k * 2).map(|_| r.random_range(0..src)).collect();
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0)];
            Box::new(move |g, v| g.gather(v[0], idx.clone(), &[k, 2]))
        }
        "concat" => {
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0), uniform(r, &[k], -2.0, 2.0), uniform(r, &[], -2.0, 2.0)];
            Box::new(|g, v| g.concat(v))
        }
        "gaussian_logpdf_elementwise" => {
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0), uniform(r, &[m, n], -2.0, 2.0), uniform(r, &[m, n], -2.0, 1.0)];
            Box::new(|g, v| g.gaussian_logpdf(v[0], v[1], v[2]))
        }
        "gaussian_logpdf_columns" => {
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0), uniform(r, &[n], -2.0, 2.0), uniform(r, &[n], -2.0, 1.0)];
            Box::new(|g, v| g.gaussian_logpdf(v[0], v[1], v[2]))
        }
        "gaussian_logpdf_scalar" => {
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0), uniform(r, &[], -2.0, 2.0), uniform(r, &[], -2.0, 1.0)];
            Box::new(|g, v| g.gaussian_logpdf(v[0], v[1], v[2]))
        }
        "linear_gaussian_logpdf" => {
            let v = dims(r) + 1;
            inputs = vec![
                uniform(r, &[m, v], -2.0, 2.0),
                uniform(r, &[m, k], -1.0, 1.0),
                uniform(r, &[k, v], -1.0, 1.0),
                uniform(r, &[], -1.0, 1.0),
            ];
            constant = vec![r.random::<bool>(), false, false, false];
            let worst = check(r, &inputs, &constant, &|g, v| g.linear_gaussian_logpdf(v[0], v[1], v[2], v[3]));
            return worst;
        }
        "reparam_sample" => {
            let eps: Vec<f64> = (0..m * n).map(|_| r.random_range(-2.0..2.0)).collect();
            inputs = vec![uniform(r, &[m, n], -2.0, 2.0), uniform(r, &[m, n], -2.0, 1.0)];
            Box::new(move |g, v| g.reparam_sample(v[0], v[1], eps.clone()))
        }
        "rbf" => {
            let grid = Arc::new(uniform(r, &[n + 2, 3], -3.0, 3.0));
            inputs = vec![uniform(r, &[k, 3], -3.0, 3.0), uniform(r, &[k], 0.0, 2.5)];
            Box::new(move |g, v| g.rbf(v[0], v[1], grid.clone()))
        }
        "log_sum_exp" => {
            inputs = vec![uniform(r, &[m * n + 1], -5.0, 5.0)];
            Box::new(|g, v| Ok(g.log_sum_exp(v[0])))
        }
        other => panic!("unknown primitive {other}"),
    };
    constant = vec![false; inputs.len()];
    check(r, &inputs, &constant, build.as_ref())
}

/// Two participants, two stimuli, four trials on a six-voxel grid with
/// random networks and a perturbed variational state.
pub fn elbo_problem(seed: u64) -> (GenerativeParams, VariationalState, StudyDataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = VoxelGrid::new(uniform(&mut rng, &[6, 3], -2.0, 2.0)).unwrap();
    let trials = (0..4)
        .map(|n| Trial::new(n / 2, n % 2, n / 2, BlockType::Task, uniform(&mut rng, &[3, 6], -1.0, 1.0)))
        .collect();
    let ds = StudyDataset::new(2, 2, grid, trials).unwrap();
    let cfg = GenerativeConfig::new(2, 2, 6).unwrap();
    let mut params = GenerativeParams::init(cfg, &mut rng);
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let centers = uniform(&mut rng, &[2, 3], -1.0, 1.0);
    let mut state = VariationalState::init(&ds, 2, 2, &centers, &[0.5, 1.0], &mut rng).unwrap();
    for g in state.weights.iter_mut() {
        *g = GaussianParams::new(uniform(&mut rng, g.mean.shape(), -1.0, 1.0), uniform(&mut rng, g.mean.shape(), -2.0, 0.0)).unwrap();
    }
    for t in state.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    (params, state, ds)
}

/// Worst relative error over 20 random scalars of the generative and
/// variational parameters for one problem.
pub fn elbo_instance(seed: u64) -> f64 {
    let (params, state, ds) = elbo_problem(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE1B0);
    let batch = [0, 1, 2, 3];
    let particles = 3;
    let bound_seed = seed;
    let grads = elbo_iwae_grad(&params, &state, &ds, &batch, particles, bound_seed).unwrap();
    let theta_sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let lambda_sizes: Vec<usize> = state.tensors().iter().map(|t| t.len()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let in_theta = rng.random::<bool>();
        let sizes = if in_theta { &theta_sizes } else { &lambda_sizes };
        let i = rng.random_range(0..sizes.len());
        let j = rng.random_range(0..sizes[i]);
        let analytic = if in_theta { &grads.theta[i] } else { &grads.lambda[i] }
            .as_ref()
            .map_or(0.0, |t| t.data()[j]);
        let shifted = |delta: f64| {
            let (mut p, mut q) = (params.clone(), state.clone());
            if in_theta {
                p.tensors_mut()[i].data_mut()[j] += delta;
            } else {
                q.tensors_mut()[i].data_mut()[j] += delta;
            }
            elbo_iwae(&p, &q, &ds, &batch, particles, bound_seed).unwrap()
        };
        let numeric = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}
