use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            c: 1.0,
            epochs: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }
}

pub fn linear_svm_train(x: &[Vec<f64>], y: &[f64], c: f64) -> Result<LinearSvm> {
    linear_svm_train_with(x, y, &SvmOptions { c, ..SvmOptions::default() })
}

/// Primal hinge-loss SVM by stochastic subgradient steps of size `1/(λt)`
/// with `λ = 1/(C·n)`. The bias is the weight of an appended constant
/// feature, so it is regularized with the rest.
pub fn linear_svm_train_with(x: &[Vec<f64>], y: &[f64], opts: &SvmOptions) -> Result<LinearSvm> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::dim("svm", format!("{n} rows, {} labels", y.len())));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::contract("SVM labels must be +1 or -1"));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::contract("SVM needs both classes"));
    }
    if !(opts.c > 0.0) {
        return Err(Error::contract("SVM needs C > 0"));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::dim("svm", "rows have different lengths"));
    }
    let lambda = 1.0 / (opts.c * n as f64);
    // w = scale · v keeps the shrink step O(1).
    let mut v = vec![0.0; d + 1];
    let mut scale = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0u64;
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let xi = &x[i];
            let margin = y[i] * scale * (v[..d].iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + v[d]);
            let shrink = 1.0 - eta * lambda;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|a| *a = 0.0);
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let step = eta * y[i] / scale;
                for (a, b) in v[..d].iter_mut().zip(xi) {
                    *a += step * b;
                }
                v[d] += step;
            }
            if scale < 1e-100 {
                v.iter_mut().for_each(|a| *a *= scale);
                scale = 1.0;
            }
        }
    }
    Ok(LinearSvm {
        w: v[..d].iter().map(|a| a * scale).collect(),
        b: v[d] * scale,
    })
}
