use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for one parameter group.
///
/// Each tensor keeps its own step counter and is only advanced on steps where
/// it received a gradient, so per-trial latents outside a minibatch stay put.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: Vec<u64>,
}

impl Adam {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let shapes: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        Adam {
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            second: shapes.clone(),
            steps: vec![0; shapes.len()],
            first: shapes,
        }
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    /// Descends along `grads`; `None` entries are skipped entirely.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Option<Tensor>], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::dim(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            ));
        }
        for (i, (param, grad)) in params.into_iter().zip(grads).enumerate() {
            let Some(grad) = grad else { continue };
            if grad.len() != param.len() {
                return Err(Error::dim(
                    "adam_step",
                    format!("param {:?} vs grad {:?}", param.shape(), grad.shape()),
                ));
            }
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let bc1 = 1.0 - self.beta1.powi(t);
            let bc2 = 1.0 - self.beta2.powi(t);
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((p, &g), mi), vi) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
