//! SGD and Adam over flat parameter vectors.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd {
        learning_rate: f64,
    },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        step: u64,
    },
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        Optimizer::Sgd { learning_rate }
    }

    pub fn adam(learning_rate: f64, dim: usize) -> Self {
        Optimizer::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
        }
    }

    pub fn new(kind: OptKind, learning_rate: f64, dim: usize) -> Self {
        match kind {
            OptKind::Sgd => Self::sgd(learning_rate),
            OptKind::Adam => Self::adam(learning_rate, dim),
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::Contract("parameter/gradient shape mismatch".into()));
        }
        match self {
            Optimizer::Sgd { learning_rate } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *learning_rate * g;
                }
            }
            Optimizer::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
                m,
                v,
                step,
            } => {
                if m.len() != params.len() {
                    return Err(Error::Contract("adam buffer shape mismatch".into()));
                }
                *step += 1;
                let bc1 = 1.0 - beta1.powi(*step as i32);
                let bc2 = 1.0 - beta2.powi(*step as i32);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    params[i] -= *learning_rate * m_hat / (v_hat.sqrt() + *epsilon);
                }
            }
        }
        Ok(())
    }
}
