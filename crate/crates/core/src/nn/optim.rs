use serde::{Deserialize, Serialize};

use super::params::Parameterized;
use crate::error::{ReicError, Result};

/// Adaptive-moment optimizer with bias correction and decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW::new(0.9, 0.999, 1e-8, 0.01)
    }
}

impl AdamW {
    pub fn new(beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_weight_decay(weight_decay: f64) -> Self {
        AdamW {
            weight_decay,
            ..AdamW::default()
        }
    }

    /// Applies one update from the model's gradient buffers, then zeroes them.
    pub fn step<P: Parameterized + ?Sized>(&mut self, model: &mut P, lr: f64) -> Result<()> {
        check_step(model, lr)?;
        if self.m.is_empty() {
            model.visit(&mut |p, _| {
                self.m.push(vec![0.0; p.len()]);
                self.v.push(vec![0.0; p.len()]);
            });
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);

        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_mut(&mut |p, g| {
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            assert_eq!(m.len(), p.len(), "optimizer state does not match parameter layout");
            for k in 0..p.len() {
                p[k] *= 1.0 - lr * wd;
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            g.fill(0.0);
            idx += 1;
        });
        Ok(())
    }
}

fn check_step<P: Parameterized + ?Sized>(model: &P, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(ReicError::Config(format!("learning rate must be positive, got {lr}")));
    }
    if !model.grads_finite() {
        return Err(ReicError::NonFinite(format!(
            "optimizer step over {} parameters",
            model.num_params()
        )));
    }
    Ok(())
}

/// Plain gradient descent `p <- p - lr * g`.
pub fn sgd_step<P: Parameterized + ?Sized>(model: &mut P, lr: f64) -> Result<()> {
    check_step(model, lr)?;
    model.visit_mut(&mut |p, g| {
        for (pk, gk) in p.iter_mut().zip(g.iter_mut()) {
            *pk -= lr * *gk;
            *gk = 0.0;
        }
    });
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    AdamW,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = ReicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adamw" => Ok(OptimizerKind::AdamW),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(ReicError::Config(format!("unknown optimizer `{other}` (adamw|sgd)"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

/// Optimizer chosen at configuration time.
#[derive(Clone, Debug)]
pub enum Optimizer {
    AdamW(AdamW),
    Sgd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, weight_decay: f64) -> Self {
        match kind {
            OptimizerKind::AdamW => Optimizer::AdamW(AdamW::with_weight_decay(weight_decay)),
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }

    pub fn step<P: Parameterized + ?Sized>(&mut self, model: &mut P, lr: f64) -> Result<()> {
        match self {
            Optimizer::AdamW(adam) => adam.step(model, lr),
            Optimizer::Sgd => sgd_step(model, lr),
        }
    }
}
