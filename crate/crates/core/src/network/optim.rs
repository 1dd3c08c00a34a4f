//! SGD with momentum and Adam over the network's parameter registry.
//!
//! Weight decay is added to the gradient (coupled L2) and applies only to
//! parameters flagged `decay` in [`super::ParamInfo`]: dense weights and
//! biases. CAS, batch-norm and PReLU/Swish parameters are never decayed.

use serde::{Deserialize, Serialize};

use super::{Gradients, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
        #[serde(default)]
        weight_decay: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr, .. } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidArgument(format!("optimizer {what} out of range: {v}")))
        };
        let lr = self.lr();
        if !(lr.is_finite() && lr >= 0.0) {
            return bad("lr", lr);
        }
        match *self {
            OptimizerKind::Sgd { momentum, weight_decay, .. } => {
                if !(0.0..1.0).contains(&momentum) {
                    return bad("momentum", momentum);
                }
                if !(weight_decay.is_finite() && weight_decay >= 0.0) {
                    return bad("weight_decay", weight_decay);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps, weight_decay, .. } => {
                if !(0.0..1.0).contains(&beta1) {
                    return bad("beta1", beta1);
                }
                if !(0.0..1.0).contains(&beta2) {
                    return bad("beta2", beta2);
                }
                if !(eps.is_finite() && eps > 0.0) {
                    return bad("eps", eps);
                }
                if !(weight_decay.is_finite() && weight_decay >= 0.0) {
                    return bad("weight_decay", weight_decay);
                }
            }
        }
        Ok(())
    }
}

/// Learning-rate step: from `epoch` (0-based) on, the rate is divided by `divisor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Milestone {
    pub epoch: usize,
    pub divisor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    /// Velocity (SGD) or first moment (Adam), mirroring parameter shapes.
    pub first: Vec<Vec<f64>>,
    /// Second moment (Adam only).
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, net: &Network) -> Result<Self> {
        kind.validate()?;
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        let second = match kind {
            OptimizerKind::Adam { .. } => zeros.clone(),
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Ok(OptimizerState {
            kind,
            first: zeros,
            second,
            step: 0,
        })
    }

    /// Applies one update at learning rate `lr`.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
        let decay: Vec<bool> = net.param_info().iter().map(|p| p.decay).collect();
        let mut params = net.params_mut();
        if grads.0.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer step: {} parameter tensors, {} gradients, {} slots",
                params.len(),
                grads.0.len(),
                self.first.len()
            )));
        }
        self.step += 1;
        for (k, param) in params.iter_mut().enumerate() {
            let g = &grads.0[k];
            if g.len() != param.len() {
                return Err(Error::Shape(format!("gradient {k} has the wrong length")));
            }
            match self.kind {
                OptimizerKind::Sgd { momentum, weight_decay, .. } => {
                    let wd = if decay[k] { weight_decay } else { 0.0 };
                    sgd_update(param, g, &mut self.first[k], lr, momentum, wd);
                }
                OptimizerKind::Adam { beta1, beta2, eps, weight_decay, .. } => {
                    let wd = if decay[k] { weight_decay } else { 0.0 };
                    let (m, v) = (&mut self.first[k], &mut self.second[k]);
                    let t = self.step as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for i in 0..param.len() {
                        let gi = g[i] + wd * param[i];
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            if param.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "parameter tensor {k} became non-finite after an optimizer step"
                )));
            }
        }
        Ok(())
    }
}

/// `v ← μv + g + λp; p ← p − lr·v`.
fn sgd_update(param: &mut [f64], grad: &[f64], velocity: &mut [f64], lr: f64, momentum: f64, wd: f64) {
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + g + wd * *p;
        *p -= lr * *v;
    }
}
