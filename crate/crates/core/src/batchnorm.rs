//! Batch normalization over the feature axis, and the BN-CAReLU composition
//! `relu(bn(cas(z)))`.
//!
//! Normalization uses the biased batch variance; the running variance is
//! updated with the unbiased one.

use serde::{Deserialize, Serialize};

use crate::activations::{cas_backward, cas_forward, relu_backward, CasCache, CasParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_BN_EPS: f64 = 1e-5;

/// Forward-pass regime shared by batch norm and the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnState {
    pub gamma: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub mode: Mode,
    /// Normalized input before `gamma`/`shift`.
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BnGrads {
    pub grad_x: Tensor,
    pub grad_gamma: Vec<f64>,
    pub grad_shift: Vec<f64>,
}

impl BnState {
    /// `gamma = 1`, `shift = 0`, running mean 0 and variance 1, train mode.
    pub fn new(dim: usize) -> Self {
        BnState {
            gamma: vec![1.0; dim],
            shift: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_BN_EPS,
            mode: Mode::Train,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (n, d) = x.dims2()?;
        if d != self.dim() {
            return Err(Error::Shape(format!(
                "batch norm over {} features got input with {d}",
                self.dim()
            )));
        }
        Ok((n, d))
    }

    /// Runs in `self.mode`; train mode updates the running statistics.
    pub fn forward(&mut self, x: &Tensor) -> Result<(Tensor, BnCache)> {
        match self.mode {
            Mode::Eval => self.forward_eval(x),
            Mode::Train => self.forward_train(x),
        }
    }

    /// Normalizes with batch statistics and folds them into the running ones.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BnCache)> {
        let (n, d) = self.check_input(x)?;
        if n < 2 {
            return Err(Error::BatchTooSmall(n));
        }
        let (mean, var) = batch_moments(x);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let unbias = n as f64 / (n as f64 - 1.0);
        for j in 0..d {
            self.running_mean[j] =
                (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
            self.running_var[j] =
                (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j] * unbias;
        }
        self.normalize(x, &mean, inv_std, Mode::Train)
    }

    /// Normalizes with running statistics; never mutates.
    pub fn forward_eval(&self, x: &Tensor) -> Result<(Tensor, BnCache)> {
        self.check_input(x)?;
        let inv_std = self
            .running_var
            .iter()
            .map(|v| 1.0 / (v + self.eps).sqrt())
            .collect();
        self.normalize(x, &self.running_mean, inv_std, Mode::Eval)
    }

    fn normalize(
        &self,
        x: &Tensor,
        mean: &[f64],
        inv_std: Vec<f64>,
        mode: Mode,
    ) -> Result<(Tensor, BnCache)> {
        let (n, d) = x.dims2()?;
        let mut xhat = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n * d);
        for i in 0..n {
            for (j, &v) in x.row(i).iter().enumerate() {
                let h = (v - mean[j]) * inv_std[j];
                xhat.push(h);
                y.push(self.gamma[j] * h + self.shift[j]);
            }
        }
        let y = Tensor::checked(vec![n, d], y, "batch norm forward")?;
        Ok((
            y,
            BnCache {
                mode,
                xhat: Tensor::checked(vec![n, d], xhat, "batch norm forward")?,
                inv_std,
            },
        ))
    }

    /// Gradient through the batch statistics. Requires a train-mode cache.
    pub fn backward(&self, cache: &BnCache, grad_out: &Tensor) -> Result<BnGrads> {
        if cache.mode != Mode::Train {
            return Err(Error::InvalidMode(
                "batch norm backward needs a train-mode cache".into(),
            ));
        }
        let (n, d) = cache.xhat.dims2()?;
        if grad_out.shape() != cache.xhat.shape() {
            return Err(Error::Shape(format!(
                "batch norm backward: grad {:?} vs cache {:?}",
                grad_out.shape(),
                cache.xhat.shape()
            )));
        }
        let mut grad_gamma = vec![0.0; d];
        let mut grad_shift = vec![0.0; d];
        for i in 0..n {
            for (j, (&g, &h)) in grad_out.row(i).iter().zip(cache.xhat.row(i)).enumerate() {
                grad_shift[j] += g;
                grad_gamma[j] += g * h;
            }
        }
        // dxhat = g·gamma; dx = inv_std/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
        let nf = n as f64;
        let mut grad_x = vec![0.0; n * d];
        for j in 0..d {
            let sum_dxhat = self.gamma[j] * grad_shift[j];
            let sum_dxhat_xhat = self.gamma[j] * grad_gamma[j];
            for i in 0..n {
                let dxhat = grad_out.data()[i * d + j] * self.gamma[j];
                let h = cache.xhat.data()[i * d + j];
                grad_x[i * d + j] =
                    cache.inv_std[j] / nf * (nf * dxhat - sum_dxhat - h * sum_dxhat_xhat);
            }
        }
        Ok(BnGrads {
            grad_x: Tensor::checked(vec![n, d], grad_x, "batch norm backward")?,
            grad_gamma,
            grad_shift,
        })
    }
}

/// Per-feature batch mean and biased variance.
fn batch_moments(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, &v), &m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= nf);
    (mean, var)
}

#[derive(Debug, Clone)]
pub struct BnCareluCache {
    pub cas: CasCache,
    pub bn: BnCache,
    pub bn_out: Tensor,
}

#[derive(Debug, Clone)]
pub struct BnCareluGrads {
    pub grad_z: Tensor,
    pub grad_alpha: f64,
    pub grad_beta: f64,
    pub grad_gamma: Vec<f64>,
    pub grad_shift: Vec<f64>,
}

/// `relu(bn(cas(z)))`: the competition is measured before normalization.
pub fn bn_carelu_forward(
    cas: &CasParams,
    bn: &mut BnState,
    z: &Tensor,
) -> Result<(Tensor, BnCareluCache)> {
    let (scaled, cas_cache) = cas_forward(cas, z)?;
    let (bn_out, bn_cache) = bn.forward(&scaled)?;
    let y = bn_out.relu()?;
    Ok((
        y,
        BnCareluCache {
            cas: cas_cache,
            bn: bn_cache,
            bn_out,
        },
    ))
}

pub fn bn_carelu_backward(
    cas: &CasParams,
    bn: &BnState,
    cache: &BnCareluCache,
    grad_out: &Tensor,
) -> Result<BnCareluGrads> {
    let g = relu_backward(&cache.bn_out, grad_out)?;
    let bn_grads = bn.backward(&cache.bn, &g)?;
    let cas_grads = cas_backward(cas, &cache.cas, &bn_grads.grad_x)?;
    Ok(BnCareluGrads {
        grad_z: cas_grads.grad_z,
        grad_alpha: cas_grads.grad_alpha,
        grad_beta: cas_grads.grad_beta,
        grad_gamma: bn_grads.grad_gamma,
        grad_shift: bn_grads.grad_shift,
    })
}
