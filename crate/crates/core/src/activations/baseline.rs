//! Reference activations: ReLU, LeakyReLU, PReLU, Swish-1 and Swish.

use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const PRELU_INIT: f64 = 0.25;
pub const SWISH_BETA_INIT: f64 = 1.0;

/// Parameter-free description of a baseline, as it appears in a network spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    Relu,
    LeakyRelu { slope: f64 },
    Prelu,
    Swish1,
    Swish,
}

/// A baseline activation together with its (possibly trainable) parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineActivation {
    Relu,
    LeakyRelu { slope: f64 },
    /// Negative-side slope, one per layer, trainable.
    Prelu { slope: f64 },
    Swish1,
    /// `z·σ(βz)` with `β` trainable.
    Swish { beta: f64 },
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl BaselineActivation {
    pub fn init(kind: BaselineKind) -> Self {
        match kind {
            BaselineKind::Relu => BaselineActivation::Relu,
            BaselineKind::LeakyRelu { slope } => BaselineActivation::LeakyRelu { slope },
            BaselineKind::Prelu => BaselineActivation::Prelu { slope: PRELU_INIT },
            BaselineKind::Swish1 => BaselineActivation::Swish1,
            BaselineKind::Swish => BaselineActivation::Swish {
                beta: SWISH_BETA_INIT,
            },
        }
    }

    pub fn kind(&self) -> BaselineKind {
        match *self {
            BaselineActivation::Relu => BaselineKind::Relu,
            BaselineActivation::LeakyRelu { slope } => BaselineKind::LeakyRelu { slope },
            BaselineActivation::Prelu { .. } => BaselineKind::Prelu,
            BaselineActivation::Swish1 => BaselineKind::Swish1,
            BaselineActivation::Swish { .. } => BaselineKind::Swish,
        }
    }

    /// The trainable scalar, if any.
    pub fn param(&self) -> Option<f64> {
        match *self {
            BaselineActivation::Prelu { slope } => Some(slope),
            BaselineActivation::Swish { beta } => Some(beta),
            _ => None,
        }
    }

    pub fn param_mut(&mut self) -> Option<&mut f64> {
        match self {
            BaselineActivation::Prelu { slope } => Some(slope),
            BaselineActivation::Swish { beta } => Some(beta),
            _ => None,
        }
    }

    /// Name of the trainable scalar inside a checkpoint.
    pub fn param_name(&self) -> Option<&'static str> {
        match self {
            BaselineActivation::Prelu { .. } => Some("prelu.slope"),
            BaselineActivation::Swish { .. } => Some("swish.beta"),
            _ => None,
        }
    }

    fn apply(&self, x: f64) -> f64 {
        match *self {
            BaselineActivation::Relu => x.max(0.0),
            BaselineActivation::LeakyRelu { slope } | BaselineActivation::Prelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            BaselineActivation::Swish1 => x * sigmoid(x),
            BaselineActivation::Swish { beta } => x * sigmoid(beta * x),
        }
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let data = z.data().iter().map(|&x| self.apply(x)).collect();
        Tensor::checked(z.shape().to_vec(), data, "baseline activation")
    }

    /// Returns `∂L/∂z` and, for PReLU/Swish, `∂L/∂param` summed over the batch.
    pub fn backward(&self, z: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Option<f64>)> {
        if z.shape() != grad_out.shape() {
            return Err(crate::Error::Shape(format!(
                "activation backward: grad {:?} vs input {:?}",
                grad_out.shape(),
                z.shape()
            )));
        }
        let mut param_grad = 0.0;
        let data: Vec<f64> = z
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&x, &g)| match *self {
                BaselineActivation::Relu => {
                    if x > 0.0 {
                        g
                    } else {
                        0.0
                    }
                }
                BaselineActivation::LeakyRelu { slope } => {
                    if x > 0.0 {
                        g
                    } else {
                        slope * g
                    }
                }
                BaselineActivation::Prelu { slope } => {
                    if x > 0.0 {
                        g
                    } else {
                        param_grad += g * x;
                        slope * g
                    }
                }
                BaselineActivation::Swish1 => {
                    let s = sigmoid(x);
                    g * (s + x * s * (1.0 - s))
                }
                BaselineActivation::Swish { beta } => {
                    let s = sigmoid(beta * x);
                    param_grad += g * x * x * s * (1.0 - s);
                    g * (s + beta * x * s * (1.0 - s))
                }
            })
            .collect();
        let grad_z = Tensor::checked(z.shape().to_vec(), data, "baseline backward")?;
        Ok((grad_z, self.param().map(|_| param_grad)))
    }
}
