//! Layer stacks with a uniform forward/backward contract.
//!
//! A [`NetworkSpec`] lists coarse layer descriptors. [`Network::from_spec`]
//! expands them into primitive [`Layer`]s: `CAReLU` becomes `CAS → ReLU` and
//! `BN-CAReLU` becomes `CAS → BatchNorm → ReLU`. Parameter names in
//! checkpoints and gradient sets refer to positions in the expanded list.

mod loss;
mod optim;
mod train;

pub use loss::{cross_entropy, mse, LossKind, Targets};
pub use optim::{Milestone, OptimizerKind, OptimizerState};
pub use train::{evaluate, lr_at, train, EpochRecord, EvalMetrics, TrainConfig, TrainReport};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activations::{
    cas_backward, cas_forward, cas_init, BaselineActivation, BaselineKind, CasCache, CasParams,
    DEFAULT_LEAKY_SLOPE,
};
use crate::batchnorm::{BnCache, BnState, Mode};
use crate::error::{Error, Result};
use crate::indicators::{CompetitionKind, DEFAULT_EPSILON};
use crate::tensor::Tensor;

/// Activation choice inside a [`NetworkSpec`].
///
/// Written as a short name: `relu`, `leaky_relu` (or `leaky_relu:<slope>`),
/// `prelu`, `swish1`, `swish`, `carelu_{e,l1,c}`, `bn_carelu_{e,l1,c}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ActivationDesc {
    Baseline(BaselineKind),
    CaRelu(CompetitionKind),
    BnCaRelu(CompetitionKind),
}

impl ActivationDesc {
    /// Every activation compared in the desk-scale experiments.
    pub fn all() -> Vec<ActivationDesc> {
        let mut v = vec![
            ActivationDesc::Baseline(BaselineKind::Relu),
            ActivationDesc::Baseline(BaselineKind::LeakyRelu {
                slope: DEFAULT_LEAKY_SLOPE,
            }),
            ActivationDesc::Baseline(BaselineKind::Prelu),
            ActivationDesc::Baseline(BaselineKind::Swish1),
            ActivationDesc::Baseline(BaselineKind::Swish),
        ];
        v.extend(CompetitionKind::ALL.map(ActivationDesc::CaRelu));
        v.extend(CompetitionKind::ALL.map(ActivationDesc::BnCaRelu));
        v
    }
}

impl fmt::Display for ActivationDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationDesc::Baseline(BaselineKind::Relu) => f.write_str("relu"),
            ActivationDesc::Baseline(BaselineKind::LeakyRelu { slope }) => {
                if *slope == DEFAULT_LEAKY_SLOPE {
                    f.write_str("leaky_relu")
                } else {
                    write!(f, "leaky_relu:{slope}")
                }
            }
            ActivationDesc::Baseline(BaselineKind::Prelu) => f.write_str("prelu"),
            ActivationDesc::Baseline(BaselineKind::Swish1) => f.write_str("swish1"),
            ActivationDesc::Baseline(BaselineKind::Swish) => f.write_str("swish"),
            ActivationDesc::CaRelu(k) => write!(f, "carelu_{}", k.suffix()),
            ActivationDesc::BnCaRelu(k) => write!(f, "bn_carelu_{}", k.suffix()),
        }
    }
}

impl FromStr for ActivationDesc {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind_of = |suffix: &str| {
            CompetitionKind::ALL
                .into_iter()
                .find(|k| k.suffix() == suffix)
        };
        let parsed = match s {
            "relu" => Some(ActivationDesc::Baseline(BaselineKind::Relu)),
            "leaky_relu" => Some(ActivationDesc::Baseline(BaselineKind::LeakyRelu {
                slope: DEFAULT_LEAKY_SLOPE,
            })),
            "prelu" => Some(ActivationDesc::Baseline(BaselineKind::Prelu)),
            "swish1" => Some(ActivationDesc::Baseline(BaselineKind::Swish1)),
            "swish" => Some(ActivationDesc::Baseline(BaselineKind::Swish)),
            _ => {
                if let Some(slope) = s.strip_prefix("leaky_relu:") {
                    slope
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(|slope| ActivationDesc::Baseline(BaselineKind::LeakyRelu { slope }))
                } else if let Some(k) = s.strip_prefix("bn_carelu_") {
                    kind_of(k).map(ActivationDesc::BnCaRelu)
                } else if let Some(k) = s.strip_prefix("carelu_") {
                    kind_of(k).map(ActivationDesc::CaRelu)
                } else {
                    None
                }
            }
        };
        parsed.ok_or_else(|| Error::InvalidArgument(format!("unknown activation name {s:?}")))
    }
}

impl TryFrom<String> for ActivationDesc {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ActivationDesc> for String {
    fn from(a: ActivationDesc) -> String {
        a.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerDesc {
    Dense { d_in: usize, d_out: usize },
    Activation { activation: ActivationDesc },
    BatchNorm { dim: usize },
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub layers: Vec<LayerDesc>,
    pub loss: LossKind,
    pub seed: u64,
    /// Indicator `ε` for every CAS layer.
    #[serde(default = "default_epsilon")]
    pub cas_epsilon: f64,
}

impl NetworkSpec {
    /// `Dense → act → … → Dense` with the activation after every hidden layer.
    pub fn mlp(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: ActivationDesc,
        loss: LossKind,
        seed: u64,
    ) -> Self {
        let mut layers = Vec::new();
        let mut width = input;
        for &h in hidden {
            layers.push(LayerDesc::Dense {
                d_in: width,
                d_out: h,
            });
            layers.push(LayerDesc::Activation { activation });
            width = h;
        }
        layers.push(LayerDesc::Dense {
            d_in: width,
            d_out: output,
        });
        NetworkSpec {
            layers,
            loss,
            seed,
            cas_epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            LayerDesc::Dense { d_in, .. } => Some(*d_in),
            LayerDesc::BatchNorm { dim } => Some(*dim),
            LayerDesc::Activation { .. } => None,
        })
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            LayerDesc::Dense { d_out, .. } => Some(*d_out),
            LayerDesc::BatchNorm { dim } => Some(*dim),
            LayerDesc::Activation { .. } => None,
        })
    }
}

/// Affine map `y = x·W + b` with `W` stored `d_in × d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// Weights and biases uniform in `±1/√d_in`.
    pub fn init<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (d_in as f64).sqrt();
        let weight: Vec<f64> = (0..d_in * d_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = (0..d_out).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(DenseLayer {
            weight: Tensor::new(vec![d_in, d_out], weight)?,
            bias,
        })
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.matmul(&self.weight)?;
        let d = self.d_out();
        for (i, v) in y.data_mut().iter_mut().enumerate() {
            *v += self.bias[i % d];
        }
        crate::tensor::ensure_finite(y.data(), "dense forward")?;
        Ok(y)
    }

    /// Returns `(grad_x, grad_weight, grad_bias)`.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Vec<f64>)> {
        let grad_w = x.transpose()?.matmul(grad_out)?;
        let grad_b = grad_out.column_sums()?;
        let grad_x = grad_out.matmul(&self.weight.transpose()?)?;
        Ok((grad_x, grad_w, grad_b))
    }
}

/// A primitive layer after descriptor expansion.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Cas(CasParams),
    BatchNorm(BnState),
    Activation(BaselineActivation),
}

impl Layer {
    fn tag(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Cas(_) => "cas",
            Layer::BatchNorm(_) => "bn",
            Layer::Activation(a) => match a {
                BaselineActivation::Relu => "relu",
                BaselineActivation::LeakyRelu { .. } => "leaky_relu",
                BaselineActivation::Prelu { .. } => "prelu",
                BaselineActivation::Swish1 => "swish1",
                BaselineActivation::Swish { .. } => "swish",
            },
        }
    }
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense(Tensor),
    Cas(CasCache),
    BatchNorm(BnCache),
    Activation(Tensor),
}

/// Caches from one train-mode forward pass, one per expanded layer.
#[derive(Debug, Clone)]
pub struct ForwardCaches(pub Vec<LayerCache>);

/// Description of one trainable parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// Whether weight decay applies (dense weights and biases only).
    pub decay: bool,
}

/// Gradients for every trainable parameter, in [`Network::param_info`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.0.concat()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

fn tag_layer_error(i: usize, tag: &str, e: Error) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("layer{i} ({tag}): {msg}")),
        Error::Shape(msg) => Error::Shape(format!("layer{i} ({tag}): {msg}")),
        other => other,
    }
}

impl Network {
    /// Validates `spec` and initializes parameters from `spec.seed`.
    ///
    /// Only dense layers draw from the generator, so two specs that differ
    /// only in their activations start with identical weights.
    pub fn from_spec(spec: NetworkSpec) -> Result<Self> {
        if !(spec.cas_epsilon > 0.0 && spec.cas_epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cas_epsilon must be positive, got {}",
                spec.cas_epsilon
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut layers = Vec::new();
        let mut width: Option<usize> = None;
        let check_width = |width: Option<usize>, d: usize, what: &str| -> Result<()> {
            match width {
                Some(w) if w != d => Err(Error::Shape(format!(
                    "{what} expects width {d} but the previous layer produces {w}"
                ))),
                _ => Ok(()),
            }
        };
        for (i, desc) in spec.layers.iter().enumerate() {
            match *desc {
                LayerDesc::Dense { d_in, d_out } => {
                    if d_in == 0 || d_out == 0 {
                        return Err(Error::Shape(format!("layer {i}: dense dims must be positive")));
                    }
                    check_width(width, d_in, &format!("layer {i} (dense)"))?;
                    layers.push(Layer::Dense(DenseLayer::init(d_in, d_out, &mut rng)?));
                    width = Some(d_out);
                }
                LayerDesc::BatchNorm { dim } => {
                    if dim == 0 {
                        return Err(Error::Shape(format!("layer {i}: batch norm dim must be positive")));
                    }
                    check_width(width, dim, &format!("layer {i} (batch_norm)"))?;
                    layers.push(Layer::BatchNorm(BnState::new(dim)));
                    width = Some(dim);
                }
                LayerDesc::Activation { activation } => match activation {
                    ActivationDesc::Baseline(kind) => {
                        layers.push(Layer::Activation(BaselineActivation::init(kind)));
                    }
                    ActivationDesc::CaRelu(kind) => {
                        layers.push(Layer::Cas(CasParams {
                            epsilon: spec.cas_epsilon,
                            ..cas_init(kind)
                        }));
                        layers.push(Layer::Activation(BaselineActivation::Relu));
                    }
                    ActivationDesc::BnCaRelu(kind) => {
                        let dim = width.ok_or_else(|| {
                            Error::Shape(format!(
                                "layer {i}: bn_carelu needs a preceding layer to fix its width"
                            ))
                        })?;
                        layers.push(Layer::Cas(CasParams {
                            epsilon: spec.cas_epsilon,
                            ..cas_init(kind)
                        }));
                        layers.push(Layer::BatchNorm(BnState::new(dim)));
                        layers.push(Layer::Activation(BaselineActivation::Relu));
                    }
                },
            }
        }
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Indices (in the expanded list) of CAS layers.
    pub fn cas_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Cas(_)))
            .map(|(i, _)| i)
            .collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, d) = x.dims2()?;
        match self.spec.input_dim() {
            Some(want) if want != d => Err(Error::Shape(format!(
                "network expects {want} input features, got {d}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<ForwardCaches>)> {
        match mode {
            Mode::Train => {
                let (y, c) = self.forward_train(x)?;
                Ok((y, Some(c)))
            }
            Mode::Eval => Ok((self.forward_eval(x)?, None)),
        }
    }

    /// Forward with batch statistics, updating BN running stats and keeping caches.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, ForwardCaches)> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let tag = layer.tag();
            let mut step = || -> Result<(Tensor, LayerCache)> {
                Ok(match layer {
                    Layer::Dense(d) => (d.forward(&h)?, LayerCache::Dense(h.clone())),
                    Layer::Cas(p) => {
                        let (y, c) = cas_forward(p, &h)?;
                        (y, LayerCache::Cas(c))
                    }
                    Layer::BatchNorm(bn) => {
                        let (y, c) = bn.forward_train(&h)?;
                        (y, LayerCache::BatchNorm(c))
                    }
                    Layer::Activation(a) => (a.forward(&h)?, LayerCache::Activation(h.clone())),
                })
            };
            let (y, cache) = step().map_err(|e| tag_layer_error(i, tag, e))?;
            caches.push(cache);
            h = y;
        }
        Ok((h, ForwardCaches(caches)))
    }

    /// Forward with running statistics; no caches, no mutation.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_eval_probe(x).map(|(y, _)| y)
    }

    /// Eval forward that also returns `α·p + β` per sample for every CAS layer.
    pub fn forward_eval_probe(&self, x: &Tensor) -> Result<(Tensor, Vec<Vec<f64>>)> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut probes = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut step = || -> Result<Tensor> {
                Ok(match layer {
                    Layer::Dense(d) => d.forward(&h)?,
                    Layer::Cas(p) => {
                        let (y, c) = cas_forward(p, &h)?;
                        probes.push(c.u);
                        y
                    }
                    Layer::BatchNorm(bn) => bn.forward_eval(&h)?.0,
                    Layer::Activation(a) => a.forward(&h)?,
                })
            };
            h = step().map_err(|e| tag_layer_error(i, layer.tag(), e))?;
        }
        Ok((h, probes))
    }

    /// Backpropagates `grad_output` through the cached forward pass.
    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(
        &self,
        caches: &ForwardCaches,
        grad_output: &Tensor,
    ) -> Result<(Gradients, Tensor)> {
        if caches.0.len() != self.layers.len() {
            return Err(Error::InvalidState(format!(
                "backward needs {} layer caches, got {}",
                self.layers.len(),
                caches.0.len()
            )));
        }
        let mut g = grad_output.clone();
        let mut per_layer: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        for (i, (layer, cache)) in self.layers.iter().zip(&caches.0).enumerate().rev() {
            let mismatch = || Error::InvalidState(format!("layer{i}: cache does not match layer type"));
            let (grad_in, params) = match (layer, cache) {
                (Layer::Dense(d), LayerCache::Dense(x)) => {
                    let (gx, gw, gb) = d.backward(x, &g)?;
                    (gx, vec![gw.into_data(), gb])
                }
                (Layer::Cas(p), LayerCache::Cas(c)) => {
                    let r = cas_backward(p, c, &g)?;
                    (r.grad_z, vec![vec![r.grad_alpha], vec![r.grad_beta]])
                }
                (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => {
                    let r = bn.backward(c, &g)?;
                    (r.grad_x, vec![r.grad_gamma, r.grad_shift])
                }
                (Layer::Activation(a), LayerCache::Activation(x)) => {
                    let (gx, gp) = a.backward(x, &g)?;
                    (gx, gp.map(|v| vec![vec![v]]).unwrap_or_default())
                }
                _ => return Err(mismatch()),
            };
            per_layer.push(params);
            g = grad_in;
        }
        per_layer.reverse();
        Ok((Gradients(per_layer.into_iter().flatten().collect()), g))
    }

    /// Names, shapes and decay flags of trainable parameters.
    pub fn param_info(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut push = |name: &str, shape: Vec<usize>, decay: bool| {
                out.push(ParamInfo {
                    name: format!("layer{i}.{name}"),
                    shape,
                    decay,
                })
            };
            match layer {
                Layer::Dense(d) => {
                    push("dense.weight", d.weight.shape().to_vec(), true);
                    push("dense.bias", vec![d.d_out()], true);
                }
                Layer::Cas(_) => {
                    push("cas.alpha", vec![1], false);
                    push("cas.beta", vec![1], false);
                }
                Layer::BatchNorm(bn) => {
                    push("bn.gamma", vec![bn.dim()], false);
                    push("bn.shift", vec![bn.dim()], false);
                }
                Layer::Activation(a) => {
                    if let Some(name) = a.param_name() {
                        push(name, vec![1], false);
                    }
                }
            }
        }
        out
    }

    /// Trainable parameters as slices, in [`Network::param_info`] order.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.data());
                    out.push(&d.bias);
                }
                Layer::Cas(p) => {
                    out.push(std::slice::from_ref(&p.alpha));
                    out.push(std::slice::from_ref(&p.beta));
                }
                Layer::BatchNorm(bn) => {
                    out.push(&bn.gamma);
                    out.push(&bn.shift);
                }
                Layer::Activation(a) => {
                    if let BaselineActivation::Prelu { slope: v } | BaselineActivation::Swish { beta: v } = a {
                        out.push(std::slice::from_ref(v));
                    }
                }
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.data_mut());
                    out.push(&mut d.bias);
                }
                Layer::Cas(p) => {
                    out.push(std::slice::from_mut(&mut p.alpha));
                    out.push(std::slice::from_mut(&mut p.beta));
                }
                Layer::BatchNorm(bn) => {
                    out.push(&mut bn.gamma);
                    out.push(&mut bn.shift);
                }
                Layer::Activation(a) => {
                    if let Some(v) = a.param_mut() {
                        out.push(std::slice::from_mut(v));
                    }
                }
            }
        }
        out
    }

    /// Non-trainable state (BN running statistics) as `(name, values)`.
    pub fn buffers(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::BatchNorm(bn) = layer {
                out.push((format!("layer{i}.bn.running_mean"), bn.running_mean.as_slice()));
                out.push((format!("layer{i}.bn.running_var"), bn.running_var.as_slice()));
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Layer::BatchNorm(bn) = layer {
                out.push((format!("layer{i}.bn.running_mean"), bn.running_mean.as_mut_slice()));
                out.push((format!("layer{i}.bn.running_var"), bn.running_var.as_mut_slice()));
            }
        }
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.params().iter().map(|p| p.len()).sum();
        if total != flat.len() {
            return Err(Error::Shape(format!(
                "network has {total} parameters, got {}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            p.copy_from_slice(&flat[offset..offset + p.len()]);
            offset += p.len();
        }
        Ok(())
    }

    /// FNV-1a over parameter and buffer bits, as 16 hex digits.
    pub fn snapshot_id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let params = self.params();
        let buffers = self.buffers();
        let all = params.iter().copied().chain(buffers.iter().map(|(_, b)| *b));
        for slice in all {
            for v in slice {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= u64::from(byte);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff, relative_error};

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn activation_names_round_trip() {
        for a in ActivationDesc::all() {
            assert_eq!(a.to_string().parse::<ActivationDesc>().unwrap(), a);
        }
        let custom: ActivationDesc = "leaky_relu:0.2".parse().unwrap();
        assert_eq!(custom.to_string(), "leaky_relu:0.2");
        assert!("carelu_x".parse::<ActivationDesc>().is_err());
        assert!("gelu".parse::<ActivationDesc>().is_err());
    }

    #[test]
    fn single_affine_layer() {
        let spec = NetworkSpec {
            layers: vec![LayerDesc::Dense { d_in: 2, d_out: 1 }],
            loss: LossKind::Mse,
            seed: 0,
            cas_epsilon: DEFAULT_EPSILON,
        };
        let mut net = Network::from_spec(spec).unwrap();
        net.set_flat_params(&[1.0, 1.0, 0.0]).unwrap();
        let y = net.forward_eval(&m(&[&[3.0, 4.0]])).unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn empty_network_is_identity() {
        let spec = NetworkSpec {
            layers: vec![],
            loss: LossKind::Mse,
            seed: 0,
            cas_epsilon: DEFAULT_EPSILON,
        };
        let mut net = Network::from_spec(spec).unwrap();
        let x = m(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let (y, caches) = net.forward_train(&x).unwrap();
        assert_eq!(y, x);
        let (grads, gx) = net.backward(&caches, &x).unwrap();
        assert!(grads.0.is_empty());
        assert_eq!(gx, x);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let spec = NetworkSpec {
            layers: vec![
                LayerDesc::Dense { d_in: 2, d_out: 3 },
                LayerDesc::Dense { d_in: 4, d_out: 1 },
            ],
            loss: LossKind::Mse,
            seed: 0,
            cas_epsilon: DEFAULT_EPSILON,
        };
        assert!(matches!(Network::from_spec(spec), Err(Error::Shape(_))));
    }

    #[test]
    fn descriptors_expand() {
        let spec = NetworkSpec::mlp(
            2,
            &[4],
            3,
            ActivationDesc::BnCaRelu(CompetitionKind::Energy),
            LossKind::CrossEntropy,
            1,
        );
        let net = Network::from_spec(spec).unwrap();
        let tags: Vec<_> = net.layers().iter().map(Layer::tag).collect();
        assert_eq!(tags, ["dense", "cas", "bn", "relu", "dense"]);
        let names: Vec<_> = net.param_info().into_iter().map(|p| p.name).collect();
        assert_eq!(
            names,
            [
                "layer0.dense.weight",
                "layer0.dense.bias",
                "layer1.cas.alpha",
                "layer1.cas.beta",
                "layer2.bn.gamma",
                "layer2.bn.shift",
                "layer4.dense.weight",
                "layer4.dense.bias",
            ]
        );
    }

    #[test]
    fn carelu_at_init_matches_relu_bitwise() {
        let x = m(&[&[0.3, -1.2], &[2.0, 0.7], &[-0.4, -0.9]]);
        let relu = NetworkSpec::mlp(2, &[8, 8], 3, "relu".parse().unwrap(), LossKind::CrossEntropy, 42);
        for kind in CompetitionKind::ALL {
            let ca = NetworkSpec::mlp(2, &[8, 8], 3, ActivationDesc::CaRelu(kind), LossKind::CrossEntropy, 42);
            let a = Network::from_spec(relu.clone()).unwrap().forward_eval(&x).unwrap();
            let b = Network::from_spec(ca).unwrap().forward_eval(&x).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let spec = NetworkSpec::mlp(2, &[5], 2, "carelu_l1".parse().unwrap(), LossKind::Mse, 3);
        let mut net = Network::from_spec(spec).unwrap();
        let x = m(&[&[0.3, -1.2], &[2.0, 0.7]]);
        let (y, caches) = net.forward_train(&x).unwrap();
        let zero = Tensor::zeros(y.shape().to_vec()).unwrap();
        let (grads, _) = net.backward(&caches, &zero).unwrap();
        assert!(grads.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_caches_are_invalid_state() {
        let spec = NetworkSpec::mlp(2, &[3], 2, "relu".parse().unwrap(), LossKind::Mse, 0);
        let net = Network::from_spec(spec).unwrap();
        let g = m(&[&[1.0, 1.0]]);
        assert!(matches!(net.backward(&ForwardCaches(vec![]), &g), Err(Error::InvalidState(_))));
    }

    #[test]
    fn linear_mse_gradient_matches_normal_equations() {
        // y = x·w + b on 3 samples: ∂L/∂w = (2/N) Xᵀ r, ∂L/∂b = (2/N) Σ r, r = Xw + b − t.
        let spec = NetworkSpec {
            layers: vec![LayerDesc::Dense { d_in: 2, d_out: 1 }],
            loss: LossKind::Mse,
            seed: 0,
            cas_epsilon: DEFAULT_EPSILON,
        };
        let mut net = Network::from_spec(spec).unwrap();
        net.set_flat_params(&[0.5, -1.0, 0.25]).unwrap();
        let x = m(&[&[1.0, 2.0], &[3.0, -1.0], &[0.0, 4.0]]);
        let t = m(&[&[1.0], &[0.0], &[-2.0]]);
        // predictions: 0.5−2+0.25 = −1.25, 1.5+1+0.25 = 2.75, −4+0.25 = −3.75
        // residuals: −2.25, 2.75, −1.75
        let gw0 = 2.0 / 3.0 * (1.0 * -2.25 + 3.0 * 2.75 + 0.0 * -1.75);
        let gw1 = 2.0 / 3.0 * (2.0 * -2.25 - 2.75 + 4.0 * -1.75);
        let gb = 2.0 / 3.0 * (-2.25 + 2.75 - 1.75);
        let (y, caches) = net.forward_train(&x).unwrap();
        let (_, g) = mse(&y, &t).unwrap();
        let (grads, _) = net.backward(&caches, &g).unwrap();
        let flat = grads.flatten();
        assert!((flat[0] - gw0).abs() < 1e-12);
        assert!((flat[1] - gw1).abs() < 1e-12);
        assert!((flat[2] - gb).abs() < 1e-12);
    }

    #[test]
    fn small_network_gradient_matches_finite_differences() {
        for act in ["prelu", "swish", "bn_carelu_l1", "carelu_e"] {
            let spec = NetworkSpec::mlp(2, &[6], 3, act.parse().unwrap(), LossKind::CrossEntropy, 9);
            let mut net = Network::from_spec(spec).unwrap();
            for layer in net.layers_mut() {
                if let Layer::Cas(p) = layer {
                    p.alpha = 0.7;
                    p.beta = 0.4;
                }
            }
            let x = m(&[&[0.3, -1.2], &[2.0, 0.7], &[-0.4, -0.9], &[1.1, 0.05]]);
            let labels = Targets::Classes { labels: vec![0, 2, 1, 2], classes: 3 };
            let (y, caches) = net.clone().forward_train(&x).unwrap();
            let (_, g) = labels.loss(LossKind::CrossEntropy, &y).unwrap();
            let (grads, _) = net.backward(&caches, &g).unwrap();
            let template = net.clone();
            let numeric = central_diff(
                |p| {
                    let mut n = template.clone();
                    n.set_flat_params(p)?;
                    let (y, _) = n.forward_train(&x)?;
                    Ok(labels.loss(LossKind::CrossEntropy, &y)?.0)
                },
                &net.flat_params(),
                1e-5,
            )
            .unwrap();
            for (a, n) in grads.flatten().iter().zip(&numeric) {
                assert!(relative_error(*a, *n) < 1e-4 || (a - n).abs() < 1e-9, "{act}: {a} vs {n}");
            }
        }
    }
}
