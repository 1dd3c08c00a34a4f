//! Competition-based adaptive scaling (CAS) and CAReLU.
//!
//! CAS multiplies every row `z` by the scalar `K·tanh(α·p(z) + β)` where `p`
//! is a competition indicator. CAReLU is ReLU applied to the CAS output.
//! With `α = 0, β = 1, K = 1/tanh(1)` the scale is exactly one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{
    indicator_backward, indicator_forward, CompetitionKind, IndicatorResult, DEFAULT_EPSILON,
};
use crate::tensor::Tensor;

/// Initial `β`; `K` is pinned to `1/tanh(BETA_INIT)`.
pub const BETA_INIT: f64 = 1.0;

/// Per-layer CAS parameters. `alpha` and `beta` are trainable, `k` is not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CasParams {
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub epsilon: f64,
    pub kind: CompetitionKind,
}

pub fn cas_init(kind: CompetitionKind) -> CasParams {
    CasParams {
        alpha: 0.0,
        beta: BETA_INIT,
        k: 1.0 / BETA_INIT.tanh(),
        epsilon: DEFAULT_EPSILON,
        kind,
    }
}

impl CasParams {
    /// Initialized parameters with `alpha`/`beta` overridden; `k` stays tied to `β₀ = 1`.
    pub fn with(kind: CompetitionKind, alpha: f64, beta: f64) -> Self {
        CasParams {
            alpha,
            beta,
            ..cas_init(kind)
        }
    }
}

/// `sech²(u)`, via `4/(eᵘ + e⁻ᵘ)²` and `1 − tanh²(u)` once `|u| > 20`.
pub fn sech2(u: f64) -> f64 {
    if u.abs() > 20.0 {
        let t = u.tanh();
        1.0 - t * t
    } else {
        let c = u.exp() + (-u).exp();
        4.0 / (c * c)
    }
}

#[derive(Debug, Clone)]
pub struct CasCache {
    pub z: Tensor,
    pub indicator: IndicatorResult,
    /// `α·p + β` per row.
    pub u: Vec<f64>,
    pub tanh_u: Vec<f64>,
    /// `K·tanh(u)` per row.
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CasGrads {
    pub grad_z: Tensor,
    /// Summed over batch rows.
    pub grad_alpha: f64,
    /// Summed over batch rows.
    pub grad_beta: f64,
}

pub fn cas_forward(params: &CasParams, z: &Tensor) -> Result<(Tensor, CasCache)> {
    let (n, d) = z.dims2()?;
    let indicator = indicator_forward(params.kind, z, params.epsilon)?;
    let mut u = Vec::with_capacity(n);
    let mut tanh_u = Vec::with_capacity(n);
    let mut scale = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n * d);
    for (i, &p) in indicator.p.iter().enumerate() {
        let ui = params.alpha * p + params.beta;
        let t = ui.tanh();
        let s = params.k * t;
        out.extend(z.row(i).iter().map(|&x| s * x));
        u.push(ui);
        tanh_u.push(t);
        scale.push(s);
    }
    let y = Tensor::checked(vec![n, d], out, "cas_forward")?;
    Ok((
        y,
        CasCache {
            z: z.clone(),
            indicator,
            u,
            tanh_u,
            scale,
        },
    ))
}

pub fn cas_backward(params: &CasParams, cache: &CasCache, grad_out: &Tensor) -> Result<CasGrads> {
    let (n, d) = cache.z.dims2()?;
    if grad_out.shape() != cache.z.shape() {
        return Err(Error::Shape(format!(
            "cas_backward: grad shape {:?} does not match cached input {:?}",
            grad_out.shape(),
            cache.z.shape()
        )));
    }
    let dp = indicator_backward(params.kind, &cache.z, &cache.indicator)?;
    let mut grad_z = Vec::with_capacity(n * d);
    let (mut grad_alpha, mut grad_beta) = (0.0, 0.0);
    for i in 0..n {
        let z = cache.z.row(i);
        let g = grad_out.row(i);
        let dot: f64 = g.iter().zip(z).map(|(a, b)| a * b).sum();
        let k_sech = params.k * sech2(cache.u[i]);
        grad_alpha += k_sech * cache.indicator.p[i] * dot;
        grad_beta += k_sech * dot;
        let coupling = k_sech * params.alpha * dot;
        let s = cache.scale[i];
        grad_z.extend(dp.row(i).iter().zip(g).map(|(&dpi, &gi)| coupling * dpi + gi * s));
    }
    if !grad_alpha.is_finite() || !grad_beta.is_finite() {
        return Err(Error::Numeric("cas_backward: non-finite parameter gradient".into()));
    }
    Ok(CasGrads {
        grad_z: Tensor::checked(vec![n, d], grad_z, "cas_backward")?,
        grad_alpha,
        grad_beta,
    })
}

#[derive(Debug, Clone)]
pub struct CareluCache {
    pub cas: CasCache,
    pub cas_out: Tensor,
}

pub fn carelu_forward(params: &CasParams, z: &Tensor) -> Result<(Tensor, CareluCache)> {
    let (cas_out, cas) = cas_forward(params, z)?;
    let y = cas_out.relu()?;
    Ok((y, CareluCache { cas, cas_out }))
}

pub fn carelu_backward(
    params: &CasParams,
    cache: &CareluCache,
    grad_out: &Tensor,
) -> Result<CasGrads> {
    let masked = relu_backward(&cache.cas_out, grad_out)?;
    cas_backward(params, &cache.cas, &masked)
}

/// Passes `grad_out` where `input > 0`, zero elsewhere.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "relu backward: grad shape {:?} vs input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts(input.shape().to_vec(), data))
}

/// Scale rule for the sign-based ablation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignMode {
    /// `s = sgn(2·p_E − 1)`.
    Fixed,
    /// `s = sgn(α·p_E + β)`.
    Parametric { alpha: f64, beta: f64 },
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `relu(s·z)` with a hard sign scale on the energy indicator. Forward only.
pub fn vanilla_sign_cas(z: &Tensor, mode: SignMode, epsilon: f64) -> Result<Tensor> {
    let (n, d) = z.dims2()?;
    let ind = indicator_forward(CompetitionKind::Energy, z, epsilon)?;
    let mut out = Vec::with_capacity(n * d);
    for (i, &p) in ind.p.iter().enumerate() {
        let s = match mode {
            SignMode::Fixed => sgn(2.0 * p - 1.0),
            SignMode::Parametric { alpha, beta } => sgn(alpha * p + beta),
        };
        out.extend(z.row(i).iter().map(|&x| (s * x).max(0.0)));
    }
    Tensor::checked(vec![n, d], out, "vanilla_sign_cas")
}
