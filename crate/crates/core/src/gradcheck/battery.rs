//! The full gradient-check suite: indicators, CAS, CAReLU, BN-CAReLU and a
//! small CAReLU network, each compared against central differences.

use serde::{Deserialize, Serialize};

use super::{central_diff, GradCheckReport, PointSampler, DEFAULT_STEP, INDICATOR_STEP};
use crate::activations::{carelu_backward, carelu_forward, cas_backward, cas_forward, CasParams};
use crate::batchnorm::{bn_carelu_backward, bn_carelu_forward, BnState};
use crate::error::{Error, Result};
use crate::indicators::{indicator_backward, indicator_forward, CompetitionKind};
use crate::network::{ActivationDesc, Layer, LayerCache, LossKind, Network, NetworkSpec, Targets};
use crate::tensor::Tensor;

/// Smallest `|α·p + β|` accepted where a ReLU follows the scaling.
const MIN_ABS_U: f64 = 0.05;
const COMPONENT_WIDTH: usize = 8;

/// Indicator `ε` used on both sides of every check. The analytic indicator
/// derivative ignores `ε`; at this size `tot + ε == tot` for every admissible
/// row, so the oracle differentiates the same function.
pub const ORACLE_EPSILON: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub points: usize,
    pub seed: u64,
    /// Tolerance for indicator, CAS, CAReLU and BN-CAReLU checks.
    pub tol: f64,
    /// Tolerance for the whole-network check.
    pub network_tol: f64,
    pub step: f64,
    pub indicator_step: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            points: 1000,
            seed: 0,
            tol: 1e-5,
            network_tol: 1e-4,
            step: DEFAULT_STEP,
            indicator_step: INDICATOR_STEP,
        }
    }
}

impl BatteryConfig {
    fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::InvalidArgument("gradcheck needs at least one point".into()));
        }
        for (name, v) in [("tol", self.tol), ("network_tol", self.network_tol)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("gradcheck {name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [
            ("step", self.step),
            ("indicator_step", self.indicator_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("gradcheck {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn kind_name(kind: CompetitionKind) -> &'static str {
    match kind {
        CompetitionKind::Energy => "energy",
        CompetitionKind::L1 => "l1",
        CompetitionKind::Count => "count",
    }
}

/// Runs every check; each gets its own sampler stream derived from `seed`.
pub fn run_battery(config: &BatteryConfig) -> Result<Vec<GradCheckReport>> {
    config.validate()?;
    let mut stream = 0u64;
    let mut next_sampler = || {
        stream += 1;
        PointSampler::new(config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream))
    };
    let mut reports = Vec::new();
    for kind in [CompetitionKind::Energy, CompetitionKind::L1] {
        reports.push(check_indicator(kind, config, &mut next_sampler())?);
    }
    for kind in CompetitionKind::ALL {
        for alpha in [-1.0, 0.0, 1.0] {
            for beta in [0.0, 1.0] {
                reports.push(check_cas(kind, alpha, beta, config, &mut next_sampler())?);
            }
        }
    }
    for kind in CompetitionKind::ALL {
        reports.push(check_carelu(kind, config, &mut next_sampler())?);
    }
    for kind in CompetitionKind::ALL {
        reports.push(check_bn_carelu(kind, config, &mut next_sampler())?);
    }
    reports.push(check_network(config, &mut next_sampler())?);
    Ok(reports)
}

fn weights(s: &mut PointSampler, n: usize) -> Vec<f64> {
    (0..n).map(|_| s.uniform(-1.0, 1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_tensor(values: &[f64]) -> Result<Tensor> {
    Tensor::new(vec![1, values.len()], values.to_vec())
}

pub fn check_indicator(
    kind: CompetitionKind,
    config: &BatteryConfig,
    s: &mut PointSampler,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(
        format!("indicator/{}", kind_name(kind)),
        config.indicator_step,
        config.tol,
    );
    for _ in 0..config.points {
        let z = s.tensor(1, COMPONENT_WIDTH);
        let fwd = indicator_forward(kind, &z, ORACLE_EPSILON)?;
        let analytic = indicator_backward(kind, &z, &fwd)?;
        let numeric = central_diff(
            |x| Ok(indicator_forward(kind, &row_tensor(x)?, ORACLE_EPSILON)?.p[0]),
            z.data(),
            config.indicator_step,
        )?;
        report.record(analytic.data(), &numeric)?;
    }
    Ok(report)
}

/// Packs `[z…, α, β]` for the CAS-style checks.
fn pack(z: &Tensor, alpha: f64, beta: f64) -> Vec<f64> {
    let mut v = z.data().to_vec();
    v.push(alpha);
    v.push(beta);
    v
}

fn unpack(x: &[f64], shape: &[usize], base: &CasParams) -> Result<(Tensor, CasParams)> {
    let n = x.len() - 2;
    let z = Tensor::new(shape.to_vec(), x[..n].to_vec())?;
    let params = CasParams {
        alpha: x[n],
        beta: x[n + 1],
        ..*base
    };
    Ok((z, params))
}

pub fn check_cas(
    kind: CompetitionKind,
    alpha: f64,
    beta: f64,
    config: &BatteryConfig,
    s: &mut PointSampler,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(
        format!("cas/{}/alpha={alpha}/beta={beta}", kind_name(kind)),
        config.step,
        config.tol,
    );
    let params = CasParams {
        epsilon: ORACLE_EPSILON,
        ..CasParams::with(kind, alpha, beta)
    };
    let shape = [2, COMPONENT_WIDTH];
    for _ in 0..config.points {
        let z = s.tensor(shape[0], shape[1]);
        let c = weights(s, z.len());
        let (_, cache) = cas_forward(&params, &z)?;
        if !s.admissible_u(&cache.u) {
            return Err(Error::InvalidArgument(format!("α={alpha}, β={beta} saturates tanh")));
        }
        let g = cas_backward(&params, &cache, &Tensor::new(shape.to_vec(), c.clone())?)?;
        let mut analytic = g.grad_z.into_data();
        analytic.push(g.grad_alpha);
        analytic.push(g.grad_beta);
        let numeric = central_diff(
            |x| {
                let (z, p) = unpack(x, &shape, &params)?;
                Ok(dot(&c, cas_forward(&p, &z)?.0.data()))
            },
            &pack(&z, alpha, beta),
            config.step,
        )?;
        report.record(&analytic, &numeric)?;
    }
    Ok(report)
}

fn random_params(kind: CompetitionKind, s: &mut PointSampler) -> CasParams {
    CasParams {
        epsilon: ORACLE_EPSILON,
        ..CasParams::with(kind, s.uniform(-2.0, 2.0), s.uniform(-2.0, 2.0))
    }
}

fn u_in_band(s: &PointSampler, u: &[f64]) -> bool {
    s.admissible_u(u) && u.iter().all(|v| v.abs() >= MIN_ABS_U)
}

pub fn check_carelu(
    kind: CompetitionKind,
    config: &BatteryConfig,
    s: &mut PointSampler,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(format!("carelu/{}", kind_name(kind)), config.step, config.tol);
    let shape = [2, COMPONENT_WIDTH];
    for _ in 0..config.points {
        let (params, z, cache) = s.retry("carelu", |s| {
            let params = random_params(kind, s);
            let z = s.tensor(shape[0], shape[1]);
            let (_, cache) = carelu_forward(&params, &z)?;
            Ok(u_in_band(s, &cache.cas.u).then_some((params, z, cache)))
        })?;
        let c = weights(s, z.len());
        let g = carelu_backward(&params, &cache, &Tensor::new(shape.to_vec(), c.clone())?)?;
        let mut analytic = g.grad_z.into_data();
        analytic.push(g.grad_alpha);
        analytic.push(g.grad_beta);
        let numeric = central_diff(
            |x| {
                let (z, p) = unpack(x, &shape, &params)?;
                Ok(dot(&c, carelu_forward(&p, &z)?.0.data()))
            },
            &pack(&z, params.alpha, params.beta),
            config.step,
        )?;
        report.record(&analytic, &numeric)?;
    }
    Ok(report)
}

pub fn check_bn_carelu(
    kind: CompetitionKind,
    config: &BatteryConfig,
    s: &mut PointSampler,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(format!("bn_carelu/{}", kind_name(kind)), config.step, config.tol);
    let shape = [4, 5];
    let dim = shape[1];
    for _ in 0..config.points {
        let (params, bn, z, cache) = s.retry("bn_carelu", |s| {
            let params = random_params(kind, s);
            let mut bn = BnState::new(dim);
            bn.gamma = (0..dim).map(|_| s.uniform(0.5, 1.5)).collect();
            bn.shift = (0..dim).map(|_| s.uniform(-0.5, 0.5)).collect();
            let z = s.tensor(shape[0], shape[1]);
            let (_, cache) = bn_carelu_forward(&params, &mut bn.clone(), &z)?;
            let ok = u_in_band(s, &cache.cas.u) && s.admissible_margin(cache.bn_out.data());
            Ok(ok.then_some((params, bn, z, cache)))
        })?;
        let c = weights(s, z.len());
        let g = bn_carelu_backward(&params, &bn, &cache, &Tensor::new(shape.to_vec(), c.clone())?)?;
        let mut analytic = g.grad_z.into_data();
        analytic.push(g.grad_alpha);
        analytic.push(g.grad_beta);
        analytic.extend(&g.grad_gamma);
        analytic.extend(&g.grad_shift);
        let mut point = pack(&z, params.alpha, params.beta);
        point.extend(&bn.gamma);
        point.extend(&bn.shift);
        let n_cas = z.len() + 2;
        let numeric = central_diff(
            |x| {
                let (z, p) = unpack(&x[..n_cas], &shape, &params)?;
                let mut b = bn.clone();
                b.gamma = x[n_cas..n_cas + dim].to_vec();
                b.shift = x[n_cas + dim..].to_vec();
                Ok(dot(&c, bn_carelu_forward(&p, &mut b, &z)?.0.data()))
            },
            &point,
            config.step,
        )?;
        report.record(&analytic, &numeric)?;
    }
    Ok(report)
}

/// Every parameter of a 2-16-8-3 CAReLU (energy) network under cross-entropy.
pub fn check_network(config: &BatteryConfig, s: &mut PointSampler) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new("network/2-16-8-3/carelu_e", config.step, config.network_tol);
    let batch = 4;
    let classes = 3;
    for _ in 0..config.points {
        let (net, x, targets) = s.retry("network", |s| {
            let spec = NetworkSpec {
                cas_epsilon: ORACLE_EPSILON,
                ..NetworkSpec::mlp(
                    2,
                    &[16, 8],
                    classes,
                    ActivationDesc::CaRelu(CompetitionKind::Energy),
                    LossKind::CrossEntropy,
                    s.seed(),
                )
            };
            let mut net = Network::from_spec(spec)?;
            for layer in net.layers_mut() {
                if let Layer::Cas(p) = layer {
                    p.alpha = s.uniform(-2.0, 2.0);
                    p.beta = s.uniform(-2.0, 2.0);
                }
            }
            let x = s.tensor(batch, 2);
            let labels = (0..batch).map(|_| s.index(classes)).collect();
            let targets = Targets::Classes { labels, classes };
            let (_, caches) = net.clone().forward_train(&x)?;
            let ok = caches.0.iter().all(|c| match c {
                LayerCache::Cas(c) => s.admissible_z(&c.z) && u_in_band(s, &c.u),
                _ => true,
            });
            Ok(ok.then_some((net, x, targets)))
        })?;
        let mut work = net.clone();
        let (y, caches) = work.forward_train(&x)?;
        let (_, grad_y) = targets.loss(LossKind::CrossEntropy, &y)?;
        let (grads, _) = net.backward(&caches, &grad_y)?;
        let numeric = central_diff(
            |p| {
                let mut probe = net.clone();
                probe.set_flat_params(p)?;
                let (y, _) = probe.forward_train(&x)?;
                Ok(targets.loss(LossKind::CrossEntropy, &y)?.0)
            },
            &net.flat_params(),
            config.step,
        )?;
        report.record(&grads.flatten(), &numeric)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> BatteryConfig {
        BatteryConfig {
            points: 20,
            seed: 11,
            ..BatteryConfig::default()
        }
    }

    #[test]
    fn quick_battery_passes() {
        let reports = run_battery(&quick()).unwrap();
        assert_eq!(reports.len(), 2 + 18 + 3 + 3 + 1);
        for r in &reports {
            // Truncation error of the h = 1e-5 stencil on BN paths reaches ~1e-8.
            assert!(r.max_abs_err <= 1e-7, "{}: {:e}", r.name, r.max_abs_err);
            assert!(r.passed, "{} failed: {:e} at {:?}", r.name, r.max_rel_err, r.argmax);
            assert_eq!(r.points, 20);
        }
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        let mut report = GradCheckReport::new("broken", 1e-5, 1e-5);
        let mut s = PointSampler::new(0);
        let z = s.tensor(1, 4);
        let numeric = central_diff(|x| Ok(x.iter().map(|v| v * v).sum()), z.data(), 1e-5).unwrap();
        let wrong: Vec<f64> = z.data().iter().map(|v| 2.0 * v * 1.001).collect();
        report.record(&wrong, &numeric).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = BatteryConfig { step: 0.0, ..quick() };
        assert!(run_battery(&cfg).is_err());
    }
}
