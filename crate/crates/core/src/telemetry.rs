//! Per-layer statistics of the CAS scale over an evaluation set.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{Layer, Network};
use crate::tensor::Tensor;

pub const HISTOGRAM_BINS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Uniform bins over the observed `[min, max]`. A degenerate range is
    /// widened to `[min - 0.5, min + 0.5]`.
    pub fn uniform(values: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
        }
        if values.is_empty() {
            return Err(Error::InvalidArgument("histogram of an empty sample".into()));
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite value {v} in histogram input")));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi <= lo {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        edges[bins] = hi;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let idx = (((v - lo) / (hi - lo)) * bins as f64).floor();
            let idx = (idx.max(0.0) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Ok(Histogram { edges, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerTelemetry {
    /// 1-based position among the network's CAS layers.
    pub ordinal: usize,
    /// Index in the expanded layer list.
    pub layer_index: usize,
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub histogram: Histogram,
    /// Per-sample `α·p + β`, kept only when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

/// Population mean and standard deviation by Welford's update.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    (mean, (m2 / values.len() as f64).max(0.0).sqrt())
}

/// Runs `features` through `net` in eval mode and summarizes every CAS layer.
pub fn collect(net: &Network, features: &Tensor, keep_samples: bool) -> Result<Vec<LayerTelemetry>> {
    let cas = net.cas_layers();
    if cas.is_empty() {
        return Err(Error::InvalidArgument("network has no CAS layers to inspect".into()));
    }
    let (_, probes) = net.forward_eval_probe(features)?;
    let mut out = Vec::with_capacity(cas.len());
    for (k, (&layer_index, u)) in cas.iter().zip(probes).enumerate() {
        let Layer::Cas(params) = &net.layers()[layer_index] else {
            unreachable!("cas_layers returned a non-CAS index");
        };
        let scales: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
        let (mean, std) = mean_std(&scales);
        let histogram = Histogram::uniform(&u, HISTOGRAM_BINS)?;
        out.push(LayerTelemetry {
            ordinal: k + 1,
            layer_index,
            alpha: params.alpha,
            beta: params.beta,
            n: u.len(),
            mean,
            std,
            histogram,
            samples: keep_samples.then_some(u),
        });
    }
    Ok(out)
}
