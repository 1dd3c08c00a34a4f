//! Competition indicators: how strongly the positive entries of a
//! pre-activation row dominate the negative ones.
//!
//! Every indicator is computed per sample (one value per batch row) over the
//! row's features:
//!
//! - `Energy`: share of squared L2 mass carried by positive entries.
//! - `L1`: share of L1 mass carried by positive entries.
//! - `Count`: share of entries that are strictly positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default `ε` added to the Energy and L1 denominators.
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompetitionKind {
    Energy,
    L1,
    Count,
}

impl CompetitionKind {
    pub const ALL: [CompetitionKind; 3] = [
        CompetitionKind::Energy,
        CompetitionKind::L1,
        CompetitionKind::Count,
    ];

    /// Short suffix used in activation names (`carelu_e`, `carelu_l1`, `carelu_c`).
    pub fn suffix(self) -> &'static str {
        match self {
            CompetitionKind::Energy => "e",
            CompetitionKind::L1 => "l1",
            CompetitionKind::Count => "c",
        }
    }
}

/// Indicator values plus the row reductions the backward pass reuses.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorResult {
    pub kind: CompetitionKind,
    /// One indicator value per row, in `[0, 1]`.
    pub p: Vec<f64>,
    /// Positive-part mass per row: `Σ max(z,0)²`, `Σ max(z,0)` or the positive count.
    pub positive: Vec<f64>,
    /// Total mass per row: `‖z‖²`, `‖z‖₁` or `d`. Excludes `ε`.
    pub total: Vec<f64>,
}

pub fn indicator_forward(
    kind: CompetitionKind,
    z: &Tensor,
    epsilon: f64,
) -> Result<IndicatorResult> {
    let (n, d) = z.dims2()?;
    if d == 0 {
        return Err(Error::Shape("indicator needs at least one feature".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "indicator epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let mut p = Vec::with_capacity(n);
    let mut positive = Vec::with_capacity(n);
    let mut total = Vec::with_capacity(n);
    for i in 0..n {
        let row = z.row(i);
        let (pos, tot, value) = match kind {
            CompetitionKind::Energy => {
                let (pos, tot) = row.iter().fold((0.0, 0.0), |(pos, tot), &x| {
                    let sq = x * x;
                    (if x > 0.0 { pos + sq } else { pos }, tot + sq)
                });
                (pos, tot, pos / (tot + epsilon))
            }
            CompetitionKind::L1 => {
                let (pos, tot) = row.iter().fold((0.0, 0.0), |(pos, tot), &x| {
                    (if x > 0.0 { pos + x } else { pos }, tot + x.abs())
                });
                (pos, tot, pos / (tot + epsilon))
            }
            CompetitionKind::Count => {
                let pos = row.iter().filter(|&&x| x > 0.0).count() as f64;
                let tot = d as f64;
                (pos, tot, pos / tot)
            }
        };
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "{kind:?} indicator is not finite on row {i}"
            )));
        }
        p.push(value);
        positive.push(pos);
        total.push(tot);
    }
    Ok(IndicatorResult {
        kind,
        p,
        positive,
        total,
    })
}

/// `∂p/∂z` per row, with `ε` dropped from the denominators.
///
/// Rows whose total mass is zero get a zero gradient, as do the L1 entries
/// sitting exactly at zero.
pub fn indicator_backward(
    kind: CompetitionKind,
    z: &Tensor,
    cached: &IndicatorResult,
) -> Result<Tensor> {
    let (n, d) = z.dims2()?;
    if cached.kind != kind || cached.p.len() != n {
        return Err(Error::Shape(format!(
            "indicator cache ({:?}, {} rows) does not match {kind:?} input with {n} rows",
            cached.kind,
            cached.p.len()
        )));
    }
    let mut out = vec![0.0; n * d];
    if kind == CompetitionKind::Count {
        return Ok(Tensor::from_parts(vec![n, d], out));
    }
    for i in 0..n {
        let (pos, tot) = (cached.positive[i], cached.total[i]);
        if tot == 0.0 {
            continue;
        }
        let grad = &mut out[i * d..(i + 1) * d];
        let tot_sq = tot * tot;
        match kind {
            CompetitionKind::Energy => {
                for (g, &x) in grad.iter_mut().zip(z.row(i)) {
                    *g = (2.0 * x.max(0.0) * tot - 2.0 * x * pos) / tot_sq;
                }
            }
            CompetitionKind::L1 => {
                let neg_branch = pos / tot_sq;
                let pos_branch = (tot - pos) / tot_sq;
                for (g, &x) in grad.iter_mut().zip(z.row(i)) {
                    *g = if x < 0.0 {
                        neg_branch
                    } else if x > 0.0 {
                        pos_branch
                    } else {
                        0.0
                    };
                }
            }
            CompetitionKind::Count => unreachable!(),
        }
    }
    Tensor::checked(vec![n, d], out, "indicator_backward")
}
