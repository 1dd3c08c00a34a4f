use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Supervision for a batch: class labels or real-valued targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, classes: usize },
    Values(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Result<Targets> {
        Ok(match self {
            Targets::Classes { labels, classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            Targets::Values(t) => Targets::Values(t.select_rows(idx)?),
        })
    }

    /// Mean-over-batch loss and its gradient with respect to `output`.
    ///
    /// Class labels are one-hot encoded for `Mse`.
    pub fn loss(&self, kind: LossKind, output: &Tensor) -> Result<(f64, Tensor)> {
        match (kind, self) {
            (LossKind::CrossEntropy, Targets::Classes { labels, .. }) => cross_entropy(output, labels),
            (LossKind::CrossEntropy, Targets::Values(_)) => Err(Error::InvalidArgument(
                "cross-entropy needs class labels".into(),
            )),
            (LossKind::Mse, Targets::Values(t)) => mse(output, t),
            (LossKind::Mse, Targets::Classes { labels, classes }) => {
                let (n, c) = output.dims2()?;
                if c != *classes {
                    return Err(Error::Shape(format!(
                        "output has {c} columns for {classes} classes"
                    )));
                }
                let mut onehot = vec![0.0; n * c];
                for (i, &l) in labels.iter().enumerate() {
                    if l >= c {
                        return Err(Error::Label { row: i, label: l, classes: c });
                    }
                    onehot[i * c + l] = 1.0;
                }
                mse(output, &Tensor::new(vec![n, c], onehot)?)
            }
        }
    }
}

/// Mean over the batch of `−log softmax(logits)[label]`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let mut grad = vec![0.0; n * c];
    let mut total = 0.0;
    let nf = n as f64;
    for (i, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::Label { row: i, label, classes: c });
        }
        let row = logits.row(i);
        let argmax = (0..c).fold(0, |best, j| if row[j] > row[best] { j } else { best });
        let max = row[argmax];
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != argmax)
            .map(|(_, &v)| (v - max).exp())
            .sum();
        total += (max - row[label]) + rest.ln_1p();
        let denom = 1.0 + rest;
        for (j, &v) in row.iter().enumerate() {
            let softmax = (v - max).exp() / denom;
            grad[i * c + j] = (softmax - if j == label { 1.0 } else { 0.0 }) / nf;
        }
    }
    let loss = total / nf;
    if !loss.is_finite() {
        return Err(Error::Numeric("cross-entropy loss is not finite".into()));
    }
    Ok((loss, Tensor::checked(vec![n, c], grad, "cross-entropy gradient")?))
}

/// `(1/N) Σ_i Σ_j (y_ij − t_ij)²`.
pub fn mse(output: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if output.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "mse: output {:?} vs target {:?}",
            output.shape(),
            target.shape()
        )));
    }
    let nf = output.rows() as f64;
    let diff = output.sub(target)?;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / nf;
    if !loss.is_finite() {
        return Err(Error::Numeric("mse loss is not finite".into()));
    }
    Ok((loss, diff.scale(2.0 / nf)?))
}
