//! Synthetic datasets, delimited-text loading and train-statistics normalization.
//!
//! CSV layout: one sample per line, UTF-8, `.` decimal separator, a single
//! character delimiter (comma by default). One column holds a non-negative
//! integer class label; every other column is a feature parsed as `f64`.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Targets;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub targets: Targets,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Tensor, targets: Targets, split: Split) -> Result<Self> {
        let (n, _) = features.dims2()?;
        if targets.len() != n {
            return Err(Error::Shape(format!(
                "{n} feature rows but {} targets",
                targets.len()
            )));
        }
        if let Targets::Classes { labels, classes } = &targets {
            if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= *classes) {
                return Err(Error::Label { row, label, classes: *classes });
            }
        }
        Ok(Dataset { features, targets, split })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> Option<usize> {
        match self.targets {
            Targets::Classes { classes, .. } => Some(classes),
            Targets::Values(_) => None,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }
}

/// Gaussian blobs around scaled basis vectors `e_c` (needs `classes ≤ dim`).
pub fn gen_blobs(n_per_class: usize, classes: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 || classes == 0 || dim == 0 {
        return Err(Error::InvalidArgument("blob sizes must be positive".into()));
    }
    if classes > dim {
        return Err(Error::InvalidArgument(format!(
            "blobs place class means on basis vectors: {classes} classes need dim >= {classes}, got {dim}"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!("spread must be >= 0, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n_per_class * classes * dim);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for c in 0..classes {
        for _ in 0..n_per_class {
            for j in 0..dim {
                let mean = if j == c { 1.0 } else { 0.0 };
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push(mean + spread * noise);
            }
            labels.push(c);
        }
    }
    Dataset::new(
        Tensor::new(vec![n_per_class * classes, dim], features)?,
        Targets::Classes { labels, classes },
        Split::Train,
    )
}

/// Inner radius of the spiral arms.
pub const SPIRAL_R0: f64 = 0.1;

/// Noise-free point at curve parameter `t ∈ [0, 1]` on arm `class ∈ {0, 1}`.
pub fn spiral_point(class: usize, t: f64, turns: f64) -> [f64; 2] {
    let r = SPIRAL_R0 + (1.0 - SPIRAL_R0) * t;
    let theta = 2.0 * std::f64::consts::PI * turns * t + class as f64 * std::f64::consts::PI;
    [r * theta.cos(), r * theta.sin()]
}

/// Two interleaved spiral arms, `n_per_class` points each, with isotropic
/// Gaussian noise of standard deviation `noise`.
pub fn gen_spirals(n_per_class: usize, turns: f64, noise: f64, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be positive".into()));
    }
    if !(turns > 0.0 && turns.is_finite()) || !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "spirals need turns > 0 and noise >= 0, got {turns} and {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(4 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for class in 0..2 {
        for _ in 0..n_per_class {
            let t: f64 = rng.random();
            let [x, y] = spiral_point(class, t, turns);
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            features.push(x + noise * nx);
            features.push(y + noise * ny);
            labels.push(class);
        }
    }
    Dataset::new(
        Tensor::new(vec![2 * n_per_class, 2], features)?,
        Targets::Classes { labels, classes: 2 },
        Split::Train,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_col: usize,
    pub has_header: bool,
    pub delimiter: char,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            label_col: 0,
            has_header: false,
            delimiter: ',',
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema, split: Split) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, split)
}

/// Parses CSV from any reader. Row order is preserved.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema, split: Split) -> Result<Dataset> {
    if !schema.delimiter.is_ascii() {
        return Err(Error::InvalidArgument(format!(
            "delimiter must be a single ASCII character, got {:?}",
            schema.delimiter
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut width: Option<usize> = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Format {
            line: e.position().map_or(0, |p| p.line()),
            detail: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => {
                if record.len() < 2 || schema.label_col >= record.len() {
                    return Err(Error::Format {
                        line,
                        detail: format!(
                            "{} columns cannot hold label column {} plus features",
                            record.len(),
                            schema.label_col
                        ),
                    });
                }
                width = Some(record.len());
            }
            Some(w) if w != record.len() => {
                return Err(Error::Format {
                    line,
                    detail: format!("expected {w} columns, found {}", record.len()),
                });
            }
            Some(_) => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let parse_err = || Error::Parse { line, col, cell: cell.to_string() };
            if col == schema.label_col {
                labels.push(cell.parse::<usize>().map_err(|_| parse_err())?);
            } else {
                let v: f64 = cell.parse().map_err(|_| parse_err())?;
                if !v.is_finite() {
                    return Err(parse_err());
                }
                features.push(v);
            }
        }
    }
    let Some(w) = width else {
        return Err(Error::Format { line: 0, detail: "no data rows".into() });
    };
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let n = labels.len();
    Dataset::new(
        Tensor::new(vec![n, w - 1], features)?,
        Targets::Classes { labels, classes },
        split,
    )
}

/// Writes `label,f1,f2,…` lines with shortest round-trip float formatting.
pub fn write_csv<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::InvalidArgument("only classification datasets are written as CSV".into()))?;
    let mut out = String::new();
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&l.to_string());
        for v in data.features.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::io("<csv writer>", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizePolicy {
    None,
    #[default]
    Standardize,
}

/// Per-feature affine map `(x − mean) / std` fitted on a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            warnings: Vec::new(),
        }
    }

    /// Fits on `train`. Constant features are left untouched and reported.
    pub fn fit(train: &Dataset, policy: NormalizePolicy) -> Result<Self> {
        let d = train.dim();
        if train.is_empty() {
            return Err(Error::InvalidArgument("cannot normalize with an empty train split".into()));
        }
        if policy == NormalizePolicy::None {
            return Ok(Normalizer::identity(d));
        }
        let n = train.len() as f64;
        let mean: Vec<f64> = train.features.column_sums()?.into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; d];
        for i in 0..train.len() {
            for ((v, &x), &m) in var.iter_mut().zip(train.features.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let mut norm = Normalizer::identity(d);
        for j in 0..d {
            let std = (var[j] / n).sqrt();
            if std > 0.0 {
                norm.mean[j] = mean[j];
                norm.std[j] = std;
            } else {
                norm.warnings.push(format!("feature {j} has zero variance; left unchanged"));
            }
        }
        Ok(norm)
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.mean.len() {
            return Err(Error::Shape(format!(
                "normalizer fitted on {} features, data has {}",
                self.mean.len(),
                data.dim()
            )));
        }
        let mut features = data.features.clone();
        let d = self.mean.len();
        for (k, v) in features.data_mut().iter_mut().enumerate() {
            let j = k % d;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        crate::tensor::ensure_finite(features.data(), "normalize")?;
        Ok(Dataset { features, ..data.clone() })
    }
}

/// Fits on `train` and transforms both splits with the train statistics.
pub fn normalize(train: &Dataset, test: &Dataset, policy: NormalizePolicy) -> Result<(Dataset, Dataset, Normalizer)> {
    let norm = Normalizer::fit(train, policy)?;
    Ok((norm.apply(train)?, norm.apply(test)?, norm))
}
