//! Run configuration: one JSON document, validated before any compute.

use std::path::{Path, PathBuf};

use carelu_core::data::{gen_spirals, load_csv, CsvSchema, Split};
use carelu_core::indicators::DEFAULT_EPSILON;
use carelu_core::network::Milestone;
use carelu_core::{ActivationDesc, Dataset, LossKind, NormalizePolicy, OptimizerKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralSource {
    pub n_per_class: usize,
    #[serde(default = "default_turns")]
    pub turns: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Train split seed; the test split uses `seed + 1`.
    #[serde(default)]
    pub seed: u64,
}

fn default_turns() -> f64 {
    1.5
}

fn default_noise() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub train: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub label_col: usize,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl CsvSource {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            label_col: self.label_col,
            has_header: self.has_header,
            delimiter: self.delimiter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Spirals(SpiralSource),
    Csv(CsvSource),
}

impl DataSource {
    /// Loads both splits. Relative CSV paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<(Dataset, Option<Dataset>), CliError> {
        match self {
            DataSource::Spirals(s) => {
                let train = gen_spirals(s.n_per_class, s.turns, s.noise, s.seed)?;
                let mut test = gen_spirals(s.n_per_class, s.turns, s.noise, s.seed.wrapping_add(1))?;
                test.split = Split::Test;
                Ok((train, Some(test)))
            }
            DataSource::Csv(c) => {
                let schema = c.schema();
                let train = load_csv(&base.join(&c.train), &schema, Split::Train)?;
                let test = c
                    .test
                    .as_ref()
                    .map(|p| load_csv(&base.join(p), &schema, Split::Test))
                    .transpose()?;
                Ok((train, test))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub schedule: Vec<Milestone>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub normalize: NormalizePolicy,
    #[serde(default = "default_cas_epsilon")]
    pub cas_epsilon: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}

fn default_activation() -> String {
    "carelu_e".into()
}

fn default_loss() -> LossKind {
    LossKind::CrossEntropy
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Sgd {
        lr: 0.1,
        momentum: 0.9,
        weight_decay: 5e-4,
    }
}

fn default_epochs() -> usize {
    100
}

fn default_batch_size() -> usize {
    32
}

fn default_cas_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn activation(&self) -> Result<ActivationDesc, CliError> {
        self.activation.parse().map_err(|_| {
            let known: Vec<String> = ActivationDesc::all().iter().map(|a| a.to_string()).collect();
            invalid(
                "activation",
                format!("unknown activation {:?}; expected one of {}", self.activation, known.join(", ")),
            )
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.activation()?;
        if self.hidden.contains(&0) {
            return Err(invalid("hidden", "layer widths must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if !(self.cas_epsilon > 0.0 && self.cas_epsilon.is_finite()) {
            return Err(invalid("cas_epsilon", "must be positive and finite"));
        }
        self.optimizer.validate().map_err(|e| invalid("optimizer", e))?;
        for m in &self.schedule {
            if !(m.divisor > 0.0 && m.divisor.is_finite()) {
                return Err(invalid("schedule", format!("divisor must be positive, got {}", m.divisor)));
            }
        }
        match &self.data {
            DataSource::Spirals(s) => {
                if s.n_per_class == 0 {
                    return Err(invalid("data.spirals.n_per_class", "must be positive"));
                }
                if !(s.turns > 0.0 && s.turns.is_finite()) {
                    return Err(invalid("data.spirals.turns", "must be positive"));
                }
                if !(s.noise >= 0.0 && s.noise.is_finite()) {
                    return Err(invalid("data.spirals.noise", "must be non-negative"));
                }
            }
            DataSource::Csv(c) => {
                if !c.delimiter.is_ascii() {
                    return Err(invalid("data.csv.delimiter", "must be a single ASCII character"));
                }
            }
        }
        Ok(())
    }
}

/// A `--data` argument: a CSV file, or a JSON file holding a run config or a bare data source.
pub fn load_data_arg(path: &Path, split: Split) -> Result<Dataset, CliError> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        return Ok(load_csv(path, &CsvSchema::default(), split)?);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let source = match serde_json::from_str::<RunConfig>(&text) {
        Ok(cfg) => {
            cfg.validate()?;
            cfg.data
        }
        Err(cfg_err) => serde_json::from_str::<DataSource>(&text).map_err(|e| {
            CliError::Config(format!(
                "{} is neither a run config ({cfg_err}) nor a data source ({e})",
                path.display()
            ))
        })?,
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let (train, test) = source.load(base)?;
    match split {
        Split::Train => Ok(train),
        Split::Test => test.ok_or_else(|| CliError::Config("data source has no test split".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"data": {"spirals": {"n_per_class": 10}}}"#;

    #[test]
    fn defaults_fill_everything_but_data() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.hidden, vec![32, 32]);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.activation().unwrap().to_string(), "carelu_e");
    }

    #[test]
    fn data_is_required() {
        assert!(matches!(RunConfig::from_json("{}"), Err(CliError::Config(m)) if m.contains("data")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"data": {"spirals": {"n_per_class": 10}}, "epochz": 3}"#;
        assert!(matches!(RunConfig::from_json(text), Err(CliError::Config(m)) if m.contains("epochz")));
        let text = r#"{"data": {"spirals": {"n_per_class": 10, "twists": 2}}}"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn unknown_activation_names_the_field() {
        let text = r#"{"data": {"spirals": {"n_per_class": 10}}, "activation": "gelu"}"#;
        match RunConfig::from_json(text) {
            Err(CliError::Config(m)) => assert!(m.starts_with("activation:"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_numbers_are_rejected() {
        for bad in [
            r#""batch_size": 0"#,
            r#""hidden": [4, 0]"#,
            r#""cas_epsilon": 0"#,
            r#""optimizer": {"kind": "sgd", "lr": -1}"#,
            r#""schedule": [{"epoch": 3, "divisor": 0}]"#,
        ] {
            let text = format!(r#"{{"data": {{"spirals": {{"n_per_class": 10}}}}, {bad}}}"#);
            assert!(RunConfig::from_json(&text).is_err(), "{bad}");
        }
    }

    #[test]
    fn spiral_splits_differ() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        let (train, test) = cfg.data.load(Path::new(".")).unwrap();
        let test = test.unwrap();
        assert_eq!(train.len(), 20);
        assert_ne!(train.features, test.features);
    }
}
