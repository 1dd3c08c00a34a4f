use std::path::Path;

use carelu_core::checkpoint::{write_atomic, Checkpoint, NamedTensor};
use carelu_core::data::{write_csv, Split};
use carelu_core::gradcheck::{run_battery, BatteryConfig, GradCheckReport};
use carelu_core::network::{evaluate, train, EpochRecord, TrainConfig};
use carelu_core::telemetry::{self, LayerTelemetry};
use carelu_core::{Dataset, Error, Network, NetworkSpec, Normalizer, Targets};
use serde::Serialize;

use crate::config::{load_data_arg, RunConfig};
use crate::output::{num, opt, write_json, write_table};
use crate::CliError;

const MEAN_KEY: &str = "input.mean";
const STD_KEY: &str = "input.std";

/// Relabels a classification dataset with an explicit class count.
fn with_classes(data: Dataset, classes: usize) -> Result<Dataset, CliError> {
    let labels = data
        .labels()
        .ok_or_else(|| CliError::Config("expected a classification dataset".into()))?
        .to_vec();
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::Label { row, label, classes }.into());
    }
    Ok(Dataset::new(data.features, Targets::Classes { labels, classes }, data.split)?)
}

fn normalizer_tensors(norm: &Normalizer) -> Vec<NamedTensor> {
    vec![
        NamedTensor {
            name: MEAN_KEY.into(),
            shape: vec![norm.mean.len()],
            data: norm.mean.clone(),
        },
        NamedTensor {
            name: STD_KEY.into(),
            shape: vec![norm.std.len()],
            data: norm.std.clone(),
        },
    ]
}

fn stored_normalizer(ckpt: &Checkpoint, dim: usize) -> Result<Normalizer, CliError> {
    match (ckpt.get(MEAN_KEY), ckpt.get(STD_KEY)) {
        (Some(m), Some(s)) => {
            if m.data.len() != dim || s.data.len() != dim {
                return Err(Error::Checkpoint(format!(
                    "stored input normalization has {} features, network expects {dim}",
                    m.data.len()
                ))
                .into());
            }
            Ok(Normalizer {
                mean: m.data.clone(),
                std: s.data.clone(),
                warnings: Vec::new(),
            })
        }
        _ => Ok(Normalizer::identity(dim)),
    }
}

fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    write_csv(&mut bytes, data)?;
    write_atomic(path, &bytes)?;
    Ok(())
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", out.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub final_train_loss: f64,
    pub final_train_metric: f64,
    pub final_test_metric: Option<f64>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub snapshot: String,
    pub normalizer_warnings: Vec<String>,
}

fn metrics_rows(records: &[EpochRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                num(r.train_loss),
                num(r.train_metric),
                opt(r.test_metric),
                num(r.lr),
            ]
        })
        .collect()
}

const METRICS_HEADER: [&str; 5] = ["epoch", "train_loss", "train_acc", "test_acc", "lr"];

/// Trains per `config_path` and writes `metrics.csv`, `timing.csv`,
/// `best.ckpt`, `final.ckpt`, `report.json` and the raw data splits to `out`.
pub fn cmd_train(config_path: &Path, out: &Path, verbose: bool) -> Result<TrainSummary, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let activation = cfg.activation()?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let (train_raw, test_raw) = cfg.data.load(base)?;

    create_dir(out)?;
    write_dataset(&out.join("data_train.csv"), &train_raw)?;
    if let Some(t) = &test_raw {
        write_dataset(&out.join("data_test.csv"), t)?;
    }

    let norm = Normalizer::fit(&train_raw, cfg.normalize)?;
    for w in &norm.warnings {
        eprintln!("warning: {w}");
    }
    let classes = train_raw
        .classes()
        .max(test_raw.as_ref().and_then(|t| t.classes()))
        .ok_or_else(|| CliError::Config("data: expected class labels".into()))?;
    let train_set = with_classes(norm.apply(&train_raw)?, classes)?;
    let test_set = test_raw
        .as_ref()
        .map(|t| norm.apply(t).map_err(CliError::from).and_then(|d| with_classes(d, classes)))
        .transpose()?;
    if let Some(t) = &test_set {
        if t.dim() != train_set.dim() {
            return Err(CliError::Config(format!(
                "data: train has {} features, test has {}",
                train_set.dim(),
                t.dim()
            )));
        }
    }

    let spec = NetworkSpec {
        cas_epsilon: cfg.cas_epsilon,
        ..NetworkSpec::mlp(train_set.dim(), &cfg.hidden, classes, activation, cfg.loss, cfg.seed)
    };
    let mut net = Network::from_spec(spec)?;
    let tc = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        optimizer: cfg.optimizer,
        schedule: cfg.schedule.clone(),
        seed: cfg.seed,
    };
    let extras = normalizer_tensors(&norm);

    let mut records: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(f64, usize, Checkpoint)> = None;
    let result = train(&mut net, &train_set, test_set.as_ref(), &tc, |rec, net| {
        let score = rec.test_metric.unwrap_or(rec.train_metric);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, rec.epoch, Checkpoint::capture(net, extras.clone())));
        }
        if verbose {
            eprintln!(
                "epoch {:>4} lr {:<8} train_loss {:.6} train_acc {:.4} test_acc {}",
                rec.epoch,
                num(rec.lr),
                rec.train_loss,
                rec.train_metric,
                opt(rec.test_metric)
            );
        }
        records.push(rec.clone());
        Ok(())
    });

    let rows_for = |records: &[EpochRecord]| {
        if cfg.epochs == 0 {
            metrics_rows(records)
        } else {
            metrics_rows(records.get(1..).unwrap_or(&[]))
        }
    };
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            write_table(&out.join("metrics.csv"), &METRICS_HEADER, &rows_for(&records))?;
            return Err(e.into());
        }
    };
    write_table(&out.join("metrics.csv"), &METRICS_HEADER, &rows_for(&records))?;
    let timing: Vec<Vec<String>> = report
        .seconds
        .iter()
        .enumerate()
        .map(|(i, s)| vec![(i + 1).to_string(), num(*s)])
        .collect();
    write_table(&out.join("timing.csv"), &["epoch", "seconds"], &timing)?;

    let (best_metric, best_epoch, best_ckpt) = best.ok_or_else(|| CliError::Internal("no epoch recorded".into()))?;
    best_ckpt.save(&out.join("best.ckpt"))?;
    Checkpoint::capture(&net, extras).save(&out.join("final.ckpt"))?;

    let last = records.last().ok_or_else(|| CliError::Internal("no epoch recorded".into()))?;
    let summary = TrainSummary {
        epochs: cfg.epochs,
        final_train_loss: last.train_loss,
        final_train_metric: last.train_metric,
        final_test_metric: last.test_metric,
        best_epoch,
        best_metric,
        snapshot: report.snapshot,
        normalizer_warnings: norm.warnings.clone(),
    };
    write_json(&out.join("report.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub n: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// Loads a checkpoint and the data it should run on, normalized with the stored statistics.
fn load_model_and_data(ckpt: &Path, data: &Path, split: Split) -> Result<(Network, Dataset), CliError> {
    let ckpt = Checkpoint::load(ckpt)?;
    let net = ckpt.to_network()?;
    let dim = net
        .spec()
        .input_dim()
        .ok_or_else(|| Error::Checkpoint("network has no input layer".into()))?;
    let classes = net
        .spec()
        .output_dim()
        .ok_or_else(|| Error::Checkpoint("network has no output layer".into()))?;
    let raw = load_data_arg(data, split)?;
    if raw.is_empty() {
        return Err(CliError::Config("data: dataset is empty".into()));
    }
    if raw.dim() != dim {
        return Err(Error::Shape(format!(
            "checkpoint expects {dim} input features, data has {}",
            raw.dim()
        ))
        .into());
    }
    let norm = stored_normalizer(&ckpt, dim)?;
    let data = with_classes(norm.apply(&raw)?, classes)?;
    Ok((net, data))
}

pub fn cmd_eval(ckpt: &Path, data: &Path, split: Split, out: Option<&Path>) -> Result<EvalSummary, CliError> {
    let (net, data) = load_model_and_data(ckpt, data, split)?;
    let m = evaluate(&net, &data)?;
    let summary = EvalSummary {
        n: data.len(),
        loss: m.loss,
        accuracy: m.accuracy,
    };
    if let Some(path) = out {
        write_table(
            path,
            &["n", "loss", "accuracy"],
            &[vec![summary.n.to_string(), num(summary.loss), opt(summary.accuracy)]],
        )?;
    }
    Ok(summary)
}

/// Runs the battery and writes one CSV row per check. Failing checks are
/// reported by the caller; this only errors on invalid input.
pub fn cmd_gradcheck(
    config: Option<&Path>,
    tol: Option<f64>,
    points: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<Vec<GradCheckReport>, CliError> {
    let mut cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<BatteryConfig>(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => BatteryConfig::default(),
    };
    if let Some(t) = tol {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("--tol must be a non-negative number, got {t}")));
        }
        cfg.tol = t;
        cfg.network_tol = 10.0 * t;
    }
    if let Some(p) = points {
        cfg.points = p;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let reports = run_battery(&cfg)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.points.to_string(),
                r.coordinates.to_string(),
                r.failures.to_string(),
                num(r.max_rel_err),
                num(r.max_abs_err),
                r.argmax.0.to_string(),
                r.argmax.1.to_string(),
                num(r.worst.0),
                num(r.worst.1),
                num(r.step),
                num(r.tolerance),
                r.passed.to_string(),
            ]
        })
        .collect();
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_table(
        out,
        &[
            "check",
            "points",
            "coordinates",
            "failures",
            "max_rel_err",
            "max_abs_err",
            "worst_point",
            "worst_coord",
            "analytic",
            "numeric",
            "step",
            "tol",
            "passed",
        ],
        &rows,
    )?;
    Ok(reports)
}

/// Writes `telemetry.csv` and `hist_layer<k>.csv` (plus `samples_layer<k>.csv` with `dump`).
pub fn cmd_inspect(
    ckpt: &Path,
    data: &Path,
    split: Split,
    out: &Path,
    dump: bool,
) -> Result<Vec<LayerTelemetry>, CliError> {
    let (net, data) = load_model_and_data(ckpt, data, split)?;
    if net.cas_layers().is_empty() {
        return Err(CliError::Config("checkpoint has no CAS layers to inspect".into()));
    }
    let layers = telemetry::collect(&net, &data.features, dump)?;
    create_dir(out)?;
    let rows: Vec<Vec<String>> = layers
        .iter()
        .map(|l| vec![l.ordinal.to_string(), num(l.mean), num(l.std), l.n.to_string()])
        .collect();
    write_table(&out.join("telemetry.csv"), &["layer", "mean", "std", "n"], &rows)?;
    for l in &layers {
        let h = &l.histogram;
        let rows: Vec<Vec<String>> = h
            .counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![num(h.edges[i]), num(h.edges[i + 1]), c.to_string()])
            .collect();
        write_table(
            &out.join(format!("hist_layer{}.csv", l.ordinal)),
            &["bin_lo", "bin_hi", "count"],
            &rows,
        )?;
        if let Some(samples) = &l.samples {
            let rows: Vec<Vec<String>> = samples
                .iter()
                .enumerate()
                .map(|(i, u)| vec![i.to_string(), num(*u), num(u.tanh())])
                .collect();
            write_table(
                &out.join(format!("samples_layer{}.csv", l.ordinal)),
                &["sample", "u", "tanh_u"],
                &rows,
            )?;
        }
    }
    Ok(layers)
}
