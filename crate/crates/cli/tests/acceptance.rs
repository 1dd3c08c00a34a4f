//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use carelu_cli::{cmd_train, CliError};
use carelu_core::activations::{cas_forward, cas_init, CasParams};
use carelu_core::batchnorm::{bn_carelu_forward, BnState};
use carelu_core::gradcheck::{central_diff, run_battery, BatteryConfig, GradCheckReport};
use carelu_core::indicators::{indicator_forward, CompetitionKind, DEFAULT_EPSILON};
use carelu_core::network::{LossKind, Network, NetworkSpec};
use carelu_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type RunResult = (&'static str, u64, Result<(f64, f64), String>);
type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_carelu")
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(bin()).args(args).output().expect("failed to launch carelu")
}

fn random_row(rng: &mut ChaCha8Rng, d: usize, zero_free: bool) -> Vec<f64> {
    (0..d)
        .map(|_| loop {
            let v: f64 = rng.random_range(-3.0..3.0);
            if !zero_free || v != 0.0 {
                break v;
            }
        })
        .collect()
}

fn row(v: &[f64]) -> Tensor {
    Tensor::new(vec![1, v.len()], v.to_vec()).unwrap()
}

fn ac1_gradient_fidelity() -> Outcome {
    let started = Instant::now();
    let reports = match run_battery(&BatteryConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("battery error: {e}")),
    };
    let elapsed = started.elapsed();
    let failed: Vec<&GradCheckReport> = reports.iter().filter(|r| !r.passed).collect();
    for r in &failed {
        println!(
            "      {} max_rel_err {:.3e} max_abs_err {:.3e}, {}/{} coordinates over {:e}; worst analytic {:e} vs numeric {:e}",
            r.name, r.max_rel_err, r.max_abs_err, r.failures, r.coordinates, r.tolerance, r.worst.0, r.worst.1
        );
    }
    let fast = elapsed <= Duration::from_secs(60);
    outcome(
        failed.is_empty() && fast,
        format!(
            "{}/{} checks pass at 1000 points each, {:.1}s (limit 60s)",
            reports.len() - failed.len(),
            reports.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn ac2_identity_at_init() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for kind in CompetitionKind::ALL {
        let params = cas_init(kind);
        for _ in 0..1000 {
            let d = rng.random_range(1..=16);
            let z = row(&random_row(&mut rng, d, false));
            let (y, _) = cas_forward(&params, &z).unwrap();
            for (a, b) in y.data().iter().zip(z.data()) {
                let rel = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
            }
        }
    }
    let mut bitwise = true;
    for act in ["carelu_e", "carelu_l1", "carelu_c"] {
        for seed in 0..3 {
            let mk = |a: &str| {
                Network::from_spec(NetworkSpec::mlp(
                    2,
                    &[16, 16],
                    3,
                    a.parse().unwrap(),
                    LossKind::CrossEntropy,
                    seed,
                ))
                .unwrap()
            };
            let (ca, re) = (mk(act), mk("relu"));
            let x = Tensor::new(vec![64, 2], (0..128).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let a: Vec<u64> = ca.forward_eval(&x).unwrap().data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = re.forward_eval(&x).unwrap().data().iter().map(|v| v.to_bits()).collect();
            bitwise &= a == b;
        }
    }
    outcome(
        worst <= 1e-12 && bitwise,
        format!("max relative |CAS(z)−z| {worst:e} over 3000 inputs; CAReLU vs ReLU network outputs bit-identical: {bitwise}"),
    )
}

fn ac3_constant_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ok = true;
    let mut cases = 0;
    for kind in CompetitionKind::ALL {
        for _ in 0..500 {
            let beta = rng.random_range(-3.0..3.0);
            let params = CasParams::with(kind, 0.0, beta);
            let expected = params.k * beta.tanh();
            let d = rng.random_range(1..=12);
            let z = random_row(&mut rng, d, false);
            let mut perm: Vec<f64> = z.iter().map(|&v| if rng.random_bool(0.5) { -v } else { v }).collect();
            perm.reverse();
            let (y1, c1) = cas_forward(&params, &row(&z)).unwrap();
            let (y2, c2) = cas_forward(&params, &row(&perm)).unwrap();
            ok &= c1.scale[0].to_bits() == expected.to_bits() && c2.scale[0].to_bits() == expected.to_bits();
            ok &= y1.data().iter().zip(&z).all(|(y, v)| y.to_bits() == (expected * v).to_bits());
            ok &= y2.data().iter().zip(&perm).all(|(y, v)| y.to_bits() == (expected * v).to_bits());
            cases += 1;
        }
    }
    outcome(ok, format!("{cases} (kind, β, z, sign-flipped permutation) cases, scale equal to K·tanh(β) bit for bit"))
}

fn ac4_indicator_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = DEFAULT_EPSILON;
    // Floating-point allowance on top of the ε-induced slack.
    let rounding = 8.0 * f64::EPSILON;
    let mut violations = Vec::new();
    for kind in CompetitionKind::ALL {
        let mut bad = 0;
        for _ in 0..10_000 {
            let d = rng.random_range(1..=16);
            let z = random_row(&mut rng, d, true);
            let neg: Vec<f64> = z.iter().map(|v| -v).collect();
            let c = 10f64.powf(rng.random_range(-2.0..2.0));
            let scaled: Vec<f64> = z.iter().map(|v| c * v).collect();
            let fwd = indicator_forward(kind, &row(&z), eps).unwrap();
            let fwd_neg = indicator_forward(kind, &row(&neg), eps).unwrap();
            let (p, pn) = (fwd.p[0], fwd_neg.p[0]);
            let pc = indicator_forward(kind, &row(&scaled), eps).unwrap().p[0];
            let total = |v: &[f64]| match kind {
                CompetitionKind::Energy => v.iter().map(|x| x * x).sum::<f64>(),
                CompetitionKind::L1 => v.iter().map(|x| x.abs()).sum::<f64>(),
                CompetitionKind::Count => f64::INFINITY,
            };
            let (t, tc) = (total(&z), total(&scaled));
            let in_range = [p, pn, pc].iter().all(|v| (0.0..=1.0).contains(v));
            let (anti, homog) = if kind == CompetitionKind::Count {
                // The counts are exact; (d−k)/d and 1 − k/d may round one ulp apart.
                let counts = fwd_neg.positive[0] == fwd.total[0] - fwd.positive[0];
                (counts && (pn - (1.0 - p)).abs() <= f64::EPSILON, pc == p)
            } else {
                (
                    (pn - (1.0 - p)).abs() <= eps / t + rounding,
                    (pc - p).abs() <= eps / t.min(tc) + rounding,
                )
            };
            if !(in_range && anti && homog) {
                bad += 1;
            }
        }
        if bad > 0 {
            violations.push(format!("{kind:?}: {bad} rows"));
        }
    }
    outcome(
        violations.is_empty(),
        if violations.is_empty() {
            "range, sign antisymmetry and scale invariance hold on 10,000 rows per kind".to_string()
        } else {
            format!("violations: {}", violations.join(", "))
        },
    )
}

const SPIRAL_ACTIVATIONS: [&str; 9] = [
    "relu",
    "leaky_relu",
    "prelu",
    "swish1",
    "swish",
    "carelu_e",
    "carelu_l1",
    "carelu_c",
    "bn_carelu_e",
];

fn spiral_config(activation: &str, seed: u64, epochs: usize) -> String {
    format!(
        r#"{{
  "data": {{"spirals": {{"n_per_class": 200, "turns": 1.5, "noise": 0.02, "seed": 1000}}}},
  "hidden": [32, 32],
  "activation": "{activation}",
  "optimizer": {{"kind": "sgd", "lr": 0.1, "momentum": 0.9, "weight_decay": 0.0005}},
  "schedule": [{{"epoch": 150, "divisor": 5}}, {{"epoch": 250, "divisor": 5}}],
  "epochs": {epochs},
  "batch_size": 32,
  "seed": {seed},
  "normalize": "standardize"
}}
"#
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn ac5_spirals() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let jobs: Vec<(&'static str, u64)> = SPIRAL_ACTIVATIONS
        .iter()
        .flat_map(|&a| (0..5).map(move |s| (a, s)))
        .collect();
    let results: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(act, seed)| {
            let cfg = write_config(dir.path(), &format!("{act}_{seed}.json"), &spiral_config(act, seed, 300));
            let out = dir.path().join(format!("{act}_{seed}"));
            let r = match cmd_train(&cfg, &out, false) {
                Ok(s) => Ok((s.final_train_metric, s.final_test_metric.unwrap())),
                Err(CliError::Core(e)) => Err(e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            (act, seed, r)
        })
        .collect();
    let elapsed = started.elapsed();
    let mut all_converge = true;
    let test_mean = |act: &str| -> f64 {
        let accs: Vec<f64> = results
            .iter()
            .filter(|r| r.0 == act)
            .map(|r| r.2.as_ref().map(|v| v.1).unwrap_or(0.0))
            .collect();
        accs.iter().sum::<f64>() / accs.len() as f64
    };
    let relu_mean = test_mean("relu");
    let carelu_mean = test_mean("carelu_e");
    for act in SPIRAL_ACTIVATIONS {
        let runs: Vec<&RunResult> = results.iter().filter(|r| r.0 == act).collect();
        let converged = runs.iter().filter(|r| matches!(r.2, Ok((tr, _)) if tr >= 0.95)).count();
        let cells: Vec<String> = runs
            .iter()
            .map(|r| match &r.2 {
                Ok((tr, te)) => format!("{:.1}/{:.1}", 100.0 * tr, 100.0 * te),
                Err(_) => "diverged".into(),
            })
            .collect();
        let ok = converged >= 4;
        all_converge &= ok;
        println!(
            "      {:<12} {} train≥95%: {}/5  train/test %: {}",
            act,
            if ok { "ok  " } else { "FAIL" },
            converged,
            cells.join(" ")
        );
        for r in runs {
            if let Err(e) = &r.2 {
                println!("        seed {}: {e}", r.1);
            }
        }
    }
    let non_harm = carelu_mean >= relu_mean - 0.02;
    let fast = elapsed <= Duration::from_secs(300);
    outcome(
        all_converge && non_harm && fast,
        format!(
            "(a) all activations converge on ≥4/5 seeds: {all_converge}; (b) CAReLU_E mean test {:.2}% vs ReLU {:.2}% (need ≥ ReLU − 2pp): {non_harm}; {:.1}s (limit 300s)",
            100.0 * carelu_mean,
            100.0 * relu_mean,
            elapsed.as_secs_f64()
        ),
    )
}

fn read_csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn ac6_telemetry() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut problems = Vec::new();
    let init_cfg = write_config(d, "init.json", &spiral_config("carelu_e", 7, 0).replace("[32, 32]", "[32, 32, 32, 32]"));
    let train_out = d.join("init");
    let st = run_cli(&["train", "--config", init_cfg.to_str().unwrap(), "--out", train_out.to_str().unwrap()]);
    if !st.status.success() {
        return outcome(false, format!("train failed: {}", String::from_utf8_lossy(&st.stderr)));
    }
    let insp = d.join("init_inspect");
    let ckpt = train_out.join("final.ckpt");
    let st = run_cli(&[
        "inspect",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        init_cfg.to_str().unwrap(),
        "--out",
        insp.to_str().unwrap(),
    ]);
    if !st.status.success() {
        return outcome(false, format!("inspect failed: {}", String::from_utf8_lossy(&st.stderr)));
    }
    let rows = read_csv_rows(&insp.join("telemetry.csv"));
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    for r in &rows {
        let mean: f64 = r[1].parse().unwrap();
        let std: f64 = r[2].parse().unwrap();
        worst_mean = worst_mean.max((mean - 1f64.tanh()).abs());
        worst_std = worst_std.max(std);
    }
    if rows.len() != 4 || worst_mean > 1e-9 || worst_std > 1e-12 {
        problems.push(format!(
            "init: {} layers, |mean − tanh 1| ≤ {worst_mean:e}, std ≤ {worst_std:e}",
            rows.len()
        ));
    }

    let mut trained_layers = 0;
    for act in ["carelu_e", "carelu_l1", "carelu_c", "bn_carelu_e"] {
        let cfg = write_config(d, &format!("{act}.json"), &spiral_config(act, 1, 60));
        let out = d.join(act);
        let st = run_cli(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        if !st.status.success() {
            problems.push(format!("{act}: train failed"));
            continue;
        }
        let insp = out.join("inspect");
        let st = run_cli(&[
            "inspect",
            "--ckpt",
            out.join("best.ckpt").to_str().unwrap(),
            "--data",
            out.join("data_test.csv").to_str().unwrap(),
            "--out",
            insp.to_str().unwrap(),
        ]);
        if !st.status.success() {
            problems.push(format!("{act}: inspect failed"));
            continue;
        }
        for r in read_csv_rows(&insp.join("telemetry.csv")) {
            trained_layers += 1;
            let mean: f64 = r[1].parse().unwrap();
            let n: u64 = r[3].parse().unwrap();
            let hist: u64 = read_csv_rows(&insp.join(format!("hist_layer{}.csv", r[0])))
                .iter()
                .map(|h| h[2].parse::<u64>().unwrap())
                .sum();
            if !(mean > -1.0 && mean < 1.0) || n != 400 || hist != 400 {
                problems.push(format!("{act} layer {}: mean {mean}, n {n}, histogram total {hist}", r[0]));
            }
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "init: 4 layers at tanh(1) (max dev {worst_mean:e}, max std {worst_std:e}); trained: {trained_layers} layers, histograms total 400, means in (−1, 1)"
            )
        } else {
            problems.join("; ")
        },
    )
}

fn ac7_batchnorm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut notes = Vec::new();
    let mut ok = true;

    // Normalization statistics. The BN ε shrinks the variance to σ²/(σ²+ε);
    // features here have σ ≥ 4, so the shrinkage stays below 1e-6.
    let (n, d) = (64, 6);
    let scales: Vec<f64> = (0..d).map(|_| rng.random_range(4.0..40.0)).collect();
    let shifts: Vec<f64> = (0..d).map(|_| rng.random_range(-100.0..100.0)).collect();
    let x: Vec<f64> = (0..n * d)
        .map(|k| shifts[k % d] + scales[k % d] * rng.random_range(-1.7..1.7))
        .collect();
    let x = Tensor::new(vec![n, d], x).unwrap();
    let mut bn = BnState::new(d);
    let (_, cache) = bn.forward_train(&x).unwrap();
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for j in 0..d {
        let col: Vec<f64> = (0..n).map(|i| cache.xhat.row(i)[j]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        worst_mean = worst_mean.max(mean.abs());
        worst_var = worst_var.max((var - 1.0).abs());
    }
    ok &= worst_mean <= 1e-10 && worst_var <= 1e-6;
    notes.push(format!("|mean| ≤ {worst_mean:.1e}, |var−1| ≤ {worst_var:.1e}"));

    // Backward against central differences of Σ c·BN(x).
    let mut worst_fd = 0.0f64;
    for _ in 0..100 {
        let x = Tensor::new(vec![4, 3], (0..12).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let c: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut bn = BnState::new(3);
        bn.gamma = (0..3).map(|_| rng.random_range(0.5..1.5)).collect();
        bn.shift = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (_, cache) = bn.clone().forward_train(&x).unwrap();
        let g = bn.backward(&cache, &Tensor::new(vec![4, 3], c.clone()).unwrap()).unwrap();
        let numeric = central_diff(
            |v| {
                let (y, _) = bn.clone().forward_train(&Tensor::new(vec![4, 3], v.to_vec()).unwrap())?;
                Ok(y.data().iter().zip(&c).map(|(a, b)| a * b).sum())
            },
            x.data(),
            1e-5,
        )
        .unwrap();
        let r = carelu_core::gradcheck::check(g.grad_x.data(), &numeric, 1e-5).unwrap();
        worst_fd = worst_fd.max(r.max_rel_err);
    }
    ok &= worst_fd <= 1e-5;
    notes.push(format!("bn_backward vs finite differences max rel err {worst_fd:.2e} over 100 batches"));

    // CAS → BN → ReLU on the hand-computed 2×2 case.
    let z = Tensor::new(vec![2, 2], vec![2.0, -1.0, 1.0, 3.0]).unwrap();
    let cas = CasParams::with(CompetitionKind::Energy, 1.0, 0.0);
    let (y, _) = bn_carelu_forward(&cas, &mut BnState::new(2), &z).unwrap();
    let expected = [0.999_963_851_903_293_1, 0.0, 0.0, 0.999_998_665_925_661_2];
    let order_ok = y.data().iter().zip(expected).all(|(a, b)| (a - b).abs() <= 1e-12);
    ok &= order_ok;
    notes.push(format!("2×2 CAS→BN→ReLU regression: {order_ok}"));
    outcome(ok, notes.join("; "))
}

fn ac8_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut same = true;
    let mut compared = Vec::new();
    for act in ["carelu_e", "bn_carelu_l1", "swish"] {
        let cfg = write_config(d, &format!("{act}.json"), &spiral_config(act, 11, 25));
        let runs: Vec<PathBuf> = (0..2)
            .map(|i| {
                let out = d.join(format!("{act}_{i}"));
                let st = run_cli(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
                assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
                out
            })
            .collect();
        for file in ["metrics.csv", "best.ckpt", "final.ckpt"] {
            let a = std::fs::read(runs[0].join(file)).unwrap();
            let b = std::fs::read(runs[1].join(file)).unwrap();
            same &= a == b;
        }
        compared.push(act);
    }
    outcome(
        same,
        format!("two CLI runs each for {} give byte-identical metrics.csv, best.ckpt, final.ckpt", compared.join(", ")),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("AC1 gradient fidelity", ac1_gradient_fidelity),
        ("AC2 identity at initialization", ac2_identity_at_init),
        ("AC3 constant scaling at α = 0", ac3_constant_scaling),
        ("AC4 indicator laws", ac4_indicator_laws),
        ("AC5 spirals training analog", ac5_spirals),
        ("AC6 telemetry contract", ac6_telemetry),
        ("AC7 batch norm correctness", ac7_batchnorm),
        ("AC8 determinism", ac8_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let started = Instant::now();
        let r = f();
        if !r.passed {
            failed += 1;
        }
        println!(
            "[{}] {name}: {} ({:.1}s)",
            if r.passed { "PASS" } else { "FAIL" },
            r.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
