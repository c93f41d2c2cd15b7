use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pcbf::config::{EnvKind, ExperimentConfig};
use pcbf::io::read_dataset;
use serde_json::{json, Value};

fn run(args: &[&str], config: &Value, out: &Path) -> Output {
    let cfg_path = out.with_extension("json");
    fs::write(&cfg_path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    let cache = out.parent().unwrap().join("cache");
    Command::new(env!("CARGO_BIN_EXE_pcbf"))
        .args(args)
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(out)
        .env("PCBF_CACHE_DIR", &cache)
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn small(kind: &str, size: usize) -> Value {
    json!({
        "env": {"kind": kind},
        "dataset_size": size,
        "eval": {"oracle_rollouts": 2000, "n_samples": 500, "cdf_points": 64},
        "train": {"total_steps": 200, "eval_every": 100, "eval_samples": 500, "batch_size": 32},
        "residual": {"n_samples": 300},
    })
}

#[test]
fn datasets_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("discrete_mc", 5000);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run(&["gen-data"], &cfg, &a));
    ok(&run(&["gen-data"], &cfg, &b));
    let da = fs::read(a.join("dataset.csv")).unwrap();
    assert_eq!(da, fs::read(b.join("dataset.csv")).unwrap());

    let c = dir.path().join("c");
    ok(&run(&["gen-data", "--seed", "9"], &cfg, &c));
    assert_ne!(da, fs::read(c.join("dataset.csv")).unwrap());
    let echoed: ExperimentConfig = serde_json::from_slice(&fs::read(c.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed.seeds, vec![9]);
}

#[test]
fn dataset_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small("discrete_mc", 3000);
    ok(&run(&["gen-data"], &cfg, &out));
    let parsed: ExperimentConfig = serde_json::from_value(cfg).unwrap();
    let mrp = parsed.env.mrp().unwrap();
    let expected = pcbf::commands::make_dataset(&parsed, &mrp, 0).unwrap();
    assert_eq!(read_dataset(&out.join("dataset.csv")).unwrap(), expected);
}

#[test]
fn done_rates_match_the_environments() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b");
    ok(&run(&["gen-data"], &small("bernoulli", 20_000), &b));
    let data = read_dataset(&b.join("dataset.csv")).unwrap();
    assert_eq!(data.len(), 20_000);
    assert!(data.iter().all(|t| !t.done));

    let s = dir.path().join("s");
    ok(&run(&["gen-data"], &small("solitaire", 20_000), &s));
    let data = read_dataset(&s.join("dataset.csv")).unwrap();
    let rate = data.iter().filter(|t| t.done).count() as f64 / data.len() as f64;
    assert!((rate - 1.0 / 6.0).abs() <= 0.01, "done rate {rate}");
}

#[test]
fn empty_sweep_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep"], &small("bernoulli", 1000), &dir.path().join("run"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep"));
}

#[test]
fn bad_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["gen-data"], &json!({"seeds": [1, 1]}), &out);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["gen-data"], &json!({"trian": {}}), &out);
    assert!(!o.status.success());
    let o = run(&["gen-data"], &json!({"train": {"tau": 0.0}}), &out);
    assert!(!o.status.success());
}

#[test]
fn sabotaged_kappa_fails_verify_theory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = json!({"theory": {
        "gaussian_samples": 100000, "contraction_seeds": 2000, "generator_pairs": 2,
        "sensitivity_cases": 10, "negate_kappa": true,
    }});
    let o = run(&["verify-theory"], &cfg, &out);
    assert!(!o.status.success());
    let report: Value = serde_json::from_slice(&fs::read(out.join("theory_report.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], false);
    let kappa: Vec<&Value> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["name"] == "kappa_regression")
        .collect();
    assert_eq!(kappa.len(), 6);
    for c in kappa {
        assert_eq!(c["pass"], false);
        let rel = c["estimate"]["rel_error"].as_f64().unwrap();
        assert!((rel - 2.0).abs() < 0.3, "rel_error {rel}");
    }
}

fn trained(dir: &Path, kind: &str) -> std::path::PathBuf {
    let out = dir.join("run");
    let cfg = small(kind, 4000);
    ok(&run(&["gen-data"], &cfg, &out));
    ok(&run(&["train"], &cfg, &out));
    out
}

#[test]
fn train_writes_metrics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path(), "solitaire");
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next().unwrap(), "step,loss,loss_std,w1_s0");
    assert_eq!(lines.count(), 200);
    for step in [100, 200] {
        assert!(out.join(format!("checkpoints/step_{step:08}.json")).exists());
    }
    let summary: Value = serde_json::from_slice(&fs::read(out.join("train_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["steps"], 200);
    assert!(summary["mean_w1"].as_f64().unwrap().is_finite());
}

#[test]
fn eval_emits_monotone_cdfs() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path(), "bernoulli");
    ok(&run(&["eval"], &small("bernoulli", 4000), &out));
    let mut rdr = csv::Reader::from_path(out.join("cdf_s0.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["x", "F_learned", "F_truth"]);
    let rows: Vec<[f64; 3]> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            [0, 1, 2].map(|i| r[i].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 64);
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0]);
        assert!(w[1][1] >= w[0][1] && w[1][2] >= w[0][2]);
    }
    let last = rows.last().unwrap();
    assert_eq!(last[1], 1.0);
    assert_eq!(last[2], 1.0);
    let report: Value = serde_json::from_slice(&fs::read(out.join("eval.json")).unwrap()).unwrap();
    assert!(report["mean_w1"].as_f64().unwrap() >= 0.0);
}

#[test]
fn residual_grid_has_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path(), "solitaire");
    ok(&run(&["residual"], &small("solitaire", 4000), &out));
    for coupling in ["shared", "independent"] {
        let mut rdr = csv::Reader::from_path(out.join(format!("residual_{coupling}.csv"))).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["t", "nfe", "stop_time", "r_corr", "ci95"]);
        let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 16);
        for r in &rows {
            let stop: f64 = r[2].parse().unwrap();
            let t: f64 = r[0].parse().unwrap();
            assert!(stop <= t + 1e-12);
        }
    }
    let report: Value = serde_json::from_slice(&fs::read(out.join("residual.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 16);
    assert_eq!(report["cells"][0]["shared"].as_f64().unwrap(), 0.0);
}

#[test]
fn env_kinds_parse() {
    let cfg: ExperimentConfig = serde_json::from_value(json!({"env": {"kind": "discrete_mc", "n_states": 9}})).unwrap();
    assert_eq!(cfg.env.kind, EnvKind::DiscreteMc);
    assert_eq!(cfg.env.mrp().unwrap().n_states(), 9);
}
