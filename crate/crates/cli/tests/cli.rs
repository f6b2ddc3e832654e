use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn survgame(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survgame"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn err(out: &Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn write_config(dir: &Path, cfg: Value) -> String {
    let p = dir.join("config.json");
    fs::write(&p, cfg.to_string()).unwrap();
    p.display().to_string()
}

fn marginal(extra: Value) -> Value {
    let mut base = json!({
        "name": "m",
        "data": {"source": "marginal", "theta_t": [0.2, 0.3, 0.5], "theta_c": [0.3, 0.3, 0.4]},
        "n_bins": 3,
        "n_train": 120,
        "n_validation": 40,
        "n_test": 60,
        "seeds": [0],
        "train": {"epochs": 4, "batch_size": 32, "model": {"kind": "marginal"}, "objective": "bs-game"}
    });
    for (k, v) in extra.as_object().unwrap() {
        base[k] = v.clone();
    }
    base
}

fn small_gamma() -> Value {
    json!({
        "name": "g",
        "data": {"source": "gamma"},
        "n_bins": 5,
        "n_train": 60,
        "n_validation": 30,
        "n_test": 30,
        "seeds": [3]
    })
}

fn header(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .next()
        .unwrap()
        .split(',')
        .map(String::from)
        .collect()
}

#[test]
fn gamma_simulation_has_32_feature_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), small_gamma());
    ok(&survgame(&["simulate", "--config", &cfg], tmp.path()));
    let h = header(&tmp.path().join("out/g/3/train.csv"));
    assert_eq!(h.len(), 34);
    assert_eq!(h[31], "f31");
    assert_eq!(
        header(&tmp.path().join("out/g/3/train_latent.csv")),
        ["t_latent", "c_latent"]
    );
}

#[test]
fn marginal_simulation_has_no_feature_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), marginal(json!({})));
    ok(&survgame(&["simulate", "--config", &cfg], tmp.path()));
    assert_eq!(
        header(&tmp.path().join("out/m/0/test.csv")),
        ["time", "event"]
    );
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), small_gamma());
    ok(&survgame(
        &["simulate", "--config", &cfg, "--out", "a"],
        tmp.path(),
    ));
    ok(&survgame(
        &["simulate", "--config", &cfg, "--out", "b"],
        tmp.path(),
    ));
    for f in [
        "train.csv",
        "validation.csv",
        "test.csv",
        "test_latent.csv",
        "bin_edges.json",
    ] {
        let a = fs::read(tmp.path().join("a/g/3").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b/g/3").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn train_accepts_the_three_objectives_only() {
    let tmp = TempDir::new().unwrap();
    for objective in ["nll", "bs-game", "bll-game"] {
        let mut c = marginal(json!({}));
        c["train"]["objective"] = json!(objective);
        let cfg = write_config(tmp.path(), c);
        ok(&survgame(
            &["train", "--config", &cfg, "--name", objective],
            tmp.path(),
        ));
    }
    let mut c = marginal(json!({}));
    c["train"]["objective"] = json!("auc-game");
    let cfg = write_config(tmp.path(), c);
    let e = err(&survgame(&["train", "--config", &cfg], tmp.path()));
    assert_eq!(e["kind"], "json");
}

#[test]
fn selection_without_validation_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), marginal(json!({"n_validation": 0})));
    let e = err(&survgame(&["train", "--config", &cfg], tmp.path()));
    assert_eq!(e["kind"], "invalid_config");
    let cfg = write_config(
        tmp.path(),
        marginal(json!({"n_validation": 0, "select": false})),
    );
    ok(&survgame(&["train", "--config", &cfg], tmp.path()));
}

#[test]
fn train_log_has_one_line_per_epoch_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), marginal(json!({})));
    ok(&survgame(
        &["train", "--config", &cfg, "--out", "a"],
        tmp.path(),
    ));
    ok(&survgame(
        &["train", "--config", &cfg, "--out", "b"],
        tmp.path(),
    ));
    let log = fs::read_to_string(tmp.path().join("a/m/0/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in [
        "epoch",
        "loss_F",
        "loss_G",
        "clamp_count",
        "grad_norm_F",
        "grad_norm_G",
    ] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    for f in [
        "train_log.jsonl",
        "failure.json",
        "censor.json",
        "selection.json",
    ] {
        assert_eq!(
            fs::read(tmp.path().join("a/m/0").join(f)).unwrap(),
            fs::read(tmp.path().join("b/m/0").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn evaluate_labels_weightings_distinctly() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), marginal(json!({"seeds": [0, 1]})));
    ok(&survgame(&["train", "--config", &cfg], tmp.path()));
    let u = ok(&survgame(&["evaluate", "--config", &cfg], tmp.path()));
    let cfg = write_config(
        tmp.path(),
        marginal(json!({"seeds": [0, 1], "weighting": "km"})),
    );
    let k = ok(&survgame(&["evaluate", "--config", &cfg], tmp.path()));
    assert_eq!(u["summary"]["weighting"], "uncensored-latent");
    assert_eq!(k["summary"]["weighting"], "km");
    assert!(u["summary"]["bs_sum"]["std"].is_number());
    let seed_dir = tmp.path().join("out/m/1");
    assert!(seed_dir.join("report_uncensored-latent.json").exists());
    assert!(seed_dir.join("report_km.json").exists());
    assert_eq!(
        header(&seed_dir.join("calibration.csv")),
        ["alpha", "observed"]
    );
}

#[test]
fn evaluate_without_checkpoint_fails_with_json() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), marginal(json!({})));
    let e = err(&survgame(&["evaluate", "--config", &cfg], tmp.path()));
    assert_eq!(e["kind"], "io");
    assert!(e["error"].is_string());
}

#[test]
fn default_gradient_field_has_one_zero_cell_at_truth() {
    let tmp = TempDir::new().unwrap();
    let v = ok(&survgame(&["gradient-field"], tmp.path()));
    assert_eq!(v["zero_cells"].as_array().unwrap().len(), 1);
    assert_eq!(v["truth_in_zero_cell"], true);
    assert_eq!(
        header(&tmp.path().join("out/gamma/gradient_field.csv")),
        ["x", "y", "u", "v"]
    );
}

#[test]
fn joint_scan_minimum_is_off_truth_and_lower() {
    let tmp = TempDir::new().unwrap();
    let v = ok(&survgame(&["joint-scan"], tmp.path()));
    assert_eq!(v["argmin_below_truth"], true);
    assert!(v["min_value"].as_f64().unwrap() < v["truth_value"].as_f64().unwrap());
    assert_ne!(v["argmin"], v["truth"]);
}

#[test]
fn k4_stationary_check_returns_one_root() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        json!({"oracle": {"theta_t": [0.1, 0.2, 0.3, 0.4], "theta_c": [0.25, 0.25, 0.3, 0.2], "starts": 30}}),
    );
    let v = ok(&survgame(
        &["stationary-check", "--config", &cfg],
        tmp.path(),
    ));
    let roots = v["roots"].as_array().unwrap();
    assert_eq!(roots.len(), 1);
    for (a, b) in roots[0]
        .as_array()
        .unwrap()
        .iter()
        .zip(v["truth"].as_array().unwrap())
    {
        assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-8);
    }
}

#[test]
fn sweep_emits_one_report_per_point_and_a_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        json!({"sweep": {
            "name": "s",
            "simulation": {"feature_dim": 3},
            "n_bins": 4,
            "train_sizes": [40, 60],
            "n_validation": 20,
            "n_test": 20,
            "seeds": [0, 1],
            "objectives": ["nll", "bs-game"],
            "train": {"epochs": 2, "batch_size": 16, "model": {"kind": "mlp", "hidden": [4]}}
        }}),
    );
    let v = ok(&survgame(&["sweep", "--config", &cfg], tmp.path()));
    assert_eq!(v["runs"], 8);
    for seed in ["0", "1"] {
        for f in [
            "nll_n40.json",
            "nll_n60.json",
            "bs-game_n40.json",
            "bs-game_n60.json",
        ] {
            assert!(
                tmp.path().join("out/s").join(seed).join(f).exists(),
                "{seed}/{f}"
            );
        }
    }
    let csv = fs::read_to_string(tmp.path().join("out/s/summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("objective,n_train,bs_mean,bs_std"));
}

#[test]
fn unknown_subcommand_reports_usage_error() {
    let tmp = TempDir::new().unwrap();
    let e = err(&survgame(&["frobnicate"], tmp.path()));
    assert_eq!(e["kind"], "usage");
}
