use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsmnet"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "lsmnet {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulation_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    ok(&["simulate-network", "--seed", "9", "--out", p(&a)]);
    ok(&["simulate-network", "--seed", "9", "--out", p(&b)]);
    ok(&["simulate-network", "--seed", "10", "--out", p(&c)]);
    let edges = |d: &Path| std::fs::read(d.join("edges.csv")).unwrap();
    assert_eq!(edges(&a), edges(&b));
    assert_ne!(edges(&a), edges(&c));
}

#[test]
fn default_network_is_twenty_by_twenty() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("net");
    ok(&["simulate-network", "--out", p(&out)]);
    let rows = |f: &str| {
        std::fs::read_to_string(out.join(f))
            .unwrap()
            .lines()
            .count()
            - 1
    };
    assert_eq!(rows("donor_nodes.csv"), 20);
    assert_eq!(rows("recipient_nodes.csv"), 20);
    assert_eq!(rows("edges.csv"), 400);
    let truth = json(&out.join("truth.json"));
    assert_eq!(truth["z_d"].as_array().unwrap().len(), 20);
    assert_eq!(truth["z_d"][0].as_array().unwrap().len(), 2);
}

#[test]
fn invalid_settings_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(
        run(&["simulate-network", "--sigma-w", "0", "--out", p(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["simulate-network", "--threads", "0", "--out", p(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn missing_input_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let code = run(&["fit", "--network", p(&missing), "--out", p(tmp.path())])
        .status
        .code();
    assert_eq!(code, Some(1));
}

#[test]
fn raw_scored_against_itself_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("net");
    let fit = tmp.path().join("fit");
    ok(&["simulate-network", "--out", p(&net)]);
    ok(&[
        "fit",
        "--network",
        p(&net),
        "--method",
        "raw",
        "--out",
        p(&fit),
    ]);
    let m = json(&fit.join("metrics.json"));
    let report = &m["per_dim"][0]["report"];
    assert_eq!(report["rmse"].as_f64().unwrap(), 0.0);
    assert_eq!(report["sign_accuracy"].as_f64().unwrap(), 1.0);
    assert!(!fit.join("model.json").exists());
}

#[test]
fn dimension_grid_selects_best_log_probability() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("net");
    let fit = tmp.path().join("fit");
    ok(&["simulate-network", "--holdout", "--out", p(&net)]);
    ok(&[
        "fit",
        "--network",
        p(&net),
        "--test",
        p(&net.join("holdout")),
        "--dim-grid",
        "1,2,3",
        "--allow-nonconverged",
        "--out",
        p(&fit),
    ]);
    let m = json(&fit.join("metrics.json"));
    let dims = m["per_dim"].as_array().unwrap();
    assert_eq!(dims.len(), 3);
    let best = dims
        .iter()
        .max_by(|a, b| {
            let lp = |d: &Value| d["report"]["mean_log_prob"].as_f64().unwrap();
            lp(a).total_cmp(&lp(b))
        })
        .unwrap();
    assert_eq!(m["selected_dim"], best["dim"]);
    assert!(fit.join("model.json").exists());
}

#[test]
fn single_replicate_table_has_zero_standard_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    ok(&[
        "table1",
        "--reps",
        "1",
        "--sigmas",
        "0.15",
        "--allow-nonconverged",
        "--out",
        p(&out),
    ]);
    let t = json(&out.join("table1.json"));
    let entries = t.as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for e in entries {
        assert_eq!(
            e["report"]["summary"]["rmse_w"]["se"].as_f64().unwrap(),
            0.0
        );
    }
}

#[test]
fn identity_refinement_changes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pipe");
    ok(&[
        "pipeline",
        "--identity-refinement",
        "--seeds",
        "2",
        "--n-per-split",
        "1200",
        "--donor-types",
        "5",
        "--recipient-types",
        "5",
        "--out",
        p(&out),
    ]);
    let report = json(&out.join("pipeline.json"));
    for seed in report["seeds"].as_array().unwrap() {
        for m in seed["outcome"]["methods"].as_array().unwrap() {
            assert_eq!(m["delta"].as_f64().unwrap(), 0.0);
        }
    }
}

#[test]
fn manifest_records_the_resolved_job() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("net");
    ok(&[
        "simulate-network",
        "--seed",
        "4",
        "--n-d",
        "7",
        "--out",
        p(&out),
    ]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["command"], "simulate-network");
    assert_eq!(m["seed"], 4);
    assert_eq!(m["config"]["sim"]["n_d"], 7);
    assert!(m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .any(|a| a == "edges.csv"));
}

#[test]
fn config_and_subcommand_are_exclusive() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("net");
    ok(&["simulate-network", "--out", p(&out)]);
    let manifest = out.join("manifest.json");
    let code = run(&["--config", p(&manifest), "simulate-network"])
        .status
        .code();
    assert_eq!(code, Some(2));
}
