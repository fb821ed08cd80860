use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn c3bv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_c3bv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write_prent_env(path: &Path) {
    fs::write(
        path,
        r#"{"kind": "prent", "e_bar": 0.2, "k": 1, "seed": 3}"#,
    )
    .unwrap();
}

#[test]
fn theory_prints_bounds_then_a_csv_table() {
    let out = c3bv(&[
        "theory",
        "--samples",
        "500",
        "--lambda-grid",
        "0,1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("# lambda_non_lower = 0.391304"), "{text}");
    assert!(text.contains("# lambda_non_upper = n/a"), "{text}");
    assert!(text.contains("# lambda_str_upper(alpha=0.25)"), "{text}");
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[3].starts_with("lambda,f_zero_noise,prob_trend"));
    assert_eq!(lines.len(), 3 + 1 + 2);
}

#[test]
fn simulate_reports_json_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    write_prent_env(&env);
    let trace = dir.path().join("trace.csv");
    let out = c3bv(&[
        "simulate",
        "--config",
        env.to_str().unwrap(),
        "--lambda",
        "0.5",
        "--mode",
        "exposure_topk",
        "--horizon",
        "20",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report["welfare"].is_number());
    assert_eq!(report["mode"], "exposure_topk");
    assert_eq!(report["trace_steps"], 20);
    let body = fs::read_to_string(&trace).unwrap();
    assert!(body.starts_with("step,creator,utility,welfare"));
}

#[test]
fn sweep_applies_overrides_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{
            "environment": {"kind": "prent", "e_bar": 0.2, "seed": 3},
            "sweep": {"dynamics": {"horizon": 10}}
        }"#,
    )
    .unwrap();
    let run = |out_dir: &Path, seed: &str| {
        let out = c3bv(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--lambda-grid",
            "0,0.5",
            "--mechanism",
            "exposure_topk",
            "--replicates",
            "2",
            "--seed",
            seed,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        out
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    let first = run(&out_a, "9");
    run(&out_b, "9");
    run(&out_c, "10");

    let optima: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(
        optima.keys().collect::<Vec<_>>(),
        vec!["exposure_topk", "nonstrategic"]
    );
    for name in ["cells.csv", "aggregates.csv", "optima.json", "welfare_vs_lambda.svg"] {
        assert!(out_a.join(name).is_file(), "missing {name}");
    }
    let cells_a = fs::read(out_a.join("cells.csv")).unwrap();
    assert_eq!(cells_a, fs::read(out_b.join("cells.csv")).unwrap());
    assert_ne!(cells_a, fs::read(out_c.join("cells.csv")).unwrap());
}

#[test]
fn ingest_nmf_and_dataset_sweep_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("mini.data");
    fs::write(
        &raw,
        "1\t10\t4\t881250949\n1\t20\t3\t881250950\n2\t10\t5\t881250951\n\
         2\t30\t2\t881250952\n3\t20\t1\t881250953\n3\t30\t4\t881250954\n",
    )
    .unwrap();
    let ratings = dir.path().join("ratings.csv");
    let out = c3bv(&[
        "ingest",
        "--input",
        raw.to_str().unwrap(),
        "--format",
        "movielens",
        "--out",
        ratings.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("6 ratings from 3 users on 3 items"));

    let factors = dir.path().join("factors");
    let out = c3bv(&[
        "nmf",
        "--input",
        ratings.to_str().unwrap(),
        "--out",
        factors.to_str().unwrap(),
        "--rank",
        "2",
        "--max-iter",
        "300",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(factors.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["rank"], 2);

    let cfg = dir.path().join("dataset.json");
    fs::write(
        &cfg,
        format!(
            r#"{{
                "environment": {{"kind": "dataset", "factors_dir": {:?}, "n_creators": 3, "k": 1}},
                "sweep": {{"lambda_grid": [0.0, 0.5], "mechanisms": [], "replicates": 2,
                          "dynamics": {{"horizon": 5}}}}
            }}"#,
            factors.to_str().unwrap()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = c3bv(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cells = fs::read_to_string(out_dir.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 2 * 2);
}

#[test]
fn bad_inputs_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"environment": {"kind": "prent"}}"#,
    )
    .unwrap();
    let out = c3bv(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--mechanism",
        "bogus",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unknown mechanism"), "{}", stderr(&out));

    let out = c3bv(&["simulate", "--config", "/nonexistent.json"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("/nonexistent.json"));
}
