//! End-to-end tests driving the compiled binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_treeadv"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("treeadv_cli_tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
    String::from_utf8(output.stdout).unwrap()
}

#[test]
fn dist_and_script_match_the_worked_example() {
    let dir = workdir("dist");
    let a = dir.join("a.tree");
    let b = dir.join("b.tree");
    write(&a, "a(b(c,d),e)\n");
    write(&b, "a(c,g(d),f)\n");

    let out = run_ok(bin().arg("dist").arg(&a).arg(&b));
    assert_eq!(out.trim(), "3");

    let script = run_ok(bin().arg("script").arg(&a).arg(&b));
    assert_eq!(script.trim(), "del(2);rep(4,f);ins(1,2,1,g)");

    // identical files produce distance 0 and an empty script
    let out = run_ok(bin().arg("dist").arg(&a).arg(&a));
    assert_eq!(out.trim(), "0");
    let script = run_ok(bin().arg("script").arg(&a).arg(&a));
    assert_eq!(script.trim(), "");
}

#[test]
fn dist_reports_parse_errors() {
    let dir = workdir("dist_err");
    let bad = dir.join("bad.tree");
    write(&bad, "a(b\n");
    let ok = dir.join("ok.tree");
    write(&ok, "a\n");
    let output = bin().arg("dist").arg(&bad).arg(&ok).output().unwrap();
    assert!(!output.status.success());
}

#[test]
fn synth_train_attack_eval_lifecycle() {
    let dir = workdir("lifecycle");
    let data = dir.join("motif.jsonl");
    run_ok(bin().args([
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--n",
        "40",
        "--alphabet-size",
        "6",
        "--max-depth",
        "2",
        "--motif",
        "d(e,f)",
        "--seed",
        "5",
    ]));
    let lines = std::fs::read_to_string(&data).unwrap();
    assert_eq!(lines.lines().count(), 40);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert!(first.get("tree").is_some() && first.get("label").is_some());

    // train an RBF-SVM on the dataset and attack it
    let model = dir.join("rbf.json");
    run_ok(bin().args([
        "train",
        "--data",
        data.to_str().unwrap(),
        "--classifier",
        "rbf",
        "--out",
        model.to_str().unwrap(),
        "--c",
        "10",
        "--seed",
        "3",
    ]));
    assert!(model.exists());

    let records_path = dir.join("records.jsonl");
    run_ok(bin().args([
        "attack",
        "--method",
        "backtrace",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--seed",
        "11",
        "--cap",
        "100",
        "--out",
        records_path.to_str().unwrap(),
    ]));
    let records = std::fs::read_to_string(&records_path).unwrap();
    assert!(!records.trim().is_empty(), "attack must emit per-point records");
    for line in records.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for field in [
            "origin_index",
            "method",
            "success",
            "prefix_length",
            "queries",
            "dist_to_origin",
            "dist_to_reference",
            "ratio",
            "adversarial",
        ] {
            assert!(v.get(field).is_some(), "record missing {field}: {line}");
        }
    }

    // evaluate a small experiment from a config file
    let config = dir.join("config.json");
    write(
        &config,
        &format!(
            r#"{{
  "dataset": {{"path": {data:?}}},
  "classifiers": ["rbf", "tes"],
  "folds": 4,
  "inner_folds": 3,
  "seed": 9,
  "attacks": ["random", "backtrace"],
  "cap": 100
}}"#,
            data = data.to_str().unwrap()
        ),
    );
    let report = dir.join("report.csv");
    run_ok(bin().args([
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with(
        "classifier,attack,accuracy_mean,accuracy_std,success_mean,success_std,\
         ratio_mean,ratio_std\n"
    ));
    assert_eq!(csv.lines().count(), 1 + 2 * 2, "one row per classifier and attack");
    let meta = std::fs::read_to_string(dir.join("report.csv.meta.json")).unwrap();
    let meta: serde_json::Value = serde_json::from_str(&meta).unwrap();
    assert_eq!(meta["seed"], 9);
    assert!(meta["conventions"].as_array().is_some());

    // determinism across separate processes: rerunning eval reproduces the CSV
    let report2 = dir.join("report2.csv");
    run_ok(bin().args([
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--out",
        report2.to_str().unwrap(),
    ]));
    assert_eq!(csv, std::fs::read_to_string(&report2).unwrap());
}

#[test]
fn saved_models_predict_identically_after_reload() {
    let dir = workdir("persistence");
    let data = dir.join("motif.jsonl");
    run_ok(bin().args([
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--n",
        "24",
        "--seed",
        "8",
    ]));

    for kind in ["linear", "st", "rec", "tes"] {
        let model_path = dir.join(format!("{kind}.json"));
        run_ok(bin().args([
            "train",
            "--data",
            data.to_str().unwrap(),
            "--classifier",
            kind,
            "--out",
            model_path.to_str().unwrap(),
            "--seed",
            "4",
        ]));
        // attacking twice from the same saved model file must reproduce
        // the records byte for byte, so loading is exact
        let attack = |path: &Path| {
            run_ok(bin().args([
                "attack",
                "--method",
                "backtrace",
                "--model",
                path.to_str().unwrap(),
                "--data",
                data.to_str().unwrap(),
                "--seed",
                "2",
                "--cap",
                "100",
            ]))
        };
        let out_a = attack(&model_path);
        let out_b = attack(&model_path);
        assert!(!out_a.is_empty(), "{kind} produced no records");
        assert_eq!(out_a, out_b, "{kind} records must be reproducible from disk");
    }
}
