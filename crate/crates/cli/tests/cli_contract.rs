//! End-to-end contracts of the `dae-lab` binary: artifact completeness,
//! manifest integrity, exit codes, and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dae-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("manifest.json")).expect("manifest exists");
    serde_json::from_str(&text).unwrap()
}

const TINY_AE: &str = r#"{
    "kind": "baseline_ae",
    "data": {"train_per_cluster": 40, "test_per_cluster": 10},
    "training": {"epochs": 1, "batch_size": 64},
    "analysis": {"complexity_pairs": 256}
}"#;

const TINY_DAE: &str = r#"{
    "kind": "dae_vae",
    "data": {"train_per_cluster": 40, "test_per_cluster": 10},
    "training": {"epochs": 2, "batch_size": 64, "weak_decoder": {"dropout": {"p": 0.5}}},
    "analysis": {"complexity_pairs": 256, "per_epoch_complexity": true}
}"#;

#[test]
fn minimal_training_run_emits_every_declared_artifact() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), TINY_AE);
    let out_dir = tmp.path().join("out");
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let m = manifest(&out_dir);
    assert_eq!(m["summary"]["status"], "pass");
    assert_eq!(m["seeds"], serde_json::json!([0]));
    assert_eq!(m["command"], "train");
    assert_eq!(m["config"]["kind"], "baseline_ae");

    let artifacts = m["artifacts"].as_array().unwrap();
    let names: Vec<&str> = artifacts.iter().map(|a| a["path"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        ["rep-0000/checkpoint.json", "rep-0000/train_log.csv", "rep-0000/analysis.json"]
    );
    // Every listed artifact exists, with matching size and hash.
    for entry in artifacts {
        let path = out_dir.join(entry["path"].as_str().unwrap());
        let bytes = fs::read(&path).expect("artifact exists");
        assert_eq!(bytes.len() as u64, entry["bytes"].as_u64().unwrap(), "{path:?}");
        assert_eq!(
            dae_core::io::sha256_hex(&bytes),
            entry["sha256"].as_str().unwrap(),
            "{path:?}"
        );
    }
    // The checkpoint restores to a runnable model.
    let checkpoint = dae_core::checkpoint::Checkpoint::load(&out_dir.join("rep-0000/checkpoint.json")).unwrap();
    checkpoint.to_model().unwrap();
    // The analysis report carries the headline metrics.
    let analysis: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("rep-0000/analysis.json")).unwrap()).unwrap();
    for key in ["latent_knn_accuracy_pct", "recon_knn_accuracy_pct", "c_lip_encoder", "c_lip_decoder"] {
        assert!(analysis[key].is_number(), "missing {key}");
    }
}

#[test]
fn replications_run_consecutive_seeds_into_separate_directories() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), TINY_AE);
    let out_dir = tmp.path().join("out");
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--seed",
        "7",
        "--replications",
        "2",
    ]);
    assert!(output.status.success());
    let m = manifest(&out_dir);
    assert_eq!(m["seeds"], serde_json::json!([7, 8]));
    for (rep, seed) in [("rep-0000", 7), ("rep-0001", 8)] {
        let analysis: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join(rep).join("analysis.json")).unwrap())
                .unwrap();
        assert_eq!(analysis["seed"], serde_json::json!(seed));
    }
}

/// Same config and seed twice: every metric artifact is byte-identical.
/// The training log may differ only in its wall-clock column, and a
/// different seed must actually change the results.
#[test]
fn reruns_are_byte_identical_on_metric_artifacts() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), TINY_DAE);
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|n| tmp.path().join(n)).collect();
    for dir in &dirs {
        let output = run(&[
            "dae",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
            "--seed",
            "3",
        ]);
        assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    }
    for name in [
        "analysis.json",
        "checkpoint.json",
        "stage1_checkpoint.json",
        "complexity_trace.csv",
    ] {
        let a = fs::read(dirs[0].join("rep-0000").join(name)).unwrap();
        let b = fs::read(dirs[1].join("rep-0000").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical reruns");
    }
    // train_log.csv: identical after dropping the per-epoch seconds column.
    let strip_seconds = |dir: &Path| -> Vec<String> {
        let text = fs::read_to_string(dir.join("rep-0000/train_log.csv")).unwrap();
        text.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
            .collect()
    };
    assert_eq!(strip_seconds(&dirs[0]), strip_seconds(&dirs[1]));

    // A different seed changes the analysis.
    let other = tmp.path().join("c");
    let output = run(&[
        "dae",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        other.to_str().unwrap(),
        "--seed",
        "4",
    ]);
    assert!(output.status.success());
    let a = fs::read(dirs[0].join("rep-0000/analysis.json")).unwrap();
    let c = fs::read(other.join("rep-0000/analysis.json")).unwrap();
    assert_ne!(a, c, "different seeds must produce different analyses");
}

#[test]
fn invalid_configs_exit_2_and_name_the_offending_fields() {
    let tmp = TempDir::new().unwrap();
    let cases: [(&str, &[&str]); 4] = [
        (
            r#"{"kind": "baseline_ae", "model": {"encoder_dims": [10,16,3], "decoder_dims": [2,16,10]}}"#,
            &["encoder_dims", "decoder_dims"],
        ),
        (r#"{"kind": "baseline_ae", "typo_field": 1}"#, &["typo_field"]),
        (r#"{"kind": "table1"}"#, &["subcommand"]),
        (
            r#"{"kind": "dae_ae", "training": {"weak_decoder": "none"}}"#,
            &["weak_decoder"],
        ),
    ];
    for (i, (json, needles)) in cases.iter().enumerate() {
        let path = tmp.path().join(format!("bad{i}.json"));
        fs::write(&path, json).unwrap();
        let sub = if json.contains("dae_ae") { "dae" } else { "train" };
        let output = run(&[sub, "--config", path.to_str().unwrap()]);
        assert_eq!(output.status.code(), Some(2), "case {i}");
        let stderr = String::from_utf8_lossy(&output.stderr);
        for needle in *needles {
            assert!(stderr.contains(needle), "case {i}: missing {needle} in {stderr}");
        }
        // Machine-readable record with the same exit code.
        assert!(stderr.contains("\"exit_code\":2"), "case {i}: {stderr}");
    }
}

#[test]
fn numeric_blowups_exit_3_and_flag_the_manifest() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{
            "kind": "baseline_vae",
            "data": {"train_per_cluster": 40, "test_per_cluster": 10},
            "training": {"epochs": 2, "learning_rate": 1e6}
        }"#,
    );
    let out_dir = tmp.path().join("out");
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("non-finite"), "{stderr}");
    assert!(stderr.contains("\"kind\":\"numeric\""), "{stderr}");
    let m = manifest(&out_dir);
    assert_eq!(m["summary"]["status"], "fail");
    assert!(m["summary"]["error"].as_str().unwrap().contains("non-finite"));
}

#[test]
fn oracle_battery_passes_and_fault_injection_trips_dependent_checks() {
    let tmp = TempDir::new().unwrap();
    let clean = tmp.path().join("clean");
    let output = run(&["oracles", "--out-dir", clean.to_str().unwrap()]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(clean.join("oracle_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], serde_json::json!(true));
    assert_eq!(manifest(&clean)["summary"]["status"], "pass");

    // Perturbing the closed form's middle branch must fail exactly the
    // checks that depend on it — and nothing else.
    let faulty = tmp.path().join("faulty");
    let output = run(&[
        "oracles",
        "--out-dir",
        faulty.to_str().unwrap(),
        "--perturb-middle-branch",
        "1e-3",
    ]);
    assert_eq!(output.status.code(), Some(4));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(faulty.join("oracle_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], serde_json::json!(false));
    let failing: Vec<&str> = report["failing"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(!failing.is_empty());
    assert!(
        failing.iter().all(|name| name.starts_with("gaussian_w2.")),
        "only transport-gap checks may fail: {failing:?}"
    );
    assert_eq!(manifest(&faulty)["summary"]["status"], "fail");
}

#[test]
fn tiny_benchmark_run_emits_well_formed_results() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{
            "kind": "table1",
            "table1": {
                "replications": 2, "total_epochs": 2,
                "train_per_cluster": 30, "test_per_cluster": 10,
                "batch_size": 32, "complexity_pairs": 128
            }
        }"#,
    );
    let out_dir = tmp.path().join("out");
    let output = run(&[
        "table1",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("table1_result.json")).unwrap()).unwrap();
    let rows = result["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let accs = row["accuracies"].as_array().unwrap();
        assert_eq!(accs.len(), 2, "one accuracy per replication");
        for acc in accs {
            let v = acc.as_f64().unwrap();
            assert!((0.0..=100.0).contains(&v), "{v} out of percent range");
        }
    }
    let csv = fs::read_to_string(out_dir.join("table1_rows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6, "header plus five rows");
    assert!(csv.starts_with("row,mean,std_dev,"));
}

#[test]
fn diagnose_passes_on_a_healthy_build() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let output = run(&["diagnose", "--out-dir", out_dir.to_str().unwrap()]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], serde_json::json!(true));
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 9);
    assert!(checks.iter().all(|c| c["passed"] == serde_json::json!(true)));
}
