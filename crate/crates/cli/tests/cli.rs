//! End-to-end tests driving the compiled `vapal` binary.

use std::path::Path;
use std::process::{Command, Output};

use vapal::data_io::{load_dataset, read_comparison, read_results};

fn vapal(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vapal"));
    cmd.args(args);
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("spawn vapal")
}

fn gen_small_dataset(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.jsonl");
    let out = vapal(
        &[
            "gen-data",
            "--out",
            path.to_str().unwrap(),
            "--classes",
            "3",
            "--dim",
            "6",
            "--per-class",
            "40",
            "--center-scale",
            "3.0",
            "--seed",
            "11",
        ],
        &[],
    );
    assert!(out.status.success(), "gen-data failed: {}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn missing_strategy_is_a_usage_error() {
    let out = vapal(&["run", "--synthetic"], &[]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_strategy_is_a_usage_error() {
    let out = vapal(&["run", "--synthetic", "--strategy", "alps"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dataset_and_synthetic_conflict() {
    let out = vapal(
        &["run", "--synthetic", "--dataset", "x.jsonl", "--strategy", "rand"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_file_is_a_runtime_error() {
    let out = vapal(
        &["run", "--dataset", "/nonexistent/never.jsonl", "--strategy", "rand"],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_data_is_loadable_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen_small_dataset(dir.path());
    let dataset = load_dataset(&path).unwrap();
    assert_eq!(dataset.num_classes, 3);
    assert_eq!(dataset.dim, 6);
    assert_eq!(dataset.train.len(), 96); // 3 * (40 - 8)
    assert_eq!(dataset.test.len(), 24);

    let again = dir.path().join("again.jsonl");
    let out = vapal(
        &[
            "gen-data",
            "--out",
            again.to_str().unwrap(),
            "--classes",
            "3",
            "--dim",
            "6",
            "--per-class",
            "40",
            "--center-scale",
            "3.0",
            "--seed",
            "11",
        ],
        &[],
    );
    assert!(out.status.success());
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn run_writes_results_and_manifest_with_paper_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small_dataset(dir.path());
    let out_csv = dir.path().join("results.csv");
    let out = vapal(
        &[
            "run",
            "--dataset",
            data.to_str().unwrap(),
            "--strategy",
            "vapal",
            "--runs",
            "1",
            "--rounds",
            "2",
            "--query-size",
            "8",
            "--out",
            out_csv.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let rows = read_results(&out_csv).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].round, 1);
    assert_eq!(rows[0].labeled_count, 8);
    assert_eq!(rows[1].labeled_count, 16);

    // unset VAT flags must be echoed with their defaults in the manifest
    let manifest_path = dir.path().join("results.manifest.json");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["vat"]["epsilon"], 1.0);
    assert_eq!(manifest["vat"]["xi"], 10.0);
    assert_eq!(manifest["vat"]["power_iters"], 10);
    assert_eq!(manifest["sims"][0]["rounds"], 2);
    assert_eq!(manifest["sims"][0]["strategy"]["vapal"]["epsilon"], 1.0);
    assert_eq!(manifest["out"], out_csv.to_str().unwrap());
}

#[test]
fn synthetic_run_writes_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("synthetic.csv");
    let out = vapal(
        &[
            "run",
            "--synthetic",
            "--strategy",
            "vapal",
            "--runs",
            "1",
            "--rounds",
            "2",
            "--out",
            out_csv.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows = read_results(&out_csv).unwrap();
    assert_eq!(rows.len(), 2);
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("synthetic.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["dataset"]["synthetic"]["num_classes"], 4);
}

#[test]
fn compare_emits_long_format_rows_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small_dataset(dir.path());
    let out_csv = dir.path().join("compare.csv");
    let args = [
        "compare",
        "--dataset",
        data.to_str().unwrap(),
        "--strategies",
        "rand,entropy",
        "--runs",
        "2",
        "--rounds",
        "2",
        "--query-size",
        "8",
        "--with-full",
        "--out",
        out_csv.to_str().unwrap(),
    ];
    let out = vapal(&args, &[]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let rows = read_comparison(&out_csv).unwrap();
    // 2 strategies x 2 rounds + the full-supervision reference row
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().filter(|r| r.strategy == "rand").count(), 2);
    assert_eq!(rows.iter().filter(|r| r.strategy == "entropy").count(), 2);
    let full: Vec<_> = rows.iter().filter(|r| r.strategy == "full").collect();
    assert_eq!(full.len(), 1);
    assert_eq!(full[0].round, 0);
    assert!(full[0].mean_f1 > 0.9, "blobs should be nearly separable");

    let first_bytes = std::fs::read(&out_csv).unwrap();
    let out = vapal(&args, &[]);
    assert!(out.status.success());
    assert_eq!(first_bytes, std::fs::read(&out_csv).unwrap(), "comparison not deterministic");
}

#[test]
fn out_dir_env_var_sets_default_location() {
    let dir = tempfile::tempdir().unwrap();
    let out = vapal(
        &["gen-data", "--classes", "2", "--dim", "3", "--per-class", "10"],
        &[("VAPAL_OUT_DIR", dir.path().to_str().unwrap())],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("blobs.jsonl").exists());
}
