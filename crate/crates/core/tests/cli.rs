//! End-to-end checks of the `cypherprune` binary: happy paths and the
//! documented exit codes (1 usage, 2 data error, 3 executor error).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cypherprune"))
}

fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_train(dir: &Path) -> PathBuf {
    let mut lines = String::new();
    for (i, source) in ["functional_cypher", "synthetic_gemini", "easy_src"]
        .iter()
        .cycle()
        .take(30)
        .enumerate()
    {
        let clause = " WITH n".repeat(i % 5);
        lines.push_str(&format!(
            concat!(
                "{{\"instance_id\":\"t{i:02}\",\"question\":\"q{i}\",\"schema\":\"\",",
                "\"cypher\":\"MATCH (n){clause} RETURN n\",\"data_source\":\"{source}\"}}\n"
            ),
            i = i,
            clause = clause,
            source = source
        ));
    }
    let path = dir.join("train.jsonl");
    std::fs::write(&path, lines).unwrap();
    path
}

#[test]
fn validate_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_train(dir.path());
    let out = run(&["validate", train.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("30"), "stdout: {stdout}");
}

#[test]
fn validate_rejects_garbage_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "not json at all\n").unwrap();
    let out = run(&["validate", path.to_str().unwrap(), "--strict"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = run(&["validate", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn prune_writes_dataset_manifest_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_train(dir.path());
    let out_dir = dir.path().join("reports");
    let out = run(&[
        "prune",
        train.to_str().unwrap(),
        "--strategy",
        "cypher_terms",
        "--target-size",
        "10",
        "--seed",
        "7",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--name",
        "terms",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["terms.pruned.jsonl", "terms.manifest.json", "terms.report.json"] {
        assert!(out_dir.join(file).is_file(), "missing {file}");
    }
    let pruned = std::fs::read_to_string(out_dir.join("terms.pruned.jsonl")).unwrap();
    assert_eq!(pruned.lines().count(), 10);
}

#[test]
fn evaluate_translation_prints_scores() {
    let out = run(&[
        "evaluate",
        "translation",
        "--dataset",
        data_path("exec_dataset.jsonl").to_str().unwrap(),
        "--predictions",
        data_path("exec_predictions.jsonl").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("google_bleu"), "stdout: {stdout}");
    assert!(stdout.contains("exact_match"), "stdout: {stdout}");
}

#[test]
fn evaluate_execution_replay_matches_fixture() {
    let out = run(&[
        "evaluate",
        "execution",
        "--dataset",
        data_path("exec_dataset.jsonl").to_str().unwrap(),
        "--predictions",
        data_path("exec_predictions.jsonl").to_str().unwrap(),
        "--replay",
        data_path("exec_fixture.jsonl").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.6"), "stdout: {stdout}");
}

#[test]
fn evaluate_execution_missing_fixture_is_executor_error() {
    let out = run(&[
        "evaluate",
        "execution",
        "--dataset",
        data_path("exec_dataset.jsonl").to_str().unwrap(),
        "--predictions",
        data_path("exec_predictions.jsonl").to_str().unwrap(),
        "--replay",
        "/nonexistent/fixture.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn report_compare_builds_csv_and_text() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_train(dir.path());
    let out_dir = dir.path().join("reports");
    for (strategy, name) in [("length", "len"), ("cypher_terms", "term")] {
        let out = run(&[
            "prune",
            train.to_str().unwrap(),
            "--strategy",
            strategy,
            "--target-size",
            "8",
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--name",
            name,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let compare = dir.path().join("compare");
    let out = run(&[
        "report",
        "compare",
        out_dir.join("len.report.json").to_str().unwrap(),
        out_dir.join("term.report.json").to_str().unwrap(),
        "--out",
        compare.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(compare.with_extension("csv")).unwrap();
    assert!(csv.contains("len"), "csv: {csv}");
    assert!(csv.contains("term"), "csv: {csv}");
    // no predictions were supplied, so metric columns must say n/a, not 0
    assert!(csv.contains("n/a"), "csv: {csv}");
}

#[test]
fn run_subcommand_executes_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_train(dir.path());
    let out_dir = dir.path().join("out");
    let config = format!(
        "out_dir = {out:?}\n\n[dataset]\ntrain = {train:?}\n\n[selection]\nstrategy = \"length\"\ntarget_size = 5\n",
        train = train.to_str().unwrap(),
        out = out_dir.to_str().unwrap(),
    );
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, config).unwrap();
    let out = run(&["run", "--config", config_path.to_str().unwrap(), "--name", "smoke"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("smoke.pruned.jsonl").is_file());
}
