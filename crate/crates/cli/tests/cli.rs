use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flakescope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flakescope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn file_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn synth_into(dir: &Path, n: u32, seed: u32) {
    let out = flakescope(&[
        "synth",
        "--n",
        &n.to_string(),
        "--flaky-ratio",
        "0.3",
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "synth failed: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn same_seed_synthesizes_identical_corpora() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth_into(a.path(), 30, 7);
    synth_into(b.path(), 30, 7);
    assert_eq!(file_tree(a.path()), file_tree(b.path()));

    let c = tempfile::tempdir().unwrap();
    synth_into(c.path(), 30, 8);
    assert_ne!(file_tree(a.path()), file_tree(c.path()));
}

#[test]
fn evaluate_without_corpus_is_a_usage_error() {
    let out = flakescope(&["evaluate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = flakescope(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_corpus_directory_is_a_domain_error() {
    let out = flakescope(&["stats", "--corpus", "/nonexistent/corpus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn train_then_predict_emits_all_score_fields() {
    let train_dir = tempfile::tempdir().unwrap();
    let held_out_dir = tempfile::tempdir().unwrap();
    synth_into(train_dir.path(), 60, 11);
    synth_into(held_out_dir.path(), 20, 12);

    let model = train_dir.path().join("model.json");
    let out = flakescope(&[
        "train",
        "--corpus",
        train_dir.path().to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));

    let out = flakescope(&[
        "predict",
        "--corpus",
        held_out_dir.path().to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--format",
        "json-lines",
        "--seed",
        "11",
    ]);
    assert!(out.status.success(), "predict failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 20);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).expect("json record");
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["seed"], 11);
        for field in ["p_log", "p_struct", "p_final"] {
            let p = v[field].as_f64().unwrap_or_else(|| panic!("{field} missing"));
            assert!((0.0..=1.0).contains(&p), "{field} = {p}");
        }
        let verdict = v["label"].as_str().expect("verdict field");
        assert!(verdict == "flaky" || verdict == "safe", "verdict = {verdict}");
    }
}

#[test]
fn worker_count_does_not_change_evaluation_results() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), 40, 3);
    let grid = dir.path().join("grid.json");
    fs::write(
        &grid,
        r#"{"k_values":[5],"f_values":[8],"alpha_values":[0.5],"beta_values":[0.4,0.6]}"#,
    )
    .unwrap();

    let run = |jobs: &str| {
        let out = flakescope(&[
            "evaluate",
            "--corpus",
            dir.path().to_str().unwrap(),
            "--grid",
            grid.to_str().unwrap(),
            "--models",
            "lr",
            "--seed",
            "5",
            "--jobs",
            jobs,
            "--format",
            "json-lines",
        ]);
        assert!(out.status.success(), "evaluate failed: {}", String::from_utf8_lossy(&out.stderr));
        stdout(&out)
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn label_records_carry_schema_version_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    synth_into(dir.path(), 20, 9);
    let out = flakescope(&[
        "label",
        "--corpus",
        dir.path().to_str().unwrap(),
        "--format",
        "json-lines",
        "--seed",
        "9",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(!text.is_empty());
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).expect("json record");
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["seed"], 9);
    }
}

#[test]
fn ingest_without_live_feature_is_a_domain_error() {
    if cfg!(feature = "live") {
        return;
    }
    let out = flakescope(&["ingest", "--repo", "octo/widget", "--out", "/tmp/never-used"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("live"));
}
