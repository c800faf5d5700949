//! End-to-end runs of the `majority-lab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_majority-lab"));
    c.env_remove("MAJORITY_LAB_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// JSON document printed after the `# majority-lab` config line.
fn body(o: &Output) -> serde_json::Value {
    let text = stdout(o);
    let (first, rest) = text.split_once('\n').unwrap();
    assert!(first.starts_with("# majority-lab "), "{first}");
    serde_json::from_str(rest).unwrap()
}

#[test]
fn gen_is_deterministic_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.edges");
    let b = dir.path().join("b.edges");
    for f in [&a, &b] {
        let o = run(&["gen", "--family", "pa", "--n", "1000", "--seed", "7", "--out", p(f)]);
        assert_eq!(o.status.code(), Some(0));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.contains(r#""seed":7"#));
    let g = majority_lab::cli::read_graph(&a).unwrap();
    assert_eq!(g.node_count(), 1001);
    assert!(g.is_tree());

    let dot = dir.path().join("m.dot");
    let o = run(&["gen", "--family", "mary", "--m-ary", "3", "--depth", "2", "--format", "dot", "--out", p(&dot)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(majority_lab::cli::read_graph(&dot).unwrap().node_count(), 13);
}

#[test]
fn run_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.edges");
    let t = dir.path().join("t.jsonl");
    assert!(run(&["gen", "--family", "pa", "--n", "300", "--seed", "7", "--out", p(&g)]).status.success());
    let o = run(&["run", "--graph", p(&g), "--delta", "0.3", "--seed", "9", "--out", p(&t)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(body(&o)["truncated"], false);

    let o = run(&["analyze", "--trace", p(&t), "--check", "critical-chain"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(body(&o)["critical_chain"]["verdict"], "ok");

    let o = run(&[
        "analyze", "--trace", p(&t), "--check", "finalization,critical-table,influence,safety", "--source", "3", "--node",
        "5", "--at", "400",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let b = body(&o);
    assert_eq!(b["finalization"]["violations"].as_array().unwrap().len(), 0);
    assert_eq!(b["critical_table"]["times"].as_array().unwrap().len(), 301);
    assert!(b["safety"]["safe"].is_boolean());

    let bin_trace = dir.path().join("t.bin");
    assert!(run(&["run", "--graph", p(&g), "--seed", "9", "--out", p(&bin_trace)]).status.success());
    assert_eq!(&std::fs::read(&bin_trace).unwrap()[..8], b"MLTRACE\0");
    let o = run(&["analyze", "--trace", p(&bin_trace), "--check", "critical-chain"]);
    assert_eq!(body(&o)["critical_chain"]["verdict"], "ok");
}

#[test]
fn truncated_run_still_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let o = run(&["run", "--family", "line", "--n", "50", "--max-steps", "20", "--out", p(&t)]);
    assert_eq!(o.status.code(), Some(1));
    let trace = majority_lab::cli::read_trace(&t).unwrap();
    assert!(trace.truncated);
    assert_eq!(trace.steps(), 20);
    let o = run(&["run", "--family", "line", "--n", "50", "--max-steps", "20", "--no-halt", "--out", p(&t)]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn oracle_prints_frozen_value() {
    let o = run(&["oracle", "--family", "line", "--n", "3", "--delta", "0.3"]);
    assert_eq!(o.status.code(), Some(0));
    let v = body(&o)["pr_correct_majority"].as_f64().unwrap();
    assert!((v - 104.0 / 125.0).abs() < 1e-12, "{v}");

    let dir = tempfile::tempdir().unwrap();
    let cached = run(&["oracle", "--family", "star", "--n", "4", "--cache", p(dir.path())]);
    let again = run(&["oracle", "--family", "star", "--n", "4", "--cache", p(dir.path())]);
    assert_eq!(stdout(&cached), stdout(&again));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);

    let o = run(&["oracle", "--family", "line", "--n", "4", "--schedule", "0,1,2,3,2,1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(body(&o)["monotone"], true);
}

#[test]
fn usage_and_parse_errors() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["gen", "--family", "pa", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["gen", "--family", "mary", "--n", "3"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.edges");
    std::fs::write(&bad, "0 1\n1 x\n").unwrap();
    let o = run(&["run", "--graph", p(&bad), "--out", p(&dir.path().join("t"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte 6"));
    let trace = dir.path().join("bad.jsonl");
    std::fs::write(&trace, "{\"format\": 3}\n").unwrap();
    let o = run(&["analyze", "--trace", p(&trace)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte"));
}

#[test]
fn help_lists_the_flags() {
    let mut all = String::new();
    for sub in ["gen", "run", "analyze", "oracle", "experiment", "verify"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        all += &stdout(&o);
    }
    for flag in [
        "--family", "--n", "--m-ary", "--depth", "--delta", "--seed", "--trials", "--max-steps", "--measure-at", "--out",
        "--config", "--out-dir", "MAJORITY_LAB_OUT_DIR",
    ] {
        assert!(all.contains(flag), "{flag} missing from help");
    }
}

fn write_config(dir: &Path, threshold: &str) -> std::path::PathBuf {
    let path = dir.join("c.toml");
    std::fs::write(
        &path,
        format!(
            "name = \"small\"\ndelta = 0.3\ntrials = 50\nseed = 4\ngraph = {{ family = \"line\", n = 30 }}\nthresholds = [{threshold}]\n"
        ),
    )
    .unwrap();
    path
}

#[test]
fn experiment_outputs_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(dir.path(), "{ metric = \"correct_fraction\", min = 0.0 }");
    let out = dir.path().join("res");
    let o = run(&["experiment", "--config", p(&ok), "--out", p(&out), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().next().unwrap().contains(r#""seed":4"#));
    let csv1 = std::fs::read(out.join("small.trials.csv")).unwrap();
    let o = run(&["experiment", "--config", p(&ok), "--out", p(&out), "--workers", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(out.join("small.trials.csv")).unwrap(), csv1);

    let bad = write_config(dir.path(), "{ metric = \"correct_fraction\", min = 1.5 }");
    let env_dir = dir.path().join("env");
    let o = bin()
        .args(["experiment", "--config", p(&bad), "--trials", "20"])
        .env("MAJORITY_LAB_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL correct_fraction"));
    assert!(env_dir.join("small.result.json").exists());
}

#[test]
fn verify_runs_selected_criteria() {
    let o = run(&["verify", "--only", "6,13"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let lines: Vec<String> = stdout(&o).lines().skip(1).map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.starts_with("[PASS]")));
}
