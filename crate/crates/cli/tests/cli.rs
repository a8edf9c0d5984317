use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn prism(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prism"));
    for var in [
        "PRISM_CHAT_URL",
        "PRISM_CHAT_KEY",
        "PRISM_EMBED_URL",
        "PRISM_EMBED_KEY",
        "PRISM_SEARCH_URL",
        "PRISM_SEARCH_KEY",
        "OPENAI_API_KEY",
        "PRISM_STORE",
        "PRISM_FIXTURE",
    ] {
        cmd.env_remove(var);
    }
    cmd.args(args).output().expect("spawn prism")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pipeline(runs: &Path) -> Output {
    prism(&[
        "--mock",
        "--fixture",
        s(&fixtures().join("corpus")),
        "pipeline",
        "--query",
        "Design a roof that keeps a house cool without air conditioning",
        "--seed",
        "5",
        "--lexicon",
        s(&fixtures().join("lexicon.txt")),
        "--runs-root",
        s(runs),
    ])
}

#[test]
fn pipeline_prints_run_id_and_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pipeline(tmp.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let run_id = stdout.lines().next().unwrap();
    assert!(run_id.starts_with("prism-"));
    let graph = tmp.path().join(run_id).join("graph.json");
    let v = prism(&["validate", "--graph", s(&graph)]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).starts_with("ok:"));
}

#[test]
fn validate_flags_planted_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pipeline(tmp.path());
    let run_id = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_owned();
    let path = tmp.path().join(run_id).join("graph.json");
    let mut g: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let c0 = g["context_nodes"][0]["node_id"].clone();
    g["edges"].as_array_mut().unwrap()[0]["dst"] = c0.clone();
    g["edges"].as_array_mut().unwrap()[0]["src"] = g["context_nodes"][1]["node_id"].clone();
    std::fs::write(&path, g.to_string()).unwrap();
    let v = prism(&["validate", "--graph", s(&path)]);
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stdout).contains("connects two context nodes"));

    g["schema"] = "prism-graph/0".into();
    std::fs::write(&path, g.to_string()).unwrap();
    let v = prism(&["validate", "--graph", s(&path)]);
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stderr).contains("prism-graph/1"));
}

#[test]
fn missing_credentials_fail_without_mock() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prism(&["pipeline", "--query", "q", "--runs-root", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn run_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({
        "name": "cli",
        "prompts": ["Propose a new way to reduce food waste in school cafeterias"],
        "modes": ["vanilla", "prism"],
        "samples_per_prompt": 2,
        "rng_seed": 3,
        "lexicon": s(&fixtures().join("lexicon.txt")),
        "providers": {"mock": true, "fixture": s(&fixtures().join("corpus"))},
    });
    let spec_path = tmp.path().join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let out_dir = tmp.path().join("exp");
    let out = prism(&["run", "--spec", s(&spec_path), "--out", s(&out_dir)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = out_dir.join("manifest.json");
    let r = prism(&["report", "--manifest", s(&manifest)]);
    assert_eq!(r.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["cells"]["ok"], 4);
    assert!(out_dir.join("report/p1.inter.csv").is_file());
    assert!(out_dir.join("report/p1.projection.csv").is_file());
}

#[test]
fn incomplete_run_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let lex = tmp.path().join("tiny.txt");
    std::fs::write(&lex, "kettle\nharbor\n").unwrap();
    let spec = serde_json::json!({
        "name": "tiny",
        "prompts": ["Suggest a fresh approach to teaching children fractions"],
        "modes": ["vanilla", "flat_rag"],
        "lexicon": s(&lex),
    });
    let spec_path = tmp.path().join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let out_dir = tmp.path().join("exp");
    let out = prism(&[
        "--mock",
        "--fixture",
        s(&fixtures().join("corpus")),
        "run",
        "--spec",
        s(&spec_path),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m: Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["complete"], false);
}

#[test]
fn sweep_writes_one_manifest_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({
        "name": "sw",
        "prompts": ["Invent a quieter alarm clock that still wakes heavy sleepers"],
        "modes": ["flat_rag"],
        "lexicon": s(&fixtures().join("lexicon.txt")),
        "sweep": {"exploration_k": [2, 4]},
    });
    let spec_path = tmp.path().join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let out_dir = tmp.path().join("exp");
    let out = prism(&[
        "--mock",
        "--fixture",
        s(&fixtures().join("corpus")),
        "run",
        "--spec",
        s(&spec_path),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("sw-k2/manifest.json").is_file());
    assert!(out_dir.join("sw-k4/manifest.json").is_file());
}

#[test]
fn diagnose_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("dx");
    let out = prism(&[
        "--mock",
        "--fixture",
        s(&fixtures().join("corpus")),
        "diagnose",
        "--cases",
        s(&fixtures().join("cases.jsonl")),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("cases/rarebench-gai-1.json").is_file());
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["recall_at_1"], 1.0);
}
