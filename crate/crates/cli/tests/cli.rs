mod common;

use common::{ctxaug, fixture, ok, run_pipeline, tree};
use serde_json::Value;

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn transport(dir: &std::path::Path) {
    std::fs::write(
        dir.join("data.tsv"),
        "Public transport enables our body to move one place to another .\tPublic transport enables our body to move from one place to another .\n",
    )
    .unwrap();
}

#[test]
fn extract_transport_pair() {
    let dir = tempfile::tempdir().unwrap();
    transport(dir.path());
    ok(dir.path(), &["extract", "--in", "data.tsv", "--n", "3", "--out", "pool.jsonl", "-q"]);
    let pool = std::fs::read_to_string(dir.path().join("pool.jsonl")).unwrap();
    let line: Value = serde_json::from_str(pool.lines().next().unwrap()).unwrap();
    assert_eq!(line["wrong"], serde_json::json!(["move", "one"]));
    assert_eq!(line["correct"], serde_json::json!(["move", "from", "one"]));
    assert_eq!(line["count"], 1);

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pool.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "extract");
    assert_eq!(manifest["inputs"][0]["file"], "data.tsv");
    assert_eq!(manifest["counts"]["patterns"], 1);
}

#[test]
fn synthesize_without_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    transport(dir.path());
    ok(dir.path(), &["extract", "--in", "data.tsv", "--out", "pool.jsonl", "-q"]);
    let out = ctxaug(dir.path(), &["synthesize", "--pool", "pool.jsonl", "--out", "syn.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("error[config] "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(!dir.path().join("syn.jsonl").exists());
}

#[test]
fn errors_are_single_coded_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctxaug(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[usage] "));

    let out = ctxaug(dir.path(), &["extract", "--in", "missing.tsv", "--out", "p.jsonl", "-q"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error[input] "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    std::fs::write(dir.path().join("bad.tsv"), "only one field\n").unwrap();
    let out = ctxaug(dir.path(), &["extract", "--in", "bad.tsv", "--out", "p.jsonl", "-q"]);
    assert!(stderr(&out).starts_with("error[input] "));
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    transport(dir.path());
    ok(dir.path(), &["extract", "--in", "data.tsv", "--out", "pool.jsonl", "-q"]);
    std::fs::write(dir.path().join("cfg.json"), r#"{"seed": 3, "count": 12, "error_rate": 1.0}"#).unwrap();
    ok(dir.path(), &["synthesize", "--config", "cfg.json", "--pool", "pool.jsonl", "--out", "a.jsonl", "-q"]);
    let a = std::fs::read_to_string(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a.lines().count(), 12);
    assert!(a.lines().all(|l| l.contains("\"planted\":[{")));

    ok(dir.path(), &["synthesize", "--config", "cfg.json", "--count", "5", "--pool", "pool.jsonl", "--out", "b.jsonl", "-q"]);
    assert_eq!(std::fs::read_to_string(dir.path().join("b.jsonl")).unwrap().lines().count(), 5);

    std::fs::write(dir.path().join("typo.json"), r#"{"sed": 3}"#).unwrap();
    let out = ctxaug(dir.path(), &["synthesize", "--config", "typo.json", "--pool", "pool.jsonl", "--out", "c.jsonl"]);
    assert!(stderr(&out).starts_with("error[config] "));

    let out = ctxaug(dir.path(), &["synthesize", "--seed", "1", "--error-rate", "1.5", "--pool", "pool.jsonl", "--out", "c.jsonl"]);
    assert!(stderr(&out).starts_with("error[config] "));
}

#[test]
fn stage_events_go_to_stderr_as_json() {
    let dir = tempfile::tempdir().unwrap();
    transport(dir.path());
    let out = ok(dir.path(), &["extract", "--in", "data.tsv", "--out", "pool.jsonl"]);
    assert!(out.stdout.is_empty());
    for line in stderr(&out).lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["stage"].is_string());
    }
}

#[test]
fn score_prints_fixed_report() {
    let dir = tempfile::tempdir().unwrap();
    let hyp = fixture("golden5.hyp.tsv");
    let gold = fixture("golden5.m2");
    let out = ok(dir.path(), &["score", "--hyp", hyp.to_str().unwrap(), "--gold", gold.to_str().unwrap(), "-q"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("Sentences  5\nTP         3\nFP         1\nFN         2\n"), "{text}");
    assert!(text.contains("F0.5       0.7143"));
}

#[test]
fn mix_sweep_writes_one_file_per_cap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::copy(fixture("pipeline100.tsv"), d.join("real.tsv")).unwrap();
    ok(d, &["extract", "--in", "real.tsv", "--out", "pool.jsonl", "-q"]);
    ok(d, &["synthesize", "--pool", "pool.jsonl", "--count", "60", "--seed", "2", "--out", "syn.jsonl", "-q"]);
    std::fs::write(d.join("plan.json"), r#"{"stage":"II","real_corpora":["real.tsv"],"synthetic_corpus":"syn.jsonl","seed":5}"#).unwrap();
    ok(d, &["mix", "--plan", "plan.json", "--sweep", "0,30,60", "--out", "sweep", "-q"]);
    for cap in [0, 30, 60] {
        let text = std::fs::read_to_string(d.join(format!("sweep/mix-cap{cap}.jsonl"))).unwrap();
        assert_eq!(text.lines().count(), 100 + cap);
    }
    let out = ctxaug(d, &["mix", "--plan", "plan.json", "--sweep", "10,10", "--out", "sweep2", "-q"]);
    assert!(stderr(&out).starts_with("error[mix] "));

    std::fs::write(d.join("stage1.json"), r#"{"stage":"I","real_corpora":["real.tsv"],"synthetic_corpus":"syn.jsonl","seed":5}"#).unwrap();
    let out = ctxaug(d, &["mix", "--plan", "stage1.json", "--out", "m.jsonl", "-q"]);
    assert!(stderr(&out).starts_with("error[mix] "));
}

#[test]
fn denoise_oracle_recovers_targets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::copy(fixture("pipeline100.tsv"), d.join("real.tsv")).unwrap();
    ok(d, &["extract", "--in", "real.tsv", "--out", "pool.jsonl", "-q"]);
    ok(d, &["synthesize", "--pool", "pool.jsonl", "--count", "80", "--seed", "4", "--error-rate", "1", "--out", "syn.jsonl", "-q"]);
    ok(d, &["denoise", "--in", "syn.jsonl", "--backend", "oracle", "--checkpoint", "ck.jsonl", "--out", "rel.jsonl", "-q"]);
    let diff: Value = serde_json::from_str(&std::fs::read_to_string(d.join("rel.diff.json")).unwrap()).unwrap();
    assert_eq!(diff["changed_targets"], 0);
    assert_eq!(diff["errorful_after"], 1.0);
}

#[cfg(feature = "http")]
#[test]
fn http_backend_needs_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    transport(dir.path());
    ok(dir.path(), &["extract", "--in", "data.tsv", "--out", "pool.jsonl", "-q"]);
    let out = ctxaug(dir.path(), &["synthesize", "--pool", "pool.jsonl", "--seed", "1", "--backend", "http", "--out", "s.jsonl"]);
    assert!(stderr(&out).starts_with("error[config] CTXAUG_GEN_URL"), "{}", stderr(&out));
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path(), 2);
    run_pipeline(b.path(), 2);
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(tb[k] == *v, "{k} differs");
    }
    assert!(ta.contains_key("syn.manifest.json"));
    assert!(ta.contains_key("stats.csv"));
}
