#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Runs the binary inside `dir`.
pub fn ctxaug(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxaug"))
        .current_dir(dir)
        .args(args)
        .env_remove("CTXAUG_GEN_URL")
        .env_remove("CTXAUG_CORRECTOR_URL")
        .output()
        .expect("binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ctxaug(dir, args);
    assert!(
        out.status.success(),
        "ctxaug {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// extract → pool → synthesize(stub) → denoise(identity) → mix → stats →
/// score, all inside `dir`.
pub fn run_pipeline(dir: &Path, workers: usize) {
    let w = workers.to_string();
    let data = fixture("pipeline100.tsv");
    std::fs::copy(&data, dir.join("real.tsv")).unwrap();
    let steps: Vec<Vec<&str>> = vec![
        vec!["extract", "--in", "real.tsv", "--n", "3", "--out", "pool.jsonl"],
        vec!["pool", "--in", "pool.jsonl", "--out", "merged.jsonl", "--top-k", "5"],
        vec!["synthesize", "--pool", "merged.jsonl", "--count", "300", "--error-rate", "0.5", "--seed", "7", "--out", "syn.jsonl"],
        vec!["denoise", "--in", "syn.jsonl", "--backend", "identity", "--out", "relabeled.jsonl"],
        vec!["mix", "--plan", "plan.json", "--out", "mixed.jsonl"],
        vec!["stats", "--ref-pool", "pool.jsonl", "--corpus", "syn.jsonl", "--top-k", "20", "--out", "stats.json"],
        vec!["score", "--hyp", "hyp.tsv", "--gold", "gold.m2", "--out", "score.json"],
    ];
    std::fs::write(
        dir.join("plan.json"),
        r#"{"stage": "III", "real_corpora": ["real.tsv"], "synthetic_corpus": "syn.jsonl", "synthetic_count": 200, "seed": 11}"#,
    )
    .unwrap();
    std::fs::copy(fixture("golden5.hyp.tsv"), dir.join("hyp.tsv")).unwrap();
    std::fs::copy(fixture("golden5.m2"), dir.join("gold.m2")).unwrap();
    for step in steps {
        let mut args = step;
        args.extend(["--workers", &w, "--quiet"]);
        ok(dir, &args);
    }
}

/// Every file under `dir`, keyed by relative path.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
