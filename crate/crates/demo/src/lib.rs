//! WebAssembly bindings behind `www/index.html`.
//!
//! Each export takes plain values and returns a JSON string; the `*_json`
//! functions hold the logic so they can be tested natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use ctxaug::align::extract;
use ctxaug::corpus::{detokenize, tokenize, ParallelExample};
use ctxaug::eval::f_beta;
use ctxaug::genbackend::StubGenerator;
use ctxaug::pattern::{build_pool, extend_edits};
use ctxaug::synth::{synthesize, SynthConfig};

fn pattern_json(wrong: &[String], correct: &[String]) -> Value {
    json!({ "wrong": detokenize(wrong), "correct": detokenize(correct) })
}

pub fn extract_json(source: &str, target: &str, n: usize) -> Result<String, String> {
    let (src, tgt) = (tokenize(source), tokenize(target));
    let edits = extract(&src, &tgt);
    let patterns = extend_edits(&edits, &src, &tgt, n).map_err(|e| e.to_string())?;
    let out = json!({
        "edits": edits.iter().map(|e| json!({
            "kind": e.kind,
            "src": [e.src.start, e.src.end],
            "original": detokenize(&src[e.src.start..e.src.end]),
            "replacement": detokenize(&e.replacement),
        })).collect::<Vec<_>>(),
        "patterns": patterns.iter().map(|p| pattern_json(&p.wrong, &p.correct)).collect::<Vec<_>>(),
    });
    Ok(out.to_string())
}

/// Builds a pool from tab-separated `source<TAB>target` lines and runs the
/// stub generator over it.
pub fn synthesize_json(corpus: &str, n: usize, count: usize, error_rate: f64, seed: u64) -> Result<String, String> {
    let pairs = corpus
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| match line.split_once('\t') {
            Some((s, t)) => Ok(ParallelExample::from_text(i.to_string(), s, t)),
            None => Err(format!("line {}: expected source<TAB>target", i + 1)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pool = build_pool(pairs.into_iter().map(Ok), n).map_err(|e| e.to_string())?;
    let config = SynthConfig::new(count, error_rate, seed);
    let out = synthesize(&pool, &StubGenerator::new(seed), &config).map_err(|e| e.to_string())?;
    Ok(json!({
        "pool": pool.ranked().iter().map(|(p, c)| {
            let mut v = pattern_json(&p.wrong, &p.correct);
            v["count"] = json!(c);
            v
        }).collect::<Vec<_>>(),
        "samples": out.samples.iter().map(|s| json!({
            "source": detokenize(&s.source),
            "target": detokenize(&s.target),
            "planted": s.planted.iter().map(|p| pattern_json(&p.pattern.wrong, &p.pattern.correct)).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "errorful_fraction": out.stats.errorful_fraction(),
    })
    .to_string())
}

pub fn fbeta_json(tp: i64, fp: i64, fn_: i64, beta: f64) -> Result<String, String> {
    let f = f_beta(tp, fp, fn_, beta).map_err(|e| e.to_string())?;
    let ratio = |a: i64, b: i64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(json!({
        "precision": ratio(tp, tp + fp),
        "recall": ratio(tp, tp + fn_),
        "f": f,
    })
    .to_string())
}

#[wasm_bindgen(js_name = extractPatterns)]
pub fn extract_patterns(source: &str, target: &str, n: usize) -> Result<String, JsError> {
    extract_json(source, target, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = synthesizeStub)]
pub fn synthesize_stub(corpus: &str, n: usize, count: usize, error_rate: f64, seed: u64) -> Result<String, JsError> {
    synthesize_json(corpus, n, count, error_rate, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = fBeta)]
pub fn f_beta_scores(tp: i64, fp: i64, fn_: i64, beta: f64) -> Result<String, JsError> {
    fbeta_json(tp, fp, fn_, beta).map_err(|e| JsError::new(&e))
}
