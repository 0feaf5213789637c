//! Relabeling synthetic pairs with a corrector, and measuring how much the
//! relabeling changed.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::align::extract;
use crate::corpus::{detokenize, parse_jsonl_line, to_jsonl_line, tokenize, CorpusError, ParallelExample};
use crate::http::TransportError;
use crate::synth::SyntheticSample;

/// Pairs written to the checkpoint between flushes.
pub const CHECKPOINT_EVERY: usize = 1000;

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("corrector failed on {id}: {source}; last completed id: {}", .last_completed.as_deref().unwrap_or("none"))]
    Corrector {
        id: String,
        last_completed: Option<String>,
        #[source]
        source: TransportError,
    },
    #[error("checkpoint {path} does not match the input: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("corpora differ in length: {before} vs {after}")]
    LengthMismatch { before: usize, after: usize },
    #[error("id mismatch at position {index}: {before} vs {after}")]
    IdMismatch { index: usize, before: String, after: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub trait Corrector: Send + Sync {
    fn id(&self) -> &str;
    fn correct(&self, id: &str, text: &str) -> Result<String, TransportError>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCorrector;

impl Corrector for IdentityCorrector {
    fn id(&self) -> &str {
        "identity"
    }

    fn correct(&self, _id: &str, text: &str) -> Result<String, TransportError> {
        Ok(text.to_owned())
    }
}

/// Knows the planted patterns of a synthetic corpus and puts their correct
/// sides back, i.e. a perfect corrector for that corpus.
#[derive(Debug, Clone, Default)]
pub struct OracleCorrector {
    answers: HashMap<String, String>,
}

impl OracleCorrector {
    pub fn new(samples: &[SyntheticSample]) -> Self {
        OracleCorrector {
            answers: samples
                .iter()
                .map(|s| (s.id.clone(), detokenize(&s.replant())))
                .collect(),
        }
    }
}

impl Corrector for OracleCorrector {
    fn id(&self) -> &str {
        "oracle"
    }

    fn correct(&self, id: &str, text: &str) -> Result<String, TransportError> {
        Ok(self.answers.get(id).cloned().unwrap_or_else(|| text.to_owned()))
    }
}

#[derive(Debug, Serialize)]
pub struct HttpCorrectionBody<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

pub const CORRECTOR_URL_ENV: &str = "CTXAUG_CORRECTOR_URL";
pub const CORRECTOR_TOKEN_ENV: &str = "CTXAUG_CORRECTOR_TOKEN";

/// Corrector service speaking `{"id", "text"}` → `{"text"}`.
#[cfg(feature = "http")]
#[derive(Debug, Clone)]
pub struct HttpCorrector {
    client: crate::http::JsonClient,
    id: String,
}

#[cfg(feature = "http")]
impl HttpCorrector {
    pub fn new(url: impl Into<String>, token: Option<String>, policy: crate::http::RetryPolicy) -> Self {
        let url = url.into();
        HttpCorrector {
            id: format!("http:{url}"),
            client: crate::http::JsonClient::new(url, token, policy),
        }
    }

    pub fn from_env() -> Option<Self> {
        let url = std::env::var(CORRECTOR_URL_ENV).ok()?;
        let token = std::env::var(CORRECTOR_TOKEN_ENV).ok();
        Some(Self::new(url, token, Default::default()))
    }
}

#[cfg(feature = "http")]
impl Corrector for HttpCorrector {
    fn id(&self) -> &str {
        &self.id
    }

    fn correct(&self, id: &str, text: &str) -> Result<String, TransportError> {
        let (resp, _) = self
            .client
            .post::<_, crate::genbackend::HttpTextResponse>(&HttpCorrectionBody { id, text })?;
        Ok(resp.text)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RelabelOptions {
    pub workers: usize,
    /// JSONL file of finished pairs; an existing one is resumed from.
    pub checkpoint: Option<PathBuf>,
}

fn relabel_one(sample: &SyntheticSample, corrector: &dyn Corrector) -> Result<ParallelExample, TransportError> {
    let text = corrector.correct(&sample.id, &detokenize(&sample.source))?;
    let target = tokenize(&text);
    let mut pair = ParallelExample {
        id: sample.id.clone(),
        source: sample.source.clone(),
        target,
        meta: Default::default(),
    };
    pair.meta.insert("agrees_with_target".into(), Value::Bool(pair.target == sample.target));
    pair.meta.insert("agrees_with_source".into(), Value::Bool(pair.target == sample.source));
    pair.meta.insert("corrector".into(), Value::String(corrector.id().to_owned()));
    Ok(pair)
}

fn load_checkpoint(path: &Path, samples: &[SyntheticSample]) -> Result<Vec<ParallelExample>, DenoiseError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CorpusError::io(path, e).into()),
    };
    let mut done = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair = parse_jsonl_line(i + 1, &line)?;
        let expected = samples.get(done.len()).map(|s| s.id.as_str());
        if expected != Some(pair.id.as_str()) {
            return Err(DenoiseError::Checkpoint {
                path: path.to_owned(),
                message: format!("entry {} has id {}, expected {:?}", done.len(), pair.id, expected),
            });
        }
        done.push(pair);
    }
    Ok(done)
}

/// Replaces each sample's target with the corrector's output on its
/// source. Order and length are preserved. With a checkpoint path, finished
/// pairs are appended every [`CHECKPOINT_EVERY`] samples and a rerun skips
/// them.
pub fn relabel(samples: &[SyntheticSample], corrector: &dyn Corrector, options: &RelabelOptions) -> Result<Vec<ParallelExample>, DenoiseError> {
    let mut out = match &options.checkpoint {
        Some(path) => load_checkpoint(path, samples)?,
        None => Vec::new(),
    };
    let mut sink = match &options.checkpoint {
        Some(path) => {
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| CorpusError::io(path, e))?;
            Some((path.clone(), BufWriter::new(f)))
        }
        None => None,
    };

    while out.len() < samples.len() {
        let start = out.len();
        let chunk = &samples[start..(start + CHECKPOINT_EVERY).min(samples.len())];
        let results = crate::exec::map_indexed(chunk.len(), options.workers, |i| relabel_one(&chunk[i], corrector));
        let mut failure = None;
        let mut fresh = Vec::with_capacity(chunk.len());
        for (sample, result) in chunk.iter().zip(results) {
            match result {
                Ok(pair) => fresh.push(pair),
                Err(e) => {
                    failure = Some((sample.id.clone(), e));
                    break;
                }
            }
        }
        if let Some((path, w)) = sink.as_mut() {
            for pair in &fresh {
                writeln!(w, "{}", to_jsonl_line(pair)).map_err(|e| CorpusError::io(path.as_path(), e))?;
            }
            w.flush().map_err(|e| CorpusError::io(path.as_path(), e))?;
        }
        out.extend(fresh);
        if let Some((id, source)) = failure {
            return Err(DenoiseError::Corrector {
                id,
                last_completed: out.last().map(|p| p.id.clone()),
                source,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub pairs: usize,
    pub changed_targets: usize,
    pub changed_fraction: f64,
    /// Tokens touched by target edits over tokens in the earlier targets.
    pub token_change_rate: f64,
    pub errorful_before: f64,
    pub errorful_after: f64,
}

fn fraction(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn relabel_diff_stats(before: &[ParallelExample], after: &[ParallelExample]) -> Result<DiffReport, DenoiseError> {
    if before.len() != after.len() {
        return Err(DenoiseError::LengthMismatch {
            before: before.len(),
            after: after.len(),
        });
    }
    let (mut changed, mut touched, mut tokens, mut err_before, mut err_after) = (0, 0, 0, 0, 0);
    for (index, (b, a)) in before.iter().zip(after).enumerate() {
        if b.id != a.id {
            return Err(DenoiseError::IdMismatch {
                index,
                before: b.id.clone(),
                after: a.id.clone(),
            });
        }
        tokens += b.target.len();
        if b.target != a.target {
            changed += 1;
            touched += extract(&b.target, &a.target)
                .iter()
                .map(|e| e.src.len().max(e.tgt.len()))
                .sum::<usize>();
        }
        err_before += usize::from(b.is_errorful());
        err_after += usize::from(a.is_errorful());
    }
    Ok(DiffReport {
        pairs: before.len(),
        changed_targets: changed,
        changed_fraction: fraction(changed, before.len()),
        token_change_rate: fraction(touched, tokens),
        errorful_before: fraction(err_before, before.len()),
        errorful_after: fraction(err_after, before.len()),
    })
}
