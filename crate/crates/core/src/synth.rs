//! Pattern matching in generated contexts, wrong-side substitution and the
//! end-to-end synthesis pipeline.
//!
//! Each output slot owns a ChaCha stream selected by its index, so the
//! produced corpus is identical for any worker count.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::Span;
use crate::corpus::{detokenize, tokenize, CorpusError, ParallelExample, Tokens};
use crate::genbackend::{assemble_input, generate, GenError, GenerationStatus, Generator};
use crate::pattern::{ErrorPattern, PatternError, PatternPool, PatternSampler};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("error rate must lie in [0, 1], got {0}")]
    InvalidErrorRate(f64),
    #[error("sample count must be positive")]
    ZeroCount,
    #[error("pool has no pattern with a non-empty correct side")]
    NothingToGenerate,
    #[error(
        "attempt budget of {budget} exhausted: {refused} refused, {transport_error} transport errors, {zero_match} without a matched pattern"
    )]
    BudgetExhausted {
        budget: usize,
        refused: u64,
        transport_error: u64,
        zero_match: u64,
    },
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

/// A pattern located in a generated sentence (span over the sentence).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Match {
    pub pattern: ErrorPattern,
    pub span: Span,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchOutcome {
    /// Sorted by span start, pairwise non-overlapping.
    pub matched: Vec<Match>,
    pub unmatched: Vec<ErrorPattern>,
}

fn find(hay: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Locates each pattern's correct side at its leftmost occurrence
/// (case-sensitive). When two occurrences overlap the one starting first
/// wins and the other pattern is reported unmatched.
pub fn match_patterns(sentence: &[String], patterns: &[ErrorPattern]) -> MatchOutcome {
    let mut found: Vec<(usize, usize, Span)> = Vec::new();
    let mut outcome = MatchOutcome::default();
    for (i, p) in patterns.iter().enumerate() {
        match find(sentence, &p.correct) {
            Some(start) => found.push((start, i, Span::new(start, start + p.correct.len()))),
            None => outcome.unmatched.push(p.clone()),
        }
    }
    found.sort();
    for (_, i, span) in found {
        if outcome.matched.iter().any(|m| m.span.overlaps(&span)) {
            outcome.unmatched.push(patterns[i].clone());
        } else {
            outcome.matched.push(Match {
                pattern: patterns[i].clone(),
                span,
            });
        }
    }
    outcome
}

/// A pattern substituted into the source; `span` indexes the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Planted {
    pub pattern: ErrorPattern,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSample {
    pub id: String,
    /// The generated (correct) sentence.
    pub target: Tokens,
    /// `target` with the planted patterns' wrong sides.
    pub source: Tokens,
    pub planted: Vec<Planted>,
    pub requested: Vec<ErrorPattern>,
    pub generator_id: String,
}

impl SyntheticSample {
    pub fn to_parallel(&self) -> ParallelExample {
        ParallelExample {
            id: self.id.clone(),
            source: self.source.clone(),
            target: self.target.clone(),
            meta: Default::default(),
        }
    }

    /// Puts the planted patterns' correct sides back into the source.
    pub fn replant(&self) -> Tokens {
        let mut out = Vec::with_capacity(self.target.len());
        let mut pos = 0;
        for p in &self.planted {
            out.extend_from_slice(&self.source[pos..p.span.start]);
            out.extend(p.pattern.correct.iter().cloned());
            pos = p.span.end;
        }
        out.extend_from_slice(&self.source[pos..]);
        out
    }
}

/// Replaces every matched correct side with its wrong side.
pub fn plant(sentence: &[String], matches: &[Match]) -> (Tokens, Vec<Planted>) {
    let mut source = Vec::with_capacity(sentence.len());
    let mut planted = Vec::with_capacity(matches.len());
    let mut pos = 0;
    for m in matches {
        source.extend_from_slice(&sentence[pos..m.span.start]);
        let start = source.len();
        source.extend(m.pattern.wrong.iter().cloned());
        planted.push(Planted {
            pattern: m.pattern.clone(),
            span: Span::new(start, source.len()),
        });
        pos = m.span.end;
    }
    source.extend_from_slice(&sentence[pos..]);
    (source, planted)
}

/// One Bernoulli(`error_rate`) draw decides whether all matches are
/// substituted or the sentence is kept as a correct-only pair.
pub fn substitute<R: Rng + ?Sized>(sentence: &[String], outcome: &MatchOutcome, rng: &mut R, error_rate: f64) -> SyntheticSample {
    let errorful = rng.random_bool(error_rate.clamp(0.0, 1.0));
    let (source, planted) = if errorful {
        plant(sentence, &outcome.matched)
    } else {
        (sentence.to_vec(), Vec::new())
    };
    SyntheticSample {
        id: String::new(),
        target: sentence.to_vec(),
        source,
        planted,
        requested: outcome
            .matched
            .iter()
            .map(|m| m.pattern.clone())
            .chain(outcome.unmatched.iter().cloned())
            .collect(),
        generator_id: String::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub error_rate: f64,
    pub seed: u64,
    pub workers: usize,
    /// Total generation attempts allowed; defaults to `3 * count`.
    pub attempt_budget: Option<usize>,
}

impl SynthConfig {
    pub fn new(count: usize, error_rate: f64, seed: u64) -> Self {
        SynthConfig {
            count,
            error_rate,
            seed,
            workers: 1,
            attempt_budget: None,
        }
    }

    pub fn budget(&self) -> usize {
        self.attempt_budget.unwrap_or(3 * self.count)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub refused: u64,
    pub transport_error: u64,
    pub zero_match: u64,
}

/// Pipeline counters. All fields are integers so merging is exact and
/// order-independent; fractions are derived on output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthStats {
    pub samples: u64,
    pub errorful: u64,
    pub attempts: u64,
    pub generations_ok: u64,
    pub patterns_requested: u64,
    pub patterns_matched: u64,
    pub patterns_unmatched: u64,
    pub patterns_planted: u64,
    pub failures: FailureCounts,
}

impl SynthStats {
    pub fn merge(&mut self, o: &SynthStats) {
        self.samples += o.samples;
        self.errorful += o.errorful;
        self.attempts += o.attempts;
        self.generations_ok += o.generations_ok;
        self.patterns_requested += o.patterns_requested;
        self.patterns_matched += o.patterns_matched;
        self.patterns_unmatched += o.patterns_unmatched;
        self.patterns_planted += o.patterns_planted;
        self.failures.refused += o.failures.refused;
        self.failures.transport_error += o.failures.transport_error;
        self.failures.zero_match += o.failures.zero_match;
    }

    fn ratio(a: u64, b: u64) -> f64 {
        if b == 0 {
            0.0
        } else {
            a as f64 / b as f64
        }
    }

    pub fn errorful_fraction(&self) -> f64 {
        Self::ratio(self.errorful, self.samples)
    }

    /// Unmatched patterns over all patterns sent in successful generations.
    pub fn unmatched_rate(&self) -> f64 {
        Self::ratio(self.patterns_unmatched, self.patterns_requested)
    }

    /// The sidecar JSON report.
    pub fn report(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("stats serialize");
        v["errorful_fraction"] = self.errorful_fraction().into();
        v["unmatched_rate"] = self.unmatched_rate().into();
        v
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub samples: Vec<SyntheticSample>,
    pub stats: SynthStats,
}

enum Slot {
    Done(SyntheticSample, SynthStats),
    Exhausted(SynthStats),
}

fn run_slot(
    index: usize,
    sampler: &PatternSampler,
    backend: &dyn Generator,
    config: &SynthConfig,
    spent: &AtomicUsize,
) -> Result<Slot, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let mut stats = SynthStats::default();
    // drawn once per slot so retries cannot bias the error rate
    let errorful = rng.random_bool(config.error_rate);
    let budget = config.budget();
    for attempt in 0.. {
        if spent.fetch_add(1, Ordering::Relaxed) >= budget {
            return Ok(Slot::Exhausted(stats));
        }
        stats.attempts += 1;
        let patterns = sampler.draw(&mut rng);
        let correct: Vec<Tokens> = patterns.iter().map(|p| p.correct.clone()).collect();
        let request = assemble_input(format!("{index}-{attempt}"), &correct, &mut rng)?;
        let result = generate(&request, backend);
        match result.status {
            GenerationStatus::Ok => stats.generations_ok += 1,
            GenerationStatus::Refused => {
                stats.failures.refused += 1;
                continue;
            }
            GenerationStatus::TransportError => {
                stats.failures.transport_error += 1;
                continue;
            }
        }
        let sentence = tokenize(&result.text);
        let outcome = match_patterns(&sentence, &patterns);
        stats.patterns_requested += patterns.len() as u64;
        stats.patterns_matched += outcome.matched.len() as u64;
        stats.patterns_unmatched += outcome.unmatched.len() as u64;
        if errorful && outcome.matched.is_empty() {
            stats.failures.zero_match += 1;
            continue;
        }
        let (source, planted) = if errorful {
            plant(&sentence, &outcome.matched)
        } else {
            (sentence.clone(), Vec::new())
        };
        stats.samples = 1;
        stats.errorful = u64::from(errorful);
        stats.patterns_planted = planted.len() as u64;
        let sample = SyntheticSample {
            id: index.to_string(),
            target: sentence,
            source,
            planted,
            requested: patterns,
            generator_id: backend.id().to_owned(),
        };
        return Ok(Slot::Done(sample, stats));
    }
    unreachable!("attempt loop only exits by returning")
}

/// Produces `config.count` synthetic samples from the sendable part of
/// `pool`.
pub fn synthesize(pool: &PatternPool, backend: &dyn Generator, config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    if !(0.0..=1.0).contains(&config.error_rate) {
        return Err(SynthError::InvalidErrorRate(config.error_rate));
    }
    if config.count == 0 {
        return Err(SynthError::ZeroCount);
    }
    let sendable = pool.sendable();
    if sendable.is_empty() {
        return Err(SynthError::NothingToGenerate);
    }
    let sampler = PatternSampler::new(&sendable)?;
    let spent = AtomicUsize::new(0);
    let slots = crate::exec::map_indexed(config.count, config.workers, |i| {
        run_slot(i, &sampler, backend, config, &spent)
    });

    let mut samples = Vec::with_capacity(config.count);
    let mut stats = SynthStats::default();
    let mut exhausted = false;
    for slot in slots {
        match slot? {
            Slot::Done(sample, s) => {
                samples.push(sample);
                stats.merge(&s);
            }
            Slot::Exhausted(s) => {
                exhausted = true;
                stats.merge(&s);
            }
        }
    }
    if exhausted {
        return Err(SynthError::BudgetExhausted {
            budget: config.budget(),
            refused: stats.failures.refused,
            transport_error: stats.failures.transport_error,
            zero_match: stats.failures.zero_match,
        });
    }
    Ok(SynthOutput { samples, stats })
}

// ---------------------------------------------------------------------------
// JSONL records

#[derive(Serialize, Deserialize)]
struct PatternRecord {
    wrong: Tokens,
    correct: Tokens,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    span: Option<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    source: String,
    target: String,
    planted: Vec<PatternRecord>,
    requested: Vec<PatternRecord>,
    n: usize,
    generator: String,
}

fn record_of(s: &SyntheticSample) -> SampleRecord {
    let n = s.requested.first().map_or(1, |p| p.n);
    SampleRecord {
        id: s.id.clone(),
        source: detokenize(&s.source),
        target: detokenize(&s.target),
        planted: s
            .planted
            .iter()
            .map(|p| PatternRecord {
                wrong: p.pattern.wrong.clone(),
                correct: p.pattern.correct.clone(),
                span: Some([p.span.start, p.span.end]),
            })
            .collect(),
        requested: s
            .requested
            .iter()
            .map(|p| PatternRecord {
                wrong: p.wrong.clone(),
                correct: p.correct.clone(),
                span: None,
            })
            .collect(),
        n,
        generator: s.generator_id.clone(),
    }
}

pub fn sample_to_jsonl(sample: &SyntheticSample) -> String {
    serde_json::to_string(&record_of(sample)).expect("sample serializes")
}

pub fn sample_from_jsonl(line: usize, text: &str) -> Result<SyntheticSample, SynthError> {
    let r: SampleRecord = serde_json::from_str(text).map_err(|e| SynthError::Schema {
        line,
        message: e.to_string(),
    })?;
    let schema = |message: &str| SynthError::Schema {
        line,
        message: message.to_owned(),
    };
    let source = tokenize(&r.source);
    let planted = r
        .planted
        .into_iter()
        .map(|p| {
            let [start, end] = p.span.ok_or_else(|| schema("planted pattern without span"))?;
            if start > end || end > source.len() || source[start..end] != p.wrong[..] {
                return Err(schema("planted span does not hold the wrong side"));
            }
            Ok(Planted {
                pattern: ErrorPattern::new(p.wrong, p.correct, r.n),
                span: Span::new(start, end),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(SyntheticSample {
        id: r.id,
        target: tokenize(&r.target),
        source,
        planted,
        requested: r
            .requested
            .into_iter()
            .map(|p| ErrorPattern::new(p.wrong, p.correct, r.n))
            .collect(),
        generator_id: r.generator,
    })
}

pub fn write_samples(samples: &[SyntheticSample], path: impl AsRef<Path>) -> Result<(), SynthError> {
    let path = path.as_ref();
    let io = |e| CorpusError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for s in samples {
        writeln!(w, "{}", sample_to_jsonl(s)).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<SyntheticSample>, SynthError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(sample_from_jsonl(i + 1, &line)?);
    }
    Ok(out)
}

/// Frequencies of planted patterns, as a pool of the samples' width.
pub fn planted_pool(samples: &[SyntheticSample], n: usize) -> Result<PatternPool, PatternError> {
    let mut pool = PatternPool::new(n)?;
    for s in samples {
        for p in &s.planted {
            pool.add(p.pattern.clone(), 1)?;
        }
    }
    Ok(pool)
}
