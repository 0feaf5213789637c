//! Error patterns, n-gram context extension, pattern pools and
//! frequency-matched sampling.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{extract, Edit};
use crate::corpus::{CorpusError, ParallelExample, Tokens};

/// Attempts at drawing two non-overlapping patterns before settling for one.
pub const PAIR_RETRIES: usize = 8;

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("n-gram width must be odd and at least 1, got {0}")]
    InvalidWidth(usize),
    #[error("pattern pool is empty")]
    EmptyPool,
    #[error("cannot merge pools of width {expected} and {found}")]
    MixedWidth { expected: usize, found: usize },
    #[error("pattern pool line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// A (wrong, correct) token-sequence pair at context width `n`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ErrorPattern {
    pub wrong: Tokens,
    pub correct: Tokens,
    pub n: usize,
}

impl ErrorPattern {
    pub fn new(wrong: Tokens, correct: Tokens, n: usize) -> Self {
        debug_assert_ne!(wrong, correct);
        ErrorPattern { wrong, correct, n }
    }

    /// Patterns with an empty correct side give a generator nothing to
    /// anchor on and are never sent for generation.
    pub fn is_sendable(&self) -> bool {
        !self.correct.is_empty()
    }

    /// Removes the shared leading and trailing context, recovering the bare
    /// edit content.
    pub fn strip_context(&self) -> (Tokens, Tokens) {
        let (w, c) = (&self.wrong, &self.correct);
        let max = w.len().min(c.len());
        let mut pre = 0;
        while pre < max && w[pre] == c[pre] && pre < (self.n - 1) / 2 {
            pre += 1;
        }
        let mut suf = 0;
        while suf < max - pre
            && w[w.len() - 1 - suf] == c[c.len() - 1 - suf]
            && suf < (self.n - 1) / 2
        {
            suf += 1;
        }
        (
            w[pre..w.len() - suf].to_vec(),
            c[pre..c.len() - suf].to_vec(),
        )
    }
}

fn half_width(n: usize) -> Result<usize, PatternError> {
    if n == 0 || n.is_multiple_of(2) {
        return Err(PatternError::InvalidWidth(n));
    }
    Ok((n - 1) / 2)
}

/// Widens `edit` by up to `k` shared context tokens on each side, staying
/// within `[lo, hi)` of the source.
fn widen(edit: &Edit, source: &[String], target: &[String], k: usize, lo: usize, hi: usize, n: usize) -> ErrorPattern {
    let (s, t) = (edit.src, edit.tgt);
    let mut left = 0;
    while left < k
        && s.start - left > lo
        && t.start > left
        && source[s.start - left - 1] == target[t.start - left - 1]
    {
        left += 1;
    }
    let mut right = 0;
    while right < k
        && s.end + right < hi
        && t.end + right < target.len()
        && source[s.end + right] == target[t.end + right]
    {
        right += 1;
    }
    ErrorPattern {
        wrong: source[s.start - left..s.end + right].to_vec(),
        correct: target[t.start - left..t.end + right].to_vec(),
        n,
    }
}

/// Extends a single edit to an n-gram pattern using the surrounding shared
/// tokens, truncated at the sentence boundaries.
pub fn extend_to_ngram(edit: &Edit, source: &[String], target: &[String], n: usize) -> Result<ErrorPattern, PatternError> {
    let k = half_width(n)?;
    Ok(widen(edit, source, target, k, 0, source.len(), n))
}

/// Extends every edit of a pair. Context windows stop at neighbouring edits,
/// so the context is always identical on both sides.
pub fn extend_edits(edits: &[Edit], source: &[String], target: &[String], n: usize) -> Result<Vec<ErrorPattern>, PatternError> {
    let k = half_width(n)?;
    Ok(edits
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let lo = if i == 0 { 0 } else { edits[i - 1].src.end };
            let hi = edits.get(i + 1).map_or(source.len(), |next| next.src.start);
            widen(e, source, target, k, lo, hi, n)
        })
        .collect())
}

/// Patterns of one pair at width `n`.
pub fn patterns_of(pair: &ParallelExample, n: usize) -> Result<Vec<ErrorPattern>, PatternError> {
    half_width(n)?;
    let edits = extract(&pair.source, &pair.target);
    extend_edits(&edits, &pair.source, &pair.target, n)
}

/// Frequency table of error patterns of one width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternPool {
    counts: BTreeMap<ErrorPattern, u64>,
    total: u64,
    n: usize,
    provenance: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PoolLine {
    wrong: Tokens,
    correct: Tokens,
    count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
}

impl PatternPool {
    pub fn new(n: usize) -> Result<Self, PatternError> {
        half_width(n)?;
        Ok(PatternPool {
            counts: BTreeMap::new(),
            total: 0,
            n,
            provenance: Vec::new(),
        })
    }

    pub fn with_provenance(mut self, id: impl Into<String>) -> Self {
        self.provenance.push(id.into());
        self
    }

    /// Adds `count` occurrences. Patterns of another width are rejected.
    pub fn add(&mut self, pattern: ErrorPattern, count: u64) -> Result<(), PatternError> {
        if pattern.n != self.n {
            return Err(PatternError::MixedWidth {
                expected: self.n,
                found: pattern.n,
            });
        }
        if count > 0 {
            *self.counts.entry(pattern).or_insert(0) += count;
            self.total += count;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct patterns.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn count(&self, pattern: &ErrorPattern) -> u64 {
        self.counts.get(pattern).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ErrorPattern, u64)> {
        self.counts.iter().map(|(p, &c)| (p, c))
    }

    /// Patterns by descending count, ties broken by pattern order.
    pub fn ranked(&self) -> Vec<(&ErrorPattern, u64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    pub fn top_k(&self, k: usize) -> Vec<(&ErrorPattern, u64)> {
        let mut v = self.ranked();
        v.truncate(k);
        v
    }

    /// The sub-pool of patterns that can be sent for generation.
    pub fn sendable(&self) -> PatternPool {
        let counts: BTreeMap<_, _> = self
            .counts
            .iter()
            .filter(|(p, _)| p.is_sendable())
            .map(|(p, &c)| (p.clone(), c))
            .collect();
        PatternPool {
            total: counts.values().sum(),
            counts,
            n: self.n,
            provenance: self.provenance.clone(),
        }
    }

    /// Serializes as JSONL, most frequent first.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (p, count) in self.ranked() {
            let line = PoolLine {
                wrong: p.wrong.clone(),
                correct: p.correct.clone(),
                count,
                n: Some(self.n),
            };
            out.push_str(&serde_json::to_string(&line).expect("pool line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), PatternError> {
        let path = path.as_ref();
        let io = |e| CorpusError::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        w.flush().map_err(io)?;
        Ok(())
    }

    /// Parses pool JSONL. Lines without an `n` key take `default_n`.
    pub fn from_reader<R: BufRead>(reader: R, default_n: Option<usize>) -> Result<Self, PatternError> {
        let mut pool: Option<PatternPool> = None;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| CorpusError::io("<pool>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: PoolLine = serde_json::from_str(&line).map_err(|e| PatternError::Schema {
                line: line_no,
                message: e.to_string(),
            })?;
            let n = raw.n.or(default_n).ok_or_else(|| PatternError::Schema {
                line: line_no,
                message: "missing `n` and no default width given".into(),
            })?;
            if raw.wrong == raw.correct {
                return Err(PatternError::Schema {
                    line: line_no,
                    message: "wrong and correct sides are identical".into(),
                });
            }
            if raw.count == 0 {
                return Err(PatternError::Schema {
                    line: line_no,
                    message: "count must be positive".into(),
                });
            }
            let pool = match &mut pool {
                Some(p) => p,
                None => pool.insert(PatternPool::new(n)?),
            };
            pool.add(ErrorPattern::new(raw.wrong, raw.correct, n), raw.count)?;
        }
        match (pool, default_n) {
            (Some(p), _) => Ok(p),
            (None, Some(n)) => PatternPool::new(n),
            (None, None) => Err(PatternError::EmptyPool),
        }
    }

    pub fn read_jsonl(path: impl AsRef<Path>, default_n: Option<usize>) -> Result<Self, PatternError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        let pool = Self::from_reader(BufReader::new(file), default_n)?;
        Ok(pool.with_provenance(path.display().to_string()))
    }
}

/// Counts every pattern of every pair.
pub fn build_pool<I>(corpus: I, n: usize) -> Result<PatternPool, PatternError>
where
    I: IntoIterator<Item = Result<ParallelExample, CorpusError>>,
{
    let mut pool = PatternPool::new(n)?;
    for pair in corpus {
        for p in patterns_of(&pair?, n)? {
            pool.add(p, 1)?;
        }
    }
    Ok(pool)
}

/// [`build_pool`] over an in-memory corpus, sharded across `workers`
/// threads. The result does not depend on the worker count.
pub fn build_pool_from(examples: &[ParallelExample], n: usize, workers: usize) -> Result<PatternPool, PatternError> {
    let chunk = examples.len().div_ceil(workers.max(1)).max(1);
    let shards: Vec<&[ParallelExample]> = examples.chunks(chunk).collect();
    let partial = crate::exec::map_indexed(shards.len(), workers, |i| {
        build_pool(shards[i].iter().cloned().map(Ok), n)
    });
    let mut pools = vec![PatternPool::new(n)?];
    for p in partial {
        pools.push(p?);
    }
    merge_pools(&pools)
}

/// Adds pools pointwise. All pools must share one width.
pub fn merge_pools(pools: &[PatternPool]) -> Result<PatternPool, PatternError> {
    let first = pools.first().ok_or(PatternError::EmptyPool)?;
    let mut merged = PatternPool::new(first.n)?;
    for pool in pools {
        if pool.n != first.n {
            return Err(PatternError::MixedWidth {
                expected: first.n,
                found: pool.n,
            });
        }
        for (p, c) in pool.iter() {
            merged.add(p.clone(), c)?;
        }
        merged.provenance.extend(pool.provenance.iter().cloned());
    }
    Ok(merged)
}

/// True when one correct side contains the other or they share a
/// prefix/suffix overlap, so matches in a generated sentence could collide.
pub fn correct_sides_overlap(a: &[String], b: &[String]) -> bool {
    if a.is_empty() || b.is_empty() {
        return false;
    }
    let contains = |hay: &[String], needle: &[String]| {
        needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
    };
    let chained = |x: &[String], y: &[String]| {
        (1..x.len().min(y.len())).any(|k| x[x.len() - k..] == y[..k])
    };
    contains(a, b) || contains(b, a) || chained(a, b) || chained(b, a)
}

/// Multinomial sampler over a pool's patterns, with replacement.
#[derive(Debug, Clone)]
pub struct PatternSampler {
    patterns: Vec<ErrorPattern>,
    index: WeightedIndex<u64>,
}

impl PatternSampler {
    pub fn new(pool: &PatternPool) -> Result<Self, PatternError> {
        if pool.is_empty() {
            return Err(PatternError::EmptyPool);
        }
        let (patterns, weights): (Vec<_>, Vec<_>) = pool.iter().map(|(p, c)| (p.clone(), c)).unzip();
        let index = WeightedIndex::new(weights).map_err(|_| PatternError::EmptyPool)?;
        Ok(PatternSampler { patterns, index })
    }

    /// One pattern, drawn with probability count / total.
    pub fn draw_one<R: Rng + ?Sized>(&self, rng: &mut R) -> &ErrorPattern {
        &self.patterns[self.index.sample(rng)]
    }

    /// One or two patterns (uniformly). Two draws whose correct sides overlap
    /// are redrawn up to [`PAIR_RETRIES`] times, then cut down to one.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<ErrorPattern> {
        let first = self.draw_one(rng).clone();
        if !rng.random_bool(0.5) {
            return vec![first];
        }
        for _ in 0..PAIR_RETRIES {
            let second = self.draw_one(rng);
            if !correct_sides_overlap(&first.correct, &second.correct) {
                return vec![first, second.clone()];
            }
        }
        vec![first]
    }
}

pub fn sample_patterns<R: Rng + ?Sized>(pool: &PatternPool, rng: &mut R) -> Result<Vec<ErrorPattern>, PatternError> {
    Ok(PatternSampler::new(pool)?.draw(rng))
}

/// Summary line for the `stats` command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoolStats {
    pub n: usize,
    pub patterns: usize,
    pub total: u64,
    pub sendable_patterns: usize,
    pub provenance: Vec<String>,
}

impl From<&PatternPool> for PoolStats {
    fn from(pool: &PatternPool) -> Self {
        PoolStats {
            n: pool.n,
            patterns: pool.len(),
            total: pool.total,
            sendable_patterns: pool.counts.keys().filter(|p| p.is_sendable()).count(),
            provenance: pool.provenance.clone(),
        }
    }
}
