//! Weighted Damerau-Levenshtein alignment of token sequences and the
//! merging of alignments into span edits.
//!
//! Costs are kept in half-units so the DP runs on integers:
//!
//! | operation                                   | cost    |
//! |---------------------------------------------|---------|
//! | match                                       | 0       |
//! | insert / delete                             | 1       |
//! | substitute, equal after lowercasing         | 1       |
//! | substitute, character similarity >= 0.5    | 1.5     |
//! | substitute, otherwise                       | 2       |
//! | transpose k tokens                          | k - 0.5 |
//!
//! Character similarity is `2 * lcs(a, b) / (|a| + |b|)` over chars.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelExample, Tokens};

/// Half-open `[start, end)` token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub const fn len(&self) -> usize {
        self.end - self.start
    }

    pub const fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Match,
    Substitute,
    Delete,
    Insert,
    Transpose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignOp {
    pub kind: OpKind,
    pub src: Span,
    pub tgt: Span,
}

/// Result of [`align`]: the operations and their total cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub ops: Vec<AlignOp>,
    cost_halves: u32,
}

impl Alignment {
    pub fn cost(&self) -> f64 {
        self.cost_halves as f64 / 2.0
    }
}

const INDEL: u32 = 2;

/// Normalized longest common subsequence of two strings' characters.
pub fn char_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for &ca in &a {
        let mut diag = 0;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    2.0 * row[b.len()] as f64 / (a.len() + b.len()) as f64
}

/// Cost of substituting `a` by `b`, in half-units. Zero iff equal.
fn substitution_halves(a: &str, b: &str) -> u32 {
    if a == b {
        0
    } else if a.to_lowercase() == b.to_lowercase() {
        2
    } else if char_similarity(a, b) >= 0.5 {
        3
    } else {
        4
    }
}

/// Substitution cost of two tokens (0 for identical tokens).
pub fn substitution_cost(a: &str, b: &str) -> f64 {
    substitution_halves(a, b) as f64 / 2.0
}

fn intern<'a>(source: &'a [String], target: &'a [String]) -> (Vec<u32>, Vec<u32>, usize) {
    let mut ids: HashMap<&'a str, u32> = HashMap::new();
    let mut get = |t: &'a String| {
        let next = ids.len() as u32;
        *ids.entry(t.as_str()).or_insert(next)
    };
    let s: Vec<u32> = source.iter().map(&mut get).collect();
    let t: Vec<u32> = target.iter().map(&mut get).collect();
    let n = ids.len();
    (s, t, n)
}

/// Aligns two token sequences at minimal cost.
///
/// `dist[i][j]` holds the cost of aligning the suffixes `source[i..]` and
/// `target[j..]`; the trace walks forward from `(0, 0)`, so cost ties are
/// resolved at the leftmost position first, in the order
/// match > substitute > delete > insert > transpose.
pub fn align(source: &[String], target: &[String]) -> Alignment {
    let (n, m) = (source.len(), target.len());
    let (sid, tid, vocab) = intern(source, target);
    let w = m + 1;
    let mut dist = vec![0u32; (n + 1) * w];
    // best transposition length and its cost at each cell
    let mut swap = vec![(0usize, u32::MAX); (n + 1) * w];
    let mut sub_cache: HashMap<(u32, u32), u32> = HashMap::new();
    let mut sub = |i: usize, j: usize| -> u32 {
        let key = (sid[i], tid[j]);
        *sub_cache
            .entry(key)
            .or_insert_with(|| substitution_halves(&source[i], &target[j]))
    };

    let mut counts = vec![0i32; vocab];
    let mut touched: Vec<u32> = Vec::new();

    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            let at = i * w + j;
            if i == n && j == m {
                dist[at] = 0;
                continue;
            }
            let mut best = u32::MAX;
            if i < n && j < m {
                best = best.min(sub(i, j) + dist[(i + 1) * w + j + 1]);
            }
            if i < n {
                best = best.min(INDEL + dist[(i + 1) * w + j]);
            }
            if j < m {
                best = best.min(INDEL + dist[i * w + j + 1]);
            }

            // transpositions: equal multisets, unequal sequences
            let mut nonzero = 0usize;
            let mut same_seq = true;
            let mut k = 0;
            while i + k < n && j + k < m {
                for (tok, delta) in [(sid[i + k], 1), (tid[j + k], -1)] {
                    let c = &mut counts[tok as usize];
                    if *c == 0 {
                        nonzero += 1;
                        touched.push(tok);
                    }
                    *c += delta;
                    if *c == 0 {
                        nonzero -= 1;
                    }
                }
                same_seq &= sid[i + k] == tid[j + k];
                k += 1;
                if k >= 2 && nonzero == 0 && !same_seq {
                    let c = 2 * k as u32 - 1 + dist[(i + k) * w + j + k];
                    if c < swap[at].1 {
                        swap[at] = (k, c);
                    }
                }
            }
            for tok in touched.drain(..) {
                counts[tok as usize] = 0;
            }
            dist[at] = best.min(swap[at].1);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = dist[i * w + j];
        let op = if i < n && j < m && {
            let s = sub(i, j);
            s + dist[(i + 1) * w + j + 1] == here
        } {
            let kind = if sid[i] == tid[j] {
                OpKind::Match
            } else {
                OpKind::Substitute
            };
            (kind, 1, 1)
        } else if i < n && INDEL + dist[(i + 1) * w + j] == here {
            (OpKind::Delete, 1, 0)
        } else if j < m && INDEL + dist[i * w + j + 1] == here {
            (OpKind::Insert, 0, 1)
        } else {
            let (k, c) = swap[i * w + j];
            debug_assert_eq!(c, here);
            (OpKind::Transpose, k, k)
        };
        let (kind, di, dj) = op;
        ops.push(AlignOp {
            kind,
            src: Span::new(i, i + di),
            tgt: Span::new(j, j + dj),
        });
        i += di;
        j += dj;
    }
    Alignment {
        ops,
        cost_halves: dist[0],
    }
}

/// Minimal-cost alignment operations of `source` against `target`.
pub fn align_tokens(source: &[String], target: &[String]) -> Vec<AlignOp> {
    align(source, target).ops
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditType {
    Insertion,
    Deletion,
    Substitution,
}

/// A span replacement turning part of the source into part of the target.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edit {
    pub src: Span,
    pub tgt: Span,
    pub replacement: Tokens,
    pub kind: EditType,
}

/// Collapses maximal runs of adjacent non-match operations into edits.
pub fn merge_edits(ops: &[AlignOp], source: &[String], target: &[String]) -> Vec<Edit> {
    let mut edits = Vec::new();
    let mut run: Option<(Span, Span)> = None;
    let flush = |run: &mut Option<(Span, Span)>, edits: &mut Vec<Edit>| {
        if let Some((src, tgt)) = run.take() {
            let replacement = target[tgt.start..tgt.end].to_vec();
            if source[src.start..src.end] == replacement[..] {
                return;
            }
            let kind = if src.is_empty() {
                EditType::Insertion
            } else if replacement.is_empty() {
                EditType::Deletion
            } else {
                EditType::Substitution
            };
            edits.push(Edit {
                src,
                tgt,
                replacement,
                kind,
            });
        }
    };
    for op in ops {
        if op.kind == OpKind::Match {
            flush(&mut run, &mut edits);
            continue;
        }
        run = Some(match run {
            None => (op.src, op.tgt),
            Some((s, t)) => (Span::new(s.start, op.src.end), Span::new(t.start, op.tgt.end)),
        });
    }
    flush(&mut run, &mut edits);
    edits
}

/// Edits turning `source` into `target`. Empty for identical sequences.
pub fn extract(source: &[String], target: &[String]) -> Vec<Edit> {
    if source == target {
        return Vec::new();
    }
    merge_edits(&align_tokens(source, target), source, target)
}

pub fn extract_edits(pair: &ParallelExample) -> Vec<Edit> {
    extract(&pair.source, &pair.target)
}

/// Applies sorted, non-overlapping edits to `source`.
pub fn apply_edits(source: &[String], edits: &[Edit]) -> Tokens {
    let mut out = Vec::with_capacity(source.len());
    let mut pos = 0;
    for e in edits {
        out.extend_from_slice(&source[pos..e.src.start]);
        out.extend(e.replacement.iter().cloned());
        pos = e.src.end;
    }
    out.extend_from_slice(&source[pos..]);
    out
}
