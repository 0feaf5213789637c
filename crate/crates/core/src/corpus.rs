//! Parallel corpus I/O: tab-separated pairs, M2 annotation files and JSONL.
//!
//! Every format is pre-tokenized with single spaces. Nothing here ever
//! re-tokenizes; a token is whatever sits between two spaces.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// A tokenized sentence.
pub type Tokens = Vec<String>;

/// Field separator of M2 annotation lines.
pub const M2_SEP: &str = "|||";
/// Correction field meaning "delete the span".
pub const M2_NONE: &str = "-NONE-";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error("line {line}: malformed line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: empty {side} side")]
    EmptySide { line: usize, side: &'static str },
    #[error("line {line}: annotation before any sentence line")]
    AnnotationBeforeSentence { line: usize },
    #[error("line {line}: span {start}..{end} outside sentence of {len} tokens")]
    SpanOutOfBounds {
        line: usize,
        start: i64,
        end: i64,
        len: usize,
    },
    #[error("line {line}: expected at least 6 `|||` fields, found {found}")]
    TooFewFields { line: usize, found: usize },
    #[error("line {line}: edits of annotator {annotator} overlap or are unsorted")]
    OverlappingEdits { line: usize, annotator: u32 },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid token {token:?}: tokens may not contain whitespace")]
    InvalidToken { token: String },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Splits a pre-tokenized line into tokens.
pub fn tokenize(text: &str) -> Tokens {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Inverse of [`tokenize`] for well-formed token sequences.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_ref());
    }
    out
}

fn check_tokens(tokens: &[String]) -> Result<(), CorpusError> {
    match tokens
        .iter()
        .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
    {
        Some(t) => Err(CorpusError::InvalidToken { token: t.clone() }),
        None => Ok(()),
    }
}

/// A (source, target) sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelExample {
    pub id: String,
    pub source: Tokens,
    pub target: Tokens,
    /// Free-form annotations carried through JSONL.
    pub meta: BTreeMap<String, Value>,
}

impl ParallelExample {
    pub fn new(id: impl Into<String>, source: Tokens, target: Tokens) -> Result<Self, CorpusError> {
        check_tokens(&source)?;
        check_tokens(&target)?;
        Ok(ParallelExample {
            id: id.into(),
            source,
            target,
            meta: BTreeMap::new(),
        })
    }

    /// Builds a pair from two space-separated strings.
    pub fn from_text(id: impl Into<String>, source: &str, target: &str) -> Self {
        ParallelExample {
            id: id.into(),
            source: tokenize(source),
            target: tokenize(target),
            meta: BTreeMap::new(),
        }
    }

    pub fn is_errorful(&self) -> bool {
        self.source != self.target
    }
}

/// One gold edit of an M2 annotation line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M2Edit {
    pub start: usize,
    pub end: usize,
    /// Error type string, e.g. `M:PREP`.
    pub kind: String,
    /// Empty for deletions.
    pub correction: Tokens,
    pub required: String,
    pub comment: String,
}

/// A source sentence with the gold edits of each annotator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedExample {
    pub id: String,
    pub source: Tokens,
    /// Annotators in order of first appearance. An empty edit list is a
    /// `noop` annotation.
    pub annotations: Vec<(u32, Vec<M2Edit>)>,
}

impl AnnotatedExample {
    pub fn edits_of(&self, annotator: u32) -> Option<&[M2Edit]> {
        self.annotations
            .iter()
            .find(|(a, _)| *a == annotator)
            .map(|(_, e)| e.as_slice())
    }

    /// Applies one annotator's edits to the source.
    pub fn corrected(&self, annotator: u32) -> Option<Tokens> {
        let edits = self.edits_of(annotator)?;
        let mut out = Vec::with_capacity(self.source.len());
        let mut pos = 0;
        for e in edits {
            out.extend_from_slice(&self.source[pos..e.start]);
            out.extend(e.correction.iter().cloned());
            pos = e.end;
        }
        out.extend_from_slice(&self.source[pos..]);
        Some(out)
    }
}

/// Reads raw lines as UTF-8, rejecting invalid byte sequences.
struct Lines<R> {
    reader: R,
    line: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R) -> Self {
        Lines {
            reader,
            line: 0,
            buf: Vec::new(),
        }
    }

    fn next_line(&mut self, path: &Path) -> Option<Result<(usize, String), CorpusError>> {
        self.buf.clear();
        match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                self.line += 1;
                if self.buf.last() == Some(&b'\n') {
                    self.buf.pop();
                }
                match String::from_utf8(std::mem::take(&mut self.buf)) {
                    Ok(s) => Some(Ok((self.line, s))),
                    Err(_) => Some(Err(CorpusError::InvalidUtf8 { line: self.line })),
                }
            }
            Err(e) => Some(Err(CorpusError::io(path, e))),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CorpusError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CorpusError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CorpusError::io(path, e))
}

// ---------------------------------------------------------------------------
// TSV

/// Streaming reader over `source<TAB>target` lines.
pub struct TsvReader<R> {
    lines: Lines<R>,
    path: PathBuf,
}

impl<R: BufRead> TsvReader<R> {
    pub fn new(reader: R) -> Self {
        TsvReader {
            lines: Lines::new(reader),
            path: PathBuf::from("<stream>"),
        }
    }
}

impl<R: BufRead> Iterator for TsvReader<R> {
    type Item = Result<ParallelExample, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line, text) = match self.lines.next_line(&self.path)? {
            Ok(x) => x,
            Err(e) => return Some(Err(e)),
        };
        Some(parse_tsv_line(line, &text))
    }
}

fn parse_tsv_line(line: usize, text: &str) -> Result<ParallelExample, CorpusError> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != 2 {
        return Err(CorpusError::MalformedLine {
            line,
            reason: format!("expected 2 tab-separated fields, found {}", fields.len()),
        });
    }
    let source = tokenize(fields[0]);
    let target = tokenize(fields[1]);
    if source.is_empty() {
        return Err(CorpusError::EmptySide { line, side: "source" });
    }
    if target.is_empty() {
        return Err(CorpusError::EmptySide { line, side: "target" });
    }
    Ok(ParallelExample {
        id: line.to_string(),
        source,
        target,
        meta: BTreeMap::new(),
    })
}

pub fn read_parallel_tsv(path: impl AsRef<Path>) -> Result<TsvReader<BufReader<File>>, CorpusError> {
    let path = path.as_ref();
    let mut reader = TsvReader::new(open(path)?);
    reader.path = path.to_owned();
    Ok(reader)
}

pub fn write_parallel_tsv<'a, I>(examples: I, path: impl AsRef<Path>) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = &'a ParallelExample>,
{
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| CorpusError::io(path, e);
    for ex in examples {
        writeln!(w, "{}\t{}", detokenize(&ex.source), detokenize(&ex.target)).map_err(io)?;
    }
    w.flush().map_err(io)
}

// ---------------------------------------------------------------------------
// M2

/// Streaming reader over M2 blocks.
pub struct M2Reader<R> {
    lines: Lines<R>,
    path: PathBuf,
    count: usize,
    done: bool,
}

impl<R: BufRead> M2Reader<R> {
    pub fn new(reader: R) -> Self {
        M2Reader {
            lines: Lines::new(reader),
            path: PathBuf::from("<stream>"),
            count: 0,
            done: false,
        }
    }

    fn read_block(&mut self) -> Result<Option<AnnotatedExample>, CorpusError> {
        let mut current: Option<(usize, AnnotatedExample)> = None;
        loop {
            let (line, text) = match self.lines.next_line(&self.path) {
                None => break,
                Some(r) => r?,
            };
            if text.trim().is_empty() {
                if current.is_some() {
                    break;
                }
                continue;
            }
            if let Some(rest) = text.strip_prefix("S ").or_else(|| (text == "S").then_some("")) {
                if current.is_some() {
                    return Err(CorpusError::MalformedLine {
                        line,
                        reason: "sentence line inside a block".into(),
                    });
                }
                let source = tokenize(rest);
                if source.is_empty() {
                    return Err(CorpusError::EmptySide { line, side: "source" });
                }
                current = Some((
                    line,
                    AnnotatedExample {
                        id: self.count.to_string(),
                        source,
                        annotations: Vec::new(),
                    },
                ));
            } else if let Some(rest) = text.strip_prefix("A ") {
                let Some((_, ex)) = current.as_mut() else {
                    return Err(CorpusError::AnnotationBeforeSentence { line });
                };
                let (annotator, edit) = parse_a_line(line, rest, ex.source.len())?;
                let slot = match ex.annotations.iter().position(|(a, _)| *a == annotator) {
                    Some(i) => i,
                    None => {
                        ex.annotations.push((annotator, Vec::new()));
                        ex.annotations.len() - 1
                    }
                };
                if let Some(edit) = edit {
                    let edits = &mut ex.annotations[slot].1;
                    if let Some(prev) = edits.last() {
                        if edit.start < prev.end || edit.start < prev.start {
                            return Err(CorpusError::OverlappingEdits { line, annotator });
                        }
                    }
                    edits.push(edit);
                }
            } else {
                return Err(CorpusError::MalformedLine {
                    line,
                    reason: "expected an `S` or `A` line".into(),
                });
            }
        }
        Ok(current.map(|(_, ex)| {
            self.count += 1;
            ex
        }))
    }
}

fn parse_a_line(line: usize, rest: &str, len: usize) -> Result<(u32, Option<M2Edit>), CorpusError> {
    let fields: Vec<&str> = rest.split(M2_SEP).collect();
    if fields.len() < 6 {
        return Err(CorpusError::TooFewFields {
            line,
            found: fields.len(),
        });
    }
    let malformed = |reason: &str| CorpusError::MalformedLine {
        line,
        reason: reason.to_owned(),
    };
    let mut span = fields[0].split_whitespace();
    let (Some(s), Some(e), None) = (span.next(), span.next(), span.next()) else {
        return Err(malformed("span must be two integers"));
    };
    let start: i64 = s.parse().map_err(|_| malformed("span must be two integers"))?;
    let end: i64 = e.parse().map_err(|_| malformed("span must be two integers"))?;
    let annotator: u32 = fields[5]
        .trim()
        .parse()
        .map_err(|_| malformed("annotator id must be a non-negative integer"))?;
    let kind = fields[1];
    if start == -1 && end == -1 {
        if kind != "noop" {
            return Err(malformed("span -1 -1 is reserved for noop"));
        }
        return Ok((annotator, None));
    }
    if start < 0 || end < start || end as usize > len {
        return Err(CorpusError::SpanOutOfBounds {
            line,
            start,
            end,
            len,
        });
    }
    let correction = if fields[2] == M2_NONE {
        Vec::new()
    } else {
        tokenize(fields[2])
    };
    Ok((
        annotator,
        Some(M2Edit {
            start: start as usize,
            end: end as usize,
            kind: kind.to_owned(),
            correction,
            required: fields[3].to_owned(),
            comment: fields[4].to_owned(),
        }),
    ))
}

impl<R: BufRead> Iterator for M2Reader<R> {
    type Item = Result<AnnotatedExample, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_block() {
            Ok(Some(ex)) => Some(Ok(ex)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_m2(path: impl AsRef<Path>) -> Result<M2Reader<BufReader<File>>, CorpusError> {
    let path = path.as_ref();
    let mut reader = M2Reader::new(open(path)?);
    reader.path = path.to_owned();
    Ok(reader)
}

/// Formats one example as an M2 block, including the terminating blank line.
pub fn format_m2_block(ex: &AnnotatedExample) -> String {
    let mut out = format!("S {}\n", detokenize(&ex.source));
    for (annotator, edits) in &ex.annotations {
        if edits.is_empty() {
            out.push_str(&format!(
                "A -1 -1|||noop|||{M2_NONE}|||REQUIRED|||{M2_NONE}|||{annotator}\n"
            ));
        }
        for e in edits {
            let correction = if e.correction.is_empty() {
                M2_NONE.to_owned()
            } else {
                detokenize(&e.correction)
            };
            out.push_str(&format!(
                "A {} {}|||{}|||{}|||{}|||{}|||{}\n",
                e.start, e.end, e.kind, correction, e.required, e.comment, annotator
            ));
        }
    }
    out.push('\n');
    out
}

pub fn write_m2<'a, I>(examples: I, path: impl AsRef<Path>) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = &'a AnnotatedExample>,
{
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| CorpusError::io(path, e);
    for ex in examples {
        w.write_all(format_m2_block(ex).as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

// ---------------------------------------------------------------------------
// JSONL

#[derive(Serialize)]
struct JsonlOut<'a> {
    id: &'a str,
    source: String,
    target: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    meta: &'a BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct JsonlIn {
    id: Option<Value>,
    source: Option<String>,
    target: Option<String>,
    #[serde(default)]
    meta: BTreeMap<String, Value>,
}

/// Serializes one example as a single JSON line (without the newline).
pub fn to_jsonl_line(ex: &ParallelExample) -> String {
    serde_json::to_string(&JsonlOut {
        id: &ex.id,
        source: detokenize(&ex.source),
        target: detokenize(&ex.target),
        meta: &ex.meta,
    })
    .expect("string keys always serialize")
}

pub fn parse_jsonl_line(line: usize, text: &str) -> Result<ParallelExample, CorpusError> {
    let raw: JsonlIn =
        serde_json::from_str(text).map_err(|source| CorpusError::Json { line, source })?;
    let missing = |key: &str| CorpusError::Schema {
        line,
        message: format!("missing `{key}` key"),
    };
    let id = match raw.id.ok_or_else(|| missing("id"))? {
        Value::String(s) => s,
        Value::Number(n) => n.to_string(),
        _ => {
            return Err(CorpusError::Schema {
                line,
                message: "`id` must be a string or number".into(),
            })
        }
    };
    let source = tokenize(&raw.source.ok_or_else(|| missing("source"))?);
    let target = tokenize(&raw.target.ok_or_else(|| missing("target"))?);
    if source.is_empty() {
        return Err(CorpusError::EmptySide { line, side: "source" });
    }
    if target.is_empty() {
        return Err(CorpusError::EmptySide { line, side: "target" });
    }
    Ok(ParallelExample {
        id,
        source,
        target,
        meta: raw.meta,
    })
}

/// Streaming reader over JSONL parallel examples. Blank lines are skipped.
pub struct JsonlReader<R> {
    lines: Lines<R>,
    path: PathBuf,
}

impl<R: BufRead> JsonlReader<R> {
    pub fn new(reader: R) -> Self {
        JsonlReader {
            lines: Lines::new(reader),
            path: PathBuf::from("<stream>"),
        }
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = Result<ParallelExample, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (line, text) = match self.lines.next_line(&self.path)? {
                Ok(x) => x,
                Err(e) => return Some(Err(e)),
            };
            if text.trim().is_empty() {
                continue;
            }
            return Some(parse_jsonl_line(line, &text));
        }
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<JsonlReader<BufReader<File>>, CorpusError> {
    let path = path.as_ref();
    let mut reader = JsonlReader::new(open(path)?);
    reader.path = path.to_owned();
    Ok(reader)
}

pub fn write_jsonl<'a, I>(examples: I, path: impl AsRef<Path>) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = &'a ParallelExample>,
{
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| CorpusError::io(path, e);
    for ex in examples {
        writeln!(w, "{}", to_jsonl_line(ex)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Corpus file formats, chosen by extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Jsonl,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Format::Jsonl,
            _ => Format::Tsv,
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Tsv => "tsv",
            Format::Jsonl => "jsonl",
        })
    }
}

/// Reads a whole parallel corpus, picking the format from the extension.
pub fn read_parallel(path: impl AsRef<Path>) -> Result<Vec<ParallelExample>, CorpusError> {
    let path = path.as_ref();
    match Format::from_path(path) {
        Format::Tsv => read_parallel_tsv(path)?.collect(),
        Format::Jsonl => read_jsonl(path)?.collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const TRANSPORT_M2: &str =
        "S They are coming the city center .\nA 3 3|||M:PREP|||from|||REQUIRED|||-NONE-|||0\n\n";

    fn m2(text: &str) -> Result<Vec<AnnotatedExample>, CorpusError> {
        M2Reader::new(Cursor::new(text.as_bytes().to_vec())).collect()
    }

    fn tsv(text: &[u8]) -> Result<Vec<ParallelExample>, CorpusError> {
        TsvReader::new(Cursor::new(text.to_vec())).collect()
    }

    #[test]
    fn tsv_transport_pair() {
        let ex = tsv(b"They are coming the city center .\tThey are coming from the city center .\n")
            .unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].source.len(), 7);
        assert_eq!(ex[0].target.len(), 8);
        assert_eq!(ex[0].id, "1");
    }

    #[test]
    fn tsv_identity_pair_is_valid() {
        let ex = tsv(b"Hello .\tHello .\n").unwrap();
        assert_eq!(ex[0].source, ex[0].target);
        assert!(!ex[0].is_errorful());
    }

    #[test]
    fn tsv_wrong_field_count() {
        let err = tsv(b"a\tb\nx\ty\tz\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 2, .. }), "{err}");
    }

    #[test]
    fn tsv_empty_side() {
        let err = tsv(b"a b\t \n").unwrap_err();
        assert!(matches!(err, CorpusError::EmptySide { line: 1, side: "target" }));
    }

    #[test]
    fn tsv_rejects_invalid_utf8() {
        let err = tsv(b"ok\tok\n\xff\tb\n").unwrap_err();
        assert!(matches!(err, CorpusError::InvalidUtf8 { line: 2 }));
    }

    #[test]
    fn tsv_preserves_order_and_count() {
        let mut text = String::new();
        for i in 0..50 {
            text.push_str(&format!("s{i} x\tt{i} x\n"));
        }
        let ex = tsv(text.as_bytes()).unwrap();
        assert_eq!(ex.len(), 50);
        for (i, e) in ex.iter().enumerate() {
            assert_eq!(e.source[0], format!("s{i}"));
        }
    }

    #[test]
    fn m2_transport_block() {
        let ex = m2(TRANSPORT_M2).unwrap();
        assert_eq!(ex.len(), 1);
        let edits = ex[0].edits_of(0).unwrap();
        assert_eq!(edits.len(), 1);
        assert_eq!((edits[0].start, edits[0].end), (3, 3));
        assert_eq!(edits[0].correction, vec!["from"]);
        assert_eq!(edits[0].kind, "M:PREP");
        assert_eq!(
            detokenize(&ex[0].corrected(0).unwrap()),
            "They are coming from the city center ."
        );
    }

    #[test]
    fn m2_noop_gives_empty_annotator() {
        let ex = m2("S Hello .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n").unwrap();
        assert_eq!(ex[0].annotations, vec![(0, vec![])]);
    }

    #[test]
    fn m2_span_out_of_bounds() {
        let err = m2("S a b c d e f g\nA 9 9|||M:DET|||the|||REQUIRED|||-NONE-|||0\n").unwrap_err();
        assert!(matches!(err, CorpusError::SpanOutOfBounds { line: 2, start: 9, .. }));
    }

    #[test]
    fn m2_annotation_before_sentence() {
        let err = m2("A 0 1|||R:X|||b|||REQUIRED|||-NONE-|||0\n").unwrap_err();
        assert!(matches!(err, CorpusError::AnnotationBeforeSentence { line: 1 }));
    }

    #[test]
    fn m2_too_few_fields() {
        let err = m2("S a b\nA 0 1|||R:X|||b|||REQUIRED|||0\n").unwrap_err();
        assert!(matches!(err, CorpusError::TooFewFields { line: 2, found: 5 }));
    }

    #[test]
    fn m2_none_correction_is_deletion() {
        let ex = m2("S a the b\nA 1 2|||U:DET|||-NONE-|||REQUIRED|||-NONE-|||0\n").unwrap();
        assert!(ex[0].edits_of(0).unwrap()[0].correction.is_empty());
        assert_eq!(ex[0].corrected(0).unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn m2_two_annotators_share_one_sentence_line() {
        let text = "S a b c\nA 0 1|||R:X|||x|||REQUIRED|||-NONE-|||0\nA 2 3|||R:Y|||y|||REQUIRED|||-NONE-|||1\n\n";
        let ex = m2(text).unwrap();
        assert_eq!(ex[0].annotations.len(), 2);
        let block = format_m2_block(&ex[0]);
        assert_eq!(block, text);
        assert_eq!(block.lines().filter(|l| l.starts_with("S ")).count(), 1);
    }

    #[test]
    fn m2_final_block_without_blank_line() {
        let ex = m2("S a\n\nS b c\nA 0 1|||R:X|||x|||REQUIRED|||-NONE-|||0").unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[1].id, "1");
    }

    #[test]
    fn m2_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.m2");
        let ex = m2(TRANSPORT_M2).unwrap();
        write_m2(&ex, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), TRANSPORT_M2);
        let back: Vec<_> = read_m2(&path).unwrap().collect::<Result<_, _>>().unwrap();
        assert_eq!(back, ex);
    }

    #[test]
    fn m2_empty_stream_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.m2");
        write_m2(&[], &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"");
    }

    #[test]
    fn jsonl_missing_source_is_schema_error() {
        let err = parse_jsonl_line(4, r#"{"id":"a","target":"x"}"#).unwrap_err();
        assert!(matches!(err, CorpusError::Schema { line: 4, .. }));
    }

    #[test]
    fn jsonl_malformed_json() {
        let err = parse_jsonl_line(2, "{not json").unwrap_err();
        assert!(matches!(err, CorpusError::Json { line: 2, .. }));
    }

    #[test]
    fn jsonl_meta_round_trip() {
        let mut ex = ParallelExample::from_text("7", "a b", "a c");
        ex.meta.insert("origin".into(), Value::from("real"));
        let line = to_jsonl_line(&ex);
        assert_eq!(
            line,
            r#"{"id":"7","source":"a b","target":"a c","meta":{"origin":"real"}}"#
        );
        assert_eq!(parse_jsonl_line(1, &line).unwrap(), ex);
    }

    #[test]
    fn tokens_with_whitespace_are_rejected() {
        let err = ParallelExample::new("x", vec!["a b".into()], vec!["a".into()]).unwrap_err();
        assert!(matches!(err, CorpusError::InvalidToken { .. }));
    }
}
