//! Generation inputs, generator fine-tuning examples, few-shot prompts and
//! the pluggable generator backends.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::align::Span;
use crate::corpus::{detokenize, Tokens};
use crate::http::{RetryPolicy, TransportError};

/// Context placeholder the generator fills in.
pub const MASK: &str = "[M]";
/// Separator between the masked input and the target sentence.
pub const SEP: &str = "<sep>";
/// Longest masked segment in fine-tuning examples.
pub const MAX_SEGMENT: usize = 4;
/// Shortest sentence usable as a fine-tuning target.
pub const MIN_FINETUNE_LEN: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("a generation request needs at least one pattern")]
    NoPatterns,
    #[error("a generation request takes at most 2 patterns, got {0}")]
    TooManyPatterns(usize),
    #[error("pattern {0} has an empty correct side and cannot be generated for")]
    EmptyPattern(usize),
    #[error("sentence of {0} tokens is too short to mask (need at least {MIN_FINETUNE_LEN})")]
    TooShort(usize),
    #[error("invalid mask segments: {0}")]
    InvalidSegments(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub id: String,
    /// Correct-side token sequences to embed verbatim.
    pub patterns: Vec<Tokens>,
    /// Patterns interleaved with `[M]`.
    pub template: String,
}

/// Joins patterns with `[M]`; a leading and a trailing `[M]` are each added
/// with probability 0.5.
pub fn assemble_input<R: Rng + ?Sized>(id: impl Into<String>, patterns: &[Tokens], rng: &mut R) -> Result<GenerationRequest, GenError> {
    match patterns.len() {
        0 => return Err(GenError::NoPatterns),
        1 | 2 => {}
        n => return Err(GenError::TooManyPatterns(n)),
    }
    if let Some(i) = patterns.iter().position(|p| p.is_empty()) {
        return Err(GenError::EmptyPattern(i));
    }
    let leading = rng.random_bool(0.5);
    let trailing = rng.random_bool(0.5);
    let mut parts: Vec<String> = Vec::new();
    if leading {
        parts.push(MASK.to_owned());
    }
    for (i, p) in patterns.iter().enumerate() {
        if i > 0 {
            parts.push(MASK.to_owned());
        }
        parts.push(detokenize(p));
    }
    if trailing {
        parts.push(MASK.to_owned());
    }
    Ok(GenerationRequest {
        id: id.into(),
        patterns: patterns.to_vec(),
        template: parts.join(" "),
    })
}

/// Training example for a context generator:
/// `masked_text <sep> sentence`, with the loss restricted to `target_span`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneExample {
    pub input: String,
    pub masked_text: Tokens,
    /// Masked segments as spans of the original sentence.
    pub segments: Vec<Span>,
    /// Token range of the sentence within `input`.
    pub target_span: Span,
}

impl FinetuneExample {
    /// The sentence after the separator.
    pub fn sentence(&self) -> Tokens {
        self.input
            .split_whitespace()
            .skip(self.target_span.start)
            .take(self.target_span.len())
            .map(str::to_owned)
            .collect()
    }
}

/// Replaces each span of `sentence` by a single `[M]`. Spans must be sorted,
/// non-empty, separated by at least one token and away from both ends.
pub fn mask_segments(sentence: &[String], segments: &[Span]) -> Result<FinetuneExample, GenError> {
    let mut prev_end = 0;
    for (i, s) in segments.iter().enumerate() {
        let gap_ok = if i == 0 { s.start >= 1 } else { s.start > prev_end };
        if s.is_empty() || !gap_ok || s.end >= sentence.len() {
            return Err(GenError::InvalidSegments(format!(
                "segment {s} in sentence of {} tokens",
                sentence.len()
            )));
        }
        prev_end = s.end;
    }
    let mut masked = Vec::new();
    let mut pos = 0;
    for s in segments {
        masked.extend_from_slice(&sentence[pos..s.start]);
        masked.push(MASK.to_owned());
        pos = s.end;
    }
    masked.extend_from_slice(&sentence[pos..]);
    let start = masked.len() + 1;
    let input = format!("{} {SEP} {}", detokenize(&masked), detokenize(sentence));
    Ok(FinetuneExample {
        input,
        masked_text: masked,
        segments: segments.to_vec(),
        target_span: Span::new(start, start + sentence.len()),
    })
}

/// Masks one or two random interior segments of a correct sentence.
///
/// Segment lengths are uniform on `1..=min(4, len / 2)`; every segment keeps
/// at least one unmasked token on each side.
pub fn build_finetune_example<R: Rng + ?Sized>(sentence: &[String], rng: &mut R) -> Result<FinetuneExample, GenError> {
    let len = sentence.len();
    if len < MIN_FINETUNE_LEN {
        return Err(GenError::TooShort(len));
    }
    let cap = MAX_SEGMENT.min(len / 2);
    let mut count = if rng.random_bool(0.5) { 2 } else { 1 };
    // two segments need two masked and three unmasked tokens
    if count == 2 && len < 5 {
        count = 1;
    }
    let lengths: Vec<usize> = loop {
        let ls: Vec<usize> = (0..count).map(|_| rng.random_range(1..=cap)).collect();
        if ls.iter().sum::<usize>() + count < len {
            break ls;
        }
    };
    // split the unmasked tokens into count+1 non-empty gaps
    let free = len - lengths.iter().sum::<usize>();
    let mut cuts: Vec<usize> = index::sample(rng, free - 1, count)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut segments = Vec::with_capacity(count);
    let mut pos = 0;
    let mut prev_cut = 0;
    for (cut, l) in cuts.iter().zip(&lengths) {
        pos += cut - prev_cut;
        segments.push(Span::new(pos, pos + l));
        pos += l;
        prev_cut = *cut;
    }
    mask_segments(sentence, &segments)
}

const INSTRUCTION: &str = "[INST] <<SYS>> You are a helpful assistant.<</SYS>>
Use phrases from #input to make sentences.
You should fill in [M] to make #input sentence more complete.
You can't change any form or order of the words in #input.
Make sure you fully use the phrases in #input. [/INST]";

/// The five in-context exemplars as (input, output).
pub const FEWSHOT_EXEMPLARS: [(&str, &str); 5] = [
    (
        "[M] sized city with eighty thousand [M]",
        "My town is a medium - sized city with eighty thousand inhabitants .",
    ),
    (
        "[M] my own plan too , [M] to be the same as them . [M]",
        "I have my own plan too , but I do n't want to be the same as them . I want to become a journalist .",
    ),
    (
        "Nowadays , each family has more than 1 [M] one of several reasons why [M]",
        "Nowadays , each family has more than 1 car for each person , this is only one of several reasons why people use less public transport .",
    ),
    (
        "[M] they might want to safeguard [M]",
        "On the other hand , they might want to safeguard the national image .",
    ),
    (
        "Lucy , Molly , and [M] a cowboy , and a [M]",
        "Lucy , Molly , and their parents , a cowboy , and a teacher .",
    ),
];

/// Instruction block, five exemplars, then `#input: <template>`.
pub fn build_fewshot_prompt(request: &GenerationRequest) -> String {
    let mut out = String::from(INSTRUCTION);
    out.push('\n');
    for (input, output) in FEWSHOT_EXEMPLARS {
        out.push_str(&format!("#input: {input}\n#output: {output}\n\n"));
    }
    out.push_str("#input: ");
    out.push_str(&request.template);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStatus {
    Ok,
    Refused,
    TransportError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub request_id: String,
    /// Non-empty iff `status` is `Ok`.
    pub text: String,
    pub status: GenerationStatus,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GenerationResult {
    pub fn ok(request_id: &str, text: String, attempts: u32) -> Self {
        if text.trim().is_empty() {
            return GenerationResult::refused(request_id, attempts);
        }
        GenerationResult {
            request_id: request_id.to_owned(),
            text,
            status: GenerationStatus::Ok,
            attempts,
            error: None,
        }
    }

    pub fn refused(request_id: &str, attempts: u32) -> Self {
        GenerationResult {
            request_id: request_id.to_owned(),
            text: String::new(),
            status: GenerationStatus::Refused,
            attempts,
            error: None,
        }
    }

    pub fn transport_error(request_id: &str, err: TransportError) -> Self {
        GenerationResult {
            request_id: request_id.to_owned(),
            text: String::new(),
            status: GenerationStatus::TransportError,
            attempts: err.attempts,
            error: Some(err.to_string()),
        }
    }
}

/// A context generator: fills the `[M]` slots of a request.
pub trait Generator: Send + Sync {
    /// Recorded as `generator_id` on synthetic samples.
    fn id(&self) -> &str;
    fn generate(&self, request: &GenerationRequest) -> GenerationResult;
}

/// Runs one request, enforcing the empty-text ⇒ refused invariant.
pub fn generate(request: &GenerationRequest, backend: &dyn Generator) -> GenerationResult {
    let mut result = backend.generate(request);
    if result.status == GenerationStatus::Ok && result.text.trim().is_empty() {
        result = GenerationResult::refused(&request.id, result.attempts);
    }
    if result.status != GenerationStatus::Ok {
        result.text.clear();
    }
    result
}

/// Runs requests with at most `concurrency` in flight; results are in
/// request order.
pub fn generate_all(requests: &[GenerationRequest], backend: &dyn Generator, concurrency: usize) -> Vec<GenerationResult> {
    crate::exec::map_indexed(requests.len(), concurrency, |i| generate(&requests[i], backend))
}

const FILLERS: [&str; 16] = [
    "Yesterday afternoon",
    "In my opinion ,",
    "As far as I know ,",
    "Last summer",
    "My neighbours said that",
    "Every morning",
    "quite often",
    "when it was raining",
    "with great pleasure",
    "for several reasons",
    "in the small village",
    "during the holidays",
    "after a long day .",
    "and nobody complained .",
    "without any problems .",
    "before sunset .",
];

/// Per-request RNG derived from the stub seed and the request id, so output
/// does not depend on scheduling.
fn request_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(id.as_bytes())
        .finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

/// Deterministic stand-in for a model: splices filler phrases into the
/// `[M]` slots. With `drop_rate > 0` each pattern is independently replaced
/// by a filler with that probability, simulating a generator that ignores
/// its constraints.
#[derive(Debug, Clone)]
pub struct StubGenerator {
    seed: u64,
    drop_rate: f64,
    id: String,
}

impl StubGenerator {
    pub fn new(seed: u64) -> Self {
        StubGenerator {
            seed,
            drop_rate: 0.0,
            id: "stub".into(),
        }
    }

    pub fn with_drop_rate(mut self, rate: f64) -> Self {
        self.drop_rate = rate.clamp(0.0, 1.0);
        if rate > 0.0 {
            self.id = format!("stub-drop{rate}");
        }
        self
    }
}

impl Generator for StubGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> GenerationResult {
        let mut rng = request_rng(self.seed, &request.id);
        let filler = |rng: &mut ChaCha8Rng| FILLERS[rng.random_range(0..FILLERS.len())];
        let mut patterns = request.patterns.iter();
        let mut out: Vec<&str> = Vec::new();
        let mut expect_pattern = true;
        for part in request.template.split(' ') {
            if part == MASK {
                out.push(filler(&mut rng));
                expect_pattern = true;
            } else if expect_pattern {
                expect_pattern = false;
                let Some(p) = patterns.next() else { break };
                if self.drop_rate > 0.0 && rng.random_bool(self.drop_rate) {
                    out.push(filler(&mut rng));
                } else {
                    out.extend(p.iter().map(String::as_str));
                }
            }
        }
        GenerationResult::ok(&request.id, out.join(" "), 1)
    }
}

/// Wire body of a generation request.
#[derive(Debug, Serialize)]
pub struct HttpGenerationBody<'a> {
    pub id: &'a str,
    pub template: &'a str,
    pub prompt: Option<String>,
    pub max_tokens: u32,
}

#[derive(Debug, Deserialize)]
pub struct HttpTextResponse {
    pub text: String,
}

/// Environment variable holding the generator endpoint.
pub const GEN_URL_ENV: &str = "CTXAUG_GEN_URL";
/// Environment variable holding an optional bearer token.
pub const GEN_TOKEN_ENV: &str = "CTXAUG_GEN_TOKEN";

#[derive(Debug, Clone)]
pub struct HttpGeneratorConfig {
    pub url: String,
    pub token: Option<String>,
    pub max_tokens: u32,
    /// Send the rendered few-shot prompt alongside the template.
    pub send_prompt: bool,
    pub retry: RetryPolicy,
}

impl HttpGeneratorConfig {
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(GEN_URL_ENV).ok()?;
        Some(HttpGeneratorConfig {
            url,
            token: std::env::var(GEN_TOKEN_ENV).ok(),
            max_tokens: 128,
            send_prompt: true,
            retry: RetryPolicy::default(),
        })
    }
}

/// Generator behind an HTTP service speaking
/// `{"id", "template", "prompt", "max_tokens"}` → `{"text"}`.
#[cfg(feature = "http")]
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    client: crate::http::JsonClient,
    max_tokens: u32,
    send_prompt: bool,
    id: String,
}

#[cfg(feature = "http")]
impl HttpGenerator {
    pub fn new(config: HttpGeneratorConfig) -> Self {
        let id = format!("http:{}", config.url);
        HttpGenerator {
            client: crate::http::JsonClient::new(config.url, config.token, config.retry),
            max_tokens: config.max_tokens,
            send_prompt: config.send_prompt,
            id,
        }
    }
}

#[cfg(feature = "http")]
impl Generator for HttpGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> GenerationResult {
        let body = HttpGenerationBody {
            id: &request.id,
            template: &request.template,
            prompt: self.send_prompt.then(|| build_fewshot_prompt(request)),
            max_tokens: self.max_tokens,
        };
        match self.client.post::<_, HttpTextResponse>(&body) {
            Ok((resp, attempts)) => GenerationResult::ok(&request.id, resp.text, attempts),
            Err(e) => GenerationResult::transport_error(&request.id, e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn template_shapes() {
        let p = vec![tokenize("move from one")];
        let mut seen = std::collections::BTreeSet::new();
        let mut r = rng(0);
        for i in 0..200 {
            seen.insert(assemble_input(i.to_string(), &p, &mut r).unwrap().template);
        }
        let expected: std::collections::BTreeSet<String> = [
            "move from one",
            "[M] move from one",
            "move from one [M]",
            "[M] move from one [M]",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn two_patterns_are_separated_by_a_mask() {
        let p = vec![tokenize("move from one"), tokenize("has been")];
        let mut r = rng(3);
        for _ in 0..50 {
            let req = assemble_input("x", &p, &mut r).unwrap();
            assert!(req.template.contains("move from one [M] has been"), "{}", req.template);
            assert_eq!(req.template.matches("move from one").count(), 1);
        }
    }

    #[test]
    fn assemble_errors() {
        let mut r = rng(0);
        assert_eq!(assemble_input("x", &[], &mut r), Err(GenError::NoPatterns));
        let three = vec![tokenize("a"); 3];
        assert_eq!(assemble_input("x", &three, &mut r), Err(GenError::TooManyPatterns(3)));
        assert_eq!(assemble_input("x", &[vec![]], &mut r), Err(GenError::EmptyPattern(0)));
    }

    #[test]
    fn assemble_is_deterministic_under_seed() {
        let p = vec![tokenize("a b"), tokenize("c")];
        let a = assemble_input("x", &p, &mut rng(11)).unwrap();
        let b = assemble_input("x", &p, &mut rng(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn masking_worked_example() {
        let s = tokenize("They will have to move from one place to another .");
        let ex = mask_segments(&s, &[Span::new(4, 7)]).unwrap();
        assert_eq!(
            ex.input,
            "They will have to [M] place to another . <sep> They will have to move from one place to another ."
        );
        assert_eq!(ex.target_span, Span::new(10, 21));
        let all = tokenize(&ex.input);
        assert_eq!(all[ex.target_span.start - 1], SEP);
        assert_eq!(&all[ex.target_span.start..ex.target_span.end], &s[..]);
        assert_eq!(ex.sentence(), s);
    }

    #[test]
    fn too_short_sentence() {
        let mut r = rng(0);
        assert_eq!(build_finetune_example(&tokenize("a b c"), &mut r), Err(GenError::TooShort(3)));
    }

    #[test]
    fn four_token_sentence_gets_one_short_segment() {
        let s = tokenize("a b c d");
        let mut r = rng(5);
        for _ in 0..500 {
            let ex = build_finetune_example(&s, &mut r).unwrap();
            assert_eq!(ex.segments.len(), 1);
            assert!(ex.segments[0].len() <= 2);
        }
    }

    /// Independent inverse of masking: walk the masked text and splice the
    /// segments back in.
    fn unmask(ex: &FinetuneExample, sentence: &[String]) -> Tokens {
        let mut segs = ex.segments.iter();
        let mut out = Vec::new();
        for t in &ex.masked_text {
            if t == MASK {
                let s = segs.next().unwrap();
                out.extend_from_slice(&sentence[s.start..s.end]);
            } else {
                out.push(t.clone());
            }
        }
        assert!(segs.next().is_none());
        out
    }

    #[test]
    fn masking_is_invertible_and_within_bounds() {
        let mut r = rng(99);
        let mut counts = [0usize; 3];
        for len in 4..30 {
            let s: Tokens = (0..len).map(|i| format!("w{i}")).collect();
            for _ in 0..100 {
                let ex = build_finetune_example(&s, &mut r).unwrap();
                counts[ex.segments.len()] += 1;
                assert_eq!(unmask(&ex, &s), s);
                let cap = MAX_SEGMENT.min(len / 2);
                for (i, seg) in ex.segments.iter().enumerate() {
                    assert!(!seg.is_empty() && seg.len() <= cap);
                    assert!(seg.start >= 1 && seg.end < len);
                    if i > 0 {
                        assert!(seg.start > ex.segments[i - 1].end);
                    }
                }
                assert_eq!(ex.sentence(), s);
            }
        }
        assert!(counts[1] > 0 && counts[2] > 0);
    }

    #[test]
    fn fewshot_prompt_golden() {
        let req = GenerationRequest {
            id: "0".into(),
            patterns: vec![tokenize("And I went"), tokenize("important")],
            template: "And I went [M] important [M]".into(),
        };
        let prompt = build_fewshot_prompt(&req);
        let golden = include_str!("../tests/fixtures/fewshot_prompt.golden.txt");
        assert_eq!(prompt, golden);
        assert!(prompt.ends_with("#input: And I went [M] important [M]"));
        assert_eq!(prompt.matches("#output:").count(), 5);
        assert_eq!(prompt.matches("#input:").count(), 6);
    }

    #[test]
    fn stub_embeds_patterns_verbatim() {
        let stub = StubGenerator::new(1);
        let mut r = rng(2);
        let p = vec![tokenize("move from one"), tokenize("has been")];
        for i in 0..100 {
            let req = assemble_input(i.to_string(), &p, &mut r).unwrap();
            let res = generate(&req, &stub);
            assert_eq!(res.status, GenerationStatus::Ok);
            assert!(res.text.contains("move from one"));
            assert!(res.text.contains("has been"));
            assert_eq!(generate(&req, &stub), res);
        }
    }

    #[test]
    fn stub_fills_masks_from_table() {
        let stub = StubGenerator::new(0);
        let req = GenerationRequest {
            id: "a".into(),
            patterns: vec![tokenize("move from one")],
            template: "[M] move from one [M]".into(),
        };
        let text = generate(&req, &stub).text;
        let inner = text.find("move from one").unwrap();
        assert!(inner > 0 && text.len() > inner + "move from one".len());
    }

    #[test]
    fn fault_injection_drops_patterns() {
        let stub = StubGenerator::new(0).with_drop_rate(0.2);
        let p = vec![tokenize("zebra crossing")];
        let mut dropped = 0;
        let n = 5000;
        for i in 0..n {
            let req = GenerationRequest {
                id: i.to_string(),
                patterns: p.clone(),
                template: "[M] zebra crossing [M]".into(),
            };
            if !generate(&req, &stub).text.contains("zebra crossing") {
                dropped += 1;
            }
        }
        let rate = dropped as f64 / n as f64;
        assert!((rate - 0.2).abs() < 0.03, "{rate}");
    }

    struct Empty;
    impl Generator for Empty {
        fn id(&self) -> &str {
            "empty"
        }
        fn generate(&self, r: &GenerationRequest) -> GenerationResult {
            GenerationResult {
                request_id: r.id.clone(),
                text: "  ".into(),
                status: GenerationStatus::Ok,
                attempts: 1,
                error: None,
            }
        }
    }

    #[test]
    fn empty_text_is_refused() {
        let req = GenerationRequest {
            id: "e".into(),
            patterns: vec![tokenize("a")],
            template: "a".into(),
        };
        let res = generate(&req, &Empty);
        assert_eq!(res.status, GenerationStatus::Refused);
        assert!(res.text.is_empty());
    }

    #[test]
    fn generate_all_keeps_request_order() {
        let stub = StubGenerator::new(4);
        let reqs: Vec<_> = (0..20)
            .map(|i| GenerationRequest {
                id: format!("r{i}"),
                patterns: vec![tokenize("x y")],
                template: "[M] x y".into(),
            })
            .collect();
        let one = generate_all(&reqs, &stub, 1);
        let many = generate_all(&reqs, &stub, 4);
        assert_eq!(one, many);
        for (r, g) in reqs.iter().zip(&one) {
            assert_eq!(r.id, g.request_id);
        }
    }

    #[cfg(feature = "http")]
    mod http_backend {
        use super::*;
        use crate::http::mock::serve;
        use std::time::Duration;

        fn config(url: &str) -> HttpGeneratorConfig {
            HttpGeneratorConfig {
                url: url.to_owned(),
                token: Some("secret".into()),
                max_tokens: 64,
                send_prompt: true,
                retry: RetryPolicy {
                    base_delay: Duration::from_millis(1),
                    ..RetryPolicy::default()
                },
            }
        }

        fn request() -> GenerationRequest {
            GenerationRequest {
                id: "q1".into(),
                patterns: vec![tokenize("move from one")],
                template: "[M] move from one [M]".into(),
            }
        }

        #[test]
        fn ok_response() {
            let server = serve(vec![(200, r#"{"text":"We move from one town to another ."}"#.into())]);
            let res = generate(&request(), &HttpGenerator::new(config(&server.url)));
            assert_eq!(res.status, GenerationStatus::Ok);
            assert_eq!(res.text, "We move from one town to another .");
            let sent: serde_json::Value =
                serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
            assert_eq!(sent["id"], "q1");
            assert_eq!(sent["template"], "[M] move from one [M]");
            assert_eq!(sent["max_tokens"], 64);
            assert!(sent["prompt"].as_str().unwrap().ends_with("#input: [M] move from one [M]"));
        }

        #[test]
        fn empty_text_is_refused() {
            let server = serve(vec![(200, r#"{"text":""}"#.into())]);
            let res = generate(&request(), &HttpGenerator::new(config(&server.url)));
            assert_eq!(res.status, GenerationStatus::Refused);
        }

        #[test]
        fn server_failure_is_transport_error_with_attempts() {
            let server = serve(vec![(502, "{}".into())]);
            let res = generate(&request(), &HttpGenerator::new(config(&server.url)));
            assert_eq!(res.status, GenerationStatus::TransportError);
            assert_eq!(res.attempts, 5);
            assert!(res.error.unwrap().contains("502"));
        }

        #[test]
        fn malformed_response_is_transport_error() {
            let server = serve(vec![(200, r#"{"txt":1}"#.into())]);
            let res = generate(&request(), &HttpGenerator::new(config(&server.url)));
            assert_eq!(res.status, GenerationStatus::TransportError);
            assert_eq!(res.attempts, 1);
        }
    }
}
