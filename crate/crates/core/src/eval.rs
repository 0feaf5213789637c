//! Edit-level scoring against M2 gold, corpus error rates and pattern
//! distribution comparison.
//!
//! Scoring matches hypothesis edits to gold edits by exact
//! `(start, end, replacement)` equality and picks, per sentence, the
//! annotator giving the highest F-beta. This is simpler than the lattice
//! search of the reference M2 scorer, so numbers can differ from it when an
//! alignment splits or merges edits differently from the annotator.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::extract;
use crate::corpus::{AnnotatedExample, ParallelExample, Tokens};
use crate::pattern::{build_pool_from, ErrorPattern, PatternError, PatternPool};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("counts must be non-negative (tp={tp}, fp={fp}, fn={fn_})")]
    NegativeCount { tp: i64, fp: i64, fn_: i64 },
    #[error("beta must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("hypothesis has {hyp} sentences but gold has {gold}")]
    LengthMismatch { hyp: usize, gold: usize },
    #[error("sentence {id}: hypothesis source differs from gold source")]
    SourceMismatch { id: String },
    #[error("top_k must be at least 1")]
    InvalidTopK,
    #[error("reference pool is empty")]
    EmptyReference,
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// F-beta from precision and recall; 0 when both are 0.
pub fn f_beta_pr(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    }
}

/// F-beta from raw counts. Precision and recall are 0 on an empty
/// denominator.
pub fn f_beta(tp: i64, fp: i64, fn_: i64, beta: f64) -> Result<f64, EvalError> {
    if tp < 0 || fp < 0 || fn_ < 0 {
        return Err(EvalError::NegativeCount { tp, fp, fn_ });
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(EvalError::InvalidBeta(beta));
    }
    Ok(Counts::new(tp as u64, fp as u64, fn_ as u64).f_beta(beta))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Counts { tp, fp, fn_ }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_beta(&self, beta: f64) -> f64 {
        f_beta_pr(self.precision(), self.recall(), beta)
    }

    fn add(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    #[serde(flatten)]
    pub counts: Counts,
    pub f_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub sentences: usize,
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub beta: f64,
    pub per_category: BTreeMap<String, CategoryScore>,
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = format!("F{}", self.beta);
        writeln!(f, "{:<10} {}", "Sentences", self.sentences)?;
        writeln!(f, "{:<10} {}", "TP", self.counts.tp)?;
        writeln!(f, "{:<10} {}", "FP", self.counts.fp)?;
        writeln!(f, "{:<10} {}", "FN", self.counts.fn_)?;
        writeln!(f, "{:<10} {:.4}", "Precision", self.precision)?;
        writeln!(f, "{:<10} {:.4}", "Recall", self.recall)?;
        writeln!(f, "{:<10} {:.4}", label, self.f_beta)?;
        if !self.per_category.is_empty() {
            writeln!(f)?;
            writeln!(f, "{:<16} {:>6} {:>6} {:>6} {:>8}", "Category", "TP", "FP", "FN", label)?;
            for (cat, s) in &self.per_category {
                writeln!(
                    f,
                    "{:<16} {:>6} {:>6} {:>6} {:>8.4}",
                    cat, s.counts.tp, s.counts.fp, s.counts.fn_, s.f_beta
                )?;
            }
        }
        Ok(())
    }
}

type Key = (usize, usize, Tokens);

/// Counts and per-category contributions of one sentence against one
/// annotator.
fn against(hyp: &[Key], gold: &[(Key, &str)]) -> (Counts, Vec<(String, Counts)>) {
    let mut counts = Counts::default();
    let mut cats = Vec::new();
    for (key, kind) in gold {
        let hit = hyp.contains(key);
        let c = if hit { Counts::new(1, 0, 0) } else { Counts::new(0, 0, 1) };
        counts.add(c);
        cats.push((kind.to_string(), c));
    }
    for key in hyp {
        if !gold.iter().any(|(g, _)| g == key) {
            counts.fp += 1;
            let kind = gold
                .iter()
                .find(|(g, _)| g.0 == key.0 && g.1 == key.1)
                .map_or("UNK", |(_, k)| k);
            cats.push((kind.to_string(), Counts::new(0, 1, 0)));
        }
    }
    (counts, cats)
}

/// Scores corrected hypotheses against M2 gold annotations.
pub fn score(hyp: &[ParallelExample], gold: &[AnnotatedExample], beta: f64) -> Result<ScoreReport, EvalError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(EvalError::InvalidBeta(beta));
    }
    if hyp.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            hyp: hyp.len(),
            gold: gold.len(),
        });
    }
    let mut total = Counts::default();
    let mut per_cat: BTreeMap<String, Counts> = BTreeMap::new();
    for (h, g) in hyp.iter().zip(gold) {
        if h.source != g.source {
            return Err(EvalError::SourceMismatch { id: g.id.clone() });
        }
        let keys: Vec<Key> = extract(&h.source, &h.target)
            .into_iter()
            .map(|e| (e.src.start, e.src.end, e.replacement))
            .collect();
        let empty = [(0u32, Vec::new())];
        let annotators = if g.annotations.is_empty() { &empty[..] } else { &g.annotations[..] };

        let mut best: Option<(Counts, Vec<(String, Counts)>)> = None;
        for (_, edits) in annotators {
            let gold_keys: Vec<(Key, &str)> = edits
                .iter()
                .map(|e| ((e.start, e.end, e.correction.clone()), e.kind.as_str()))
                .collect();
            let cand = against(&keys, &gold_keys);
            let better = match &best {
                None => true,
                Some((b, _)) => {
                    let (fc, fb) = (cand.0.f_beta(beta), b.f_beta(beta));
                    fc > fb
                        || (fc == fb && cand.0.tp > b.tp)
                        || (fc == fb && cand.0.tp == b.tp && cand.0.fp + cand.0.fn_ < b.fp + b.fn_)
                }
            };
            if better {
                best = Some(cand);
            }
        }
        let (counts, cats) = best.expect("at least one annotator");
        total.add(counts);
        for (cat, c) in cats {
            per_cat.entry(cat).or_default().add(c);
        }
    }
    Ok(ScoreReport {
        sentences: hyp.len(),
        counts: total,
        precision: total.precision(),
        recall: total.recall(),
        f_beta: total.f_beta(beta),
        beta,
        per_category: per_cat
            .into_iter()
            .map(|(k, c)| {
                let f = c.f_beta(beta);
                (k, CategoryScore { counts: c, f_beta: f })
            })
            .collect(),
    })
}

/// Fraction of pairs with at least one edit.
pub fn error_rate(corpus: &[ParallelExample]) -> f64 {
    let errorful = corpus
        .iter()
        .filter(|p| !extract(&p.source, &p.target).is_empty())
        .count();
    ratio(errorful as u64, corpus.len() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub top_k: usize,
    pub patterns: Vec<ErrorPattern>,
    pub reference_freqs: Vec<u64>,
    pub candidate_freqs: Vec<u64>,
    pub cosine: f64,
    pub spearman: f64,
}

pub fn cosine(a: &[u64], b: &[u64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// 1-based ranks with ties sharing their average rank.
fn average_ranks(v: &[u64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by_key(|&i| v[i]);
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks; 0 when either side is constant.
pub fn spearman(a: &[u64], b: &[u64]) -> f64 {
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va.sqrt() * vb.sqrt())
    }
}

/// Projects both pools onto the reference's `top_k` most frequent patterns
/// and compares the frequency vectors.
pub fn compare_pools(reference: &PatternPool, candidate: &PatternPool, top_k: usize) -> Result<DistributionReport, EvalError> {
    if top_k < 1 {
        return Err(EvalError::InvalidTopK);
    }
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let top = reference.top_k(top_k);
    let patterns: Vec<ErrorPattern> = top.iter().map(|(p, _)| (*p).clone()).collect();
    let reference_freqs: Vec<u64> = top.iter().map(|(_, c)| *c).collect();
    let candidate_freqs: Vec<u64> = patterns.iter().map(|p| candidate.count(p)).collect();
    Ok(DistributionReport {
        top_k,
        cosine: cosine(&reference_freqs, &candidate_freqs),
        spearman: spearman(&reference_freqs, &candidate_freqs),
        patterns,
        reference_freqs,
        candidate_freqs,
    })
}

/// Extracts the candidate corpus's patterns at the reference width and
/// compares them with [`compare_pools`].
pub fn distribution_consistency(
    reference: &PatternPool,
    candidate: &[ParallelExample],
    top_k: usize,
    workers: usize,
) -> Result<DistributionReport, EvalError> {
    if top_k < 1 {
        return Err(EvalError::InvalidTopK);
    }
    let pool = build_pool_from(candidate, reference.n(), workers)?;
    compare_pools(reference, &pool, top_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, M2Reader};
    use proptest::prelude::*;

    #[test]
    fn f_half_matches_reported_scores() {
        assert!((f_beta_pr(0.762, 0.522, 0.5) - 0.698).abs() < 0.0005);
        assert!((f_beta_pr(0.738, 0.535, 0.5) - 0.686).abs() < 0.0005);
    }

    #[test]
    fn f_beta_conventions() {
        assert_eq!(f_beta(0, 0, 0, 0.5).unwrap(), 0.0);
        assert_eq!(f_beta(0, 3, 0, 0.5).unwrap(), 0.0);
        assert_eq!(f_beta(2, 2, 2, 0.5).unwrap(), 0.5);
        assert!(matches!(f_beta(-1, 0, 0, 0.5), Err(EvalError::NegativeCount { .. })));
        assert!(matches!(f_beta(1, 0, 0, 0.0), Err(EvalError::InvalidBeta(_))));
    }

    proptest! {
        #[test]
        fn equal_precision_and_recall_give_that_value(p in 0.01f64..1.0, beta in 0.1f64..4.0) {
            prop_assert!((f_beta_pr(p, p, beta) - p).abs() < 1e-12);
        }

        #[test]
        fn f_beta_is_monotone(tp in 0i64..50, fp in 0i64..50, fn_ in 0i64..50, beta in 0.1f64..3.0) {
            let base = f_beta(tp, fp, fn_, beta).unwrap();
            prop_assert!(f_beta(tp + 1, fp, fn_, beta).unwrap() >= base - 1e-12);
            prop_assert!(f_beta(tp, fp + 1, fn_, beta).unwrap() <= base + 1e-12);
            prop_assert!(f_beta(tp, fp, fn_ + 1, beta).unwrap() <= base + 1e-12);
        }

        #[test]
        fn spearman_is_symmetric(v in proptest::collection::vec((0u64..20, 0u64..20), 2..30)) {
            let (a, b): (Vec<u64>, Vec<u64>) = v.into_iter().unzip();
            prop_assert!((spearman(&a, &b) - spearman(&b, &a)).abs() < 1e-12);
        }
    }

    const GOLD: &str = "S I goes to school every days .
A 1 2|||R:VERB:SVA|||go|||REQUIRED|||-NONE-|||0
A 5 6|||R:NOUN:NUM|||day|||REQUIRED|||-NONE-|||0

S She like apples .
A 1 2|||R:VERB:SVA|||likes|||REQUIRED|||-NONE-|||0

S This is fine .
A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0
";

    fn gold() -> Vec<AnnotatedExample> {
        M2Reader::new(GOLD.as_bytes()).collect::<Result<_, _>>().unwrap()
    }

    fn hyp(pairs: &[(&str, &str)]) -> Vec<ParallelExample> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, (s, t))| ParallelExample::from_text(i.to_string(), s, t))
            .collect()
    }

    #[test]
    fn one_tp_one_fp_one_fn() {
        let h = hyp(&[
            ("I goes to school every days .", "I go to school every days ."),
            ("She like apples .", "She like apples ."),
            ("This is fine .", "This was fine ."),
        ]);
        let r = score(&h, &gold(), 0.5).unwrap();

        // independent tally: exact-match edits by hand
        let hand = (1u64, 1u64, 2u64);
        assert_eq!((r.counts.tp, r.counts.fp, r.counts.fn_), hand);
        assert!((r.precision - 0.5).abs() < 1e-12);
        assert!((r.recall - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_category["R:VERB:SVA"].counts, Counts::new(1, 0, 1));
        assert_eq!(r.per_category["R:NOUN:NUM"].counts, Counts::new(0, 0, 1));
        assert_eq!(r.per_category["UNK"].counts, Counts::new(0, 1, 0));
    }

    #[test]
    fn balanced_fixture_scores_one_half() {
        let g: Vec<AnnotatedExample> = M2Reader::new(
            "S a b c\nA 0 1|||R:X|||A|||REQUIRED|||-NONE-|||0\n\nS d e f\nA 1 2|||R:Y|||E|||REQUIRED|||-NONE-|||0\n\nS g h i\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n"
                .as_bytes(),
        )
        .collect::<Result<_, _>>()
        .unwrap();
        let h = hyp(&[("a b c", "A b c"), ("d e f", "d e f"), ("g h i", "g h I")]);
        let r = score(&h, &g, 0.5).unwrap();
        assert_eq!((r.counts.tp, r.counts.fp, r.counts.fn_), (1, 1, 1));
        assert_eq!((r.precision, r.recall, r.f_beta), (0.5, 0.5, 0.5));
    }

    #[test]
    fn perfect_hypothesis_scores_one() {
        let g = gold();
        let h: Vec<ParallelExample> = g
            .iter()
            .map(|a| ParallelExample {
                id: a.id.clone(),
                source: a.source.clone(),
                target: a.corrected(0).unwrap(),
                meta: Default::default(),
            })
            .collect();
        let r = score(&h, &g, 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.f_beta), (1.0, 1.0, 1.0));
    }

    #[test]
    fn unchanged_hypothesis_scores_zero() {
        let g = gold();
        let h: Vec<ParallelExample> = g
            .iter()
            .map(|a| ParallelExample::new(a.id.clone(), a.source.clone(), a.source.clone()).unwrap())
            .collect();
        let r = score(&h, &g, 0.5).unwrap();
        assert_eq!((r.counts.tp, r.counts.fp), (0, 0));
        assert_eq!((r.precision, r.recall, r.f_beta), (0.0, 0.0, 0.0));
    }

    #[test]
    fn best_annotator_per_sentence() {
        let g: Vec<AnnotatedExample> = M2Reader::new(
            "S He eat rice\nA 1 2|||R:VERB|||eats|||REQUIRED|||-NONE-|||0\nA 1 2|||R:VERB:TENSE|||ate|||REQUIRED|||-NONE-|||1\n".as_bytes(),
        )
        .collect::<Result<_, _>>()
        .unwrap();
        let r = score(&hyp(&[("He eat rice", "He ate rice")]), &g, 0.5).unwrap();
        assert_eq!(r.f_beta, 1.0);
        assert!(r.per_category.contains_key("R:VERB:TENSE"));
        // false positive at a gold span takes that span's category
        let r = score(&hyp(&[("He eat rice", "He eaten rice")]), &g, 0.5).unwrap();
        assert_eq!(r.per_category["R:VERB"].counts, Counts::new(0, 1, 1));
    }

    #[test]
    fn mismatches_are_errors() {
        let g = gold();
        assert!(matches!(score(&hyp(&[]), &g, 0.5), Err(EvalError::LengthMismatch { .. })));
        let h = hyp(&[("x", "x"), ("She like apples .", "She like apples ."), ("This is fine .", "This is fine .")]);
        match score(&h, &g, 0.5) {
            Err(EvalError::SourceMismatch { id }) => assert_eq!(id, g[0].id),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_format_is_stable() {
        let g = gold();
        let h = hyp(&[
            ("I goes to school every days .", "I go to school every day ."),
            ("She like apples .", "She like apples ."),
            ("This is fine .", "This is fine ."),
        ]);
        let text = score(&h, &g, 0.5).unwrap().to_string();
        assert!(text.starts_with("Sentences  3\nTP         2\nFP         0\nFN         1\nPrecision  1.0000\nRecall     0.6667\nF0.5       0.9091\n"), "{text}");
    }

    #[test]
    fn error_rate_cases() {
        let same = hyp(&[("a b", "a b"), ("c", "c")]);
        assert_eq!(error_rate(&same), 0.0);
        let t1 = hyp(&[(
            "Public transport enables our body to move one place to another .",
            "Public transport enables our body to move from one place to another .",
        )]);
        assert_eq!(error_rate(&t1), 1.0);
        assert_eq!(error_rate(&[]), 0.0);
    }

    fn corpus() -> Vec<ParallelExample> {
        hyp(&[
            ("He go to school .", "He goes to school ."),
            ("She go home .", "She goes home ."),
            ("I has a apple .", "I have an apple ."),
            ("They move one place .", "They move from one place ."),
        ])
    }

    #[test]
    fn self_comparison_is_perfect() {
        let reference = build_pool_from(&corpus(), 1, 1).unwrap();
        let r = distribution_consistency(&reference, &corpus(), 100, 1).unwrap();
        assert!((r.cosine - 1.0).abs() < 1e-12);
        assert!((r.spearman - 1.0).abs() < 1e-12);
        assert_eq!(r.reference_freqs, r.candidate_freqs);
    }

    #[test]
    fn disjoint_corpus_has_zero_cosine() {
        let reference = build_pool_from(&corpus(), 1, 1).unwrap();
        let other = hyp(&[("x y", "x z y")]);
        let r = distribution_consistency(&reference, &other, 10, 1).unwrap();
        assert_eq!(r.cosine, 0.0);
        assert!(r.candidate_freqs.iter().all(|&c| c == 0));
    }

    #[test]
    fn top_k_projection_and_ties() {
        let reference = build_pool_from(&corpus(), 1, 1).unwrap();
        let r = distribution_consistency(&reference, &corpus(), 2, 1).unwrap();
        assert_eq!(r.patterns.len(), 2);
        assert_eq!(r.patterns[0], ErrorPattern::new(tokenize("go"), tokenize("goes"), 1));
        assert_eq!(r.reference_freqs[0], 2);
        assert!(matches!(distribution_consistency(&reference, &corpus(), 0, 1), Err(EvalError::InvalidTopK)));
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[10, 20, 20, 5]), vec![2.0, 3.5, 3.5, 1.0]);
        assert!((spearman(&[1, 2, 3, 4], &[10, 20, 30, 40]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1, 2, 3, 4], &[4, 3, 2, 1]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1, 1, 1], &[1, 2, 3]), 0.0);
    }
}
