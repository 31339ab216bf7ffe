//! Scoring: token accuracy, CoNLL span F1, segment statistics and c-sweeps.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::{is_bio, spans_from_bio, Dataset, Span};
use crate::decoder::{build_segment_dict, dp_decode_expected, DPConfig, SegmentDict};
use crate::embeddings::EmbeddingProvider;
use crate::error::{arg, Error, Result};
use crate::pipeline::{Analysis, Decode, Tagger};
use crate::scalar::Real;

pub const SWEEP_HEADER: &str = "c,precision,recall,f1,token_accuracy,avg_segments";

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpanCounts {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: SpanCounts,
}

impl SpanScores {
    pub fn from_counts(counts: SpanCounts) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(counts.correct, counts.predicted);
        let recall = ratio(counts.correct, counts.gold);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f1, counts }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub token_accuracy: f64,
    /// Present when both sides are BIO-encoded.
    pub spans: Option<SpanScores>,
    /// Mean segments per sentence, when segment decoding was used.
    pub avg_segments: Option<f64>,
    pub skipped_tokens: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub c: f64,
    pub spans: Option<SpanScores>,
    pub token_accuracy: f64,
    pub avg_segments: f64,
    /// Summed expected mislabelings over all sentences.
    pub expected_cost: f64,
}

fn check_aligned(pred: &Dataset, gold: &Dataset) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Misaligned {
            id: pred.len().min(gold.len()),
            message: format!("prediction has {} sentences, gold has {}", pred.len(), gold.len()),
        });
    }
    for (p, g) in pred.items().iter().zip(gold.items()) {
        if p.len() != g.len() {
            return Err(Error::Misaligned {
                id: g.sentence.id,
                message: format!("prediction has {} tokens, gold has {}", p.len(), g.len()),
            });
        }
    }
    Ok(())
}

fn label_pairs<'a>(pred: &'a Dataset, gold: &'a Dataset) -> impl Iterator<Item = (Vec<&'a str>, Vec<&'a str>)> + 'a {
    (0..gold.len()).map(move |i| (pred.label_strings(i), gold.label_strings(i)))
}

/// Fraction of tokens whose predicted label string equals the gold one.
pub fn token_accuracy(pred: &Dataset, gold: &Dataset) -> Result<f64> {
    check_aligned(pred, gold)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, g) in label_pairs(pred, gold) {
        hit += p.iter().zip(&g).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// Span counts for one sentence pair.
pub fn span_counts<S: AsRef<str>>(pred: &[S], gold: &[S]) -> Result<SpanCounts> {
    let p = spans_from_bio(pred)?;
    let g = spans_from_bio(gold)?;
    let mut remaining: HashMap<&Span, usize> = HashMap::new();
    for s in &g {
        *remaining.entry(s).or_default() += 1;
    }
    let mut correct = 0;
    for s in &p {
        if let Some(n) = remaining.get_mut(s).filter(|n| **n > 0) {
            *n -= 1;
            correct += 1;
        }
    }
    Ok(SpanCounts { correct, predicted: p.len(), gold: g.len() })
}

/// Micro-averaged exact-match span precision, recall and F1.
pub fn span_f1(pred: &Dataset, gold: &Dataset) -> Result<SpanScores> {
    check_aligned(pred, gold)?;
    let mut total = SpanCounts::default();
    for (p, g) in label_pairs(pred, gold) {
        let c = span_counts(&p, &g)?;
        total.correct += c.correct;
        total.predicted += c.predicted;
        total.gold += c.gold;
    }
    Ok(SpanScores::from_counts(total))
}

/// True when every label of both datasets parses as BIO.
pub fn both_bio(pred: &Dataset, gold: &Dataset) -> bool {
    is_bio(pred.vocab().types()) && is_bio(gold.vocab().types())
}

/// Token accuracy, plus span scores when both sides are BIO.
pub fn evaluate(pred: &Dataset, gold: &Dataset) -> Result<EvalReport> {
    let token_accuracy = token_accuracy(pred, gold)?;
    let spans = if both_bio(pred, gold) { Some(span_f1(pred, gold)?) } else { None };
    Ok(EvalReport { token_accuracy, spans, avg_segments: None, skipped_tokens: 0 })
}

/// Builds a dataset with the sentences of `gold` and the given label strings.
pub fn predictions_dataset(gold: &Dataset, labels: Vec<Vec<String>>) -> Result<Dataset> {
    if labels.len() != gold.len() {
        return Err(Error::Misaligned {
            id: labels.len().min(gold.len()),
            message: format!("{} predictions for {} sentences", labels.len(), gold.len()),
        });
    }
    let pairs = gold.items().iter().zip(labels).map(|(item, l)| (item.sentence.tokens().to_vec(), l));
    Dataset::from_labeled(pairs)
}

/// Decodes `data` at each `c` in `grid` (strictly ascending) and scores it.
/// Neighbors, marginals and the segment dictionary are computed once per
/// sentence and reused across the grid.
pub fn sweep_c<T: Real>(grid: &[T], tagger: &Tagger<'_, T>, data: &Dataset, l_max: usize) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return arg("the c grid is empty");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return arg("the c grid must be strictly ascending");
    }
    let analyses: Vec<(Analysis<T>, SegmentDict)> = data
        .items()
        .iter()
        .map(|item| {
            let a = tagger.analyze(&item.sentence)?;
            let dict = build_segment_dict(&a.set, l_max);
            Ok((a, dict))
        })
        .collect::<Result<_>>()?;
    let vocab = tagger.database().vocab();
    let mut rows = Vec::with_capacity(grid.len());
    for &c in grid {
        let cfg = DPConfig { c, l_max, prune: true };
        let mut labels = Vec::with_capacity(data.len());
        let (mut segments, mut cost) = (0usize, 0.0f64);
        for (a, dict) in &analyses {
            let r = dp_decode_expected(&a.marginals, dict, &cfg)
                .map_err(|e| Error::Decode { c: c.as_f64(), source: Box::new(e) })?;
            segments += r.num_segments();
            cost += r.cost_term.as_f64();
            labels.push(r.labels.iter().map(|&l| vocab.label(l).to_string()).collect());
        }
        let pred = predictions_dataset(data, labels)?;
        let report = evaluate(&pred, data)?;
        rows.push(SweepRow {
            c: c.as_f64(),
            spans: report.spans,
            token_accuracy: report.token_accuracy,
            avg_segments: if data.is_empty() { 0.0 } else { segments as f64 / data.len() as f64 },
            expected_cost: cost,
        });
    }
    Ok(rows)
}

/// Sweep rows as CSV. Span columns read `NA` when the labels are not BIO.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let span = |f: fn(&SpanScores) -> f64| r.spans.as_ref().map_or("NA".to_string(), |s| format!("{:.4}", f(s)));
        writeln!(
            out,
            "{:.4},{},{},{},{:.4},{:.4}",
            r.c,
            span(|s| s.precision),
            span(|s| s.recall),
            span(|s| s.f1),
            r.token_accuracy,
            r.avg_segments
        )
        .unwrap();
    }
    out
}

/// Tags `eval_data` with neighbors drawn from `new_db` only, without
/// touching the provider's parameters, and scores the result.
pub fn zero_shot_eval<T: Real>(
    provider: &dyn EmbeddingProvider<T>,
    new_db: &Dataset,
    eval_data: &Dataset,
    m_test: usize,
    how: &Decode<T>,
) -> Result<EvalReport> {
    if new_db.is_empty() {
        return arg("the transfer database is empty");
    }
    let tagger = Tagger::new(new_db, provider, m_test)?;
    let mut labels = Vec::with_capacity(eval_data.len());
    let mut segments = 0usize;
    for s in eval_data.sentences() {
        let r = tagger.tag(s, how)?;
        segments += r.num_segments();
        labels.push(r.labels.iter().map(|&l| new_db.vocab().label(l).to_string()).collect());
    }
    let mut report = evaluate(&predictions_dataset(eval_data, labels)?, eval_data)?;
    if matches!(how, Decode::Segments(_)) && !eval_data.is_empty() {
        report.avg_segments = Some(segments as f64 / eval_data.len() as f64);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[(&[&str], &[&str])]) -> Dataset {
        Dataset::from_labeled(rows.iter().map(|(t, l)| (t.to_vec(), l.to_vec()))).unwrap()
    }

    #[test]
    fn accuracy_counts() {
        let gold = ds(&[(&["a", "b", "c", "d"], &["X", "Y", "X", "Y"])]);
        let pred = ds(&[(&["a", "b", "c", "d"], &["X", "Y", "X", "X"])]);
        assert_eq!(token_accuracy(&pred, &gold).unwrap(), 0.75);
        assert_eq!(token_accuracy(&gold, &gold).unwrap(), 1.0);
        let wrong = ds(&[(&["a", "b", "c", "d"], &["Z", "Z", "Z", "Z"])]);
        assert_eq!(token_accuracy(&wrong, &gold).unwrap(), 0.0);
    }

    #[test]
    fn misaligned_names_the_sentence() {
        let gold = ds(&[(&["a"], &["X"]), (&["a", "b"], &["X", "X"])]);
        let pred = ds(&[(&["a"], &["X"]), (&["a"], &["X"])]);
        let err = token_accuracy(&pred, &gold).unwrap_err();
        assert!(matches!(err, Error::Misaligned { id: 1, .. }), "{err}");
    }

    #[test]
    fn span_scores_analytic() {
        let gold = ds(&[(&["a", "b", "c", "d"], &["B-PER", "O", "B-LOC", "I-LOC"])]);
        let pred = ds(&[(&["a", "b", "c", "d"], &["B-PER", "O", "O", "O"])]);
        let s = span_f1(&pred, &gold).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 0.6667).abs() < 1e-4);
        assert_eq!(span_f1(&gold, &gold).unwrap().f1, 1.0);
    }

    #[test]
    fn repaired_inside_tag_matches() {
        let gold = ds(&[(&["a", "b", "c"], &["O", "B-PER", "O"])]);
        let pred = ds(&[(&["a", "b", "c"], &["O", "I-PER", "O"])]);
        assert_eq!(span_f1(&pred, &gold).unwrap().f1, 1.0);
    }

    #[test]
    fn no_spans_scores_zero() {
        let gold = ds(&[(&["a"], &["O"])]);
        let s = span_f1(&gold, &gold).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn csv_format() {
        let rows = vec![
            SweepRow {
                c: 0.0,
                spans: Some(SpanScores::from_counts(SpanCounts { correct: 1, predicted: 1, gold: 2 })),
                token_accuracy: 0.75,
                avg_segments: 2.5,
                expected_cost: 0.0,
            },
            SweepRow { c: 0.2, spans: None, token_accuracy: 1.0, avg_segments: 1.0, expected_cost: 0.0 },
        ];
        assert_eq!(
            sweep_csv(&rows),
            "c,precision,recall,f1,token_accuracy,avg_segments\n\
             0.0000,1.0000,0.5000,0.6667,0.7500,2.5000\n\
             0.2000,NA,NA,NA,1.0000,1.0000\n"
        );
    }
}
