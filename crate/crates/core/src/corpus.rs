//! CoNLL-style column corpora, label vocabularies and BIO span conversion.
//!
//! Files hold one token per line with whitespace-separated columns and a
//! blank line after every sentence. `-DOCSTART-` lines are skipped on read
//! and never written.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{arg, Error, Result};

const DOCSTART: &str = "-DOCSTART-";

/// A pre-tokenized sentence. Tokens are non-empty and whitespace-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: usize,
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(id: usize, tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return arg(format!("sentence {id} has no tokens"));
        }
        if let Some(bad) = tokens.iter().find(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return arg(format!("sentence {id}: invalid token {bad:?}"));
        }
        Ok(Self { id, tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Bijection between label-type strings and dense ids, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelVocab {
    types: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_types(types: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut vocab = Self::new();
        for t in types {
            if vocab.id(&t).is_some() {
                return arg(format!("duplicate label type {t:?}"));
            }
            vocab.intern(&t);
        }
        Ok(vocab)
    }

    /// Returns the id of `label`, adding it if unseen.
    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.types.len();
        self.types.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.types[id]
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    /// Number of label types.
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSequence {
    pub sentence: Sentence,
    pub labels: Vec<usize>,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.sentence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentence.is_empty()
    }
}

/// Labeled sentences sharing one vocabulary. Item `i` has sentence id `i`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    items: Vec<LabeledSequence>,
    vocab: LabelVocab,
}

impl Dataset {
    pub fn new(items: Vec<LabeledSequence>, vocab: LabelVocab) -> Result<Self> {
        for (i, item) in items.iter().enumerate() {
            if item.sentence.id != i {
                return arg(format!("item {i} carries sentence id {}", item.sentence.id));
            }
            if item.labels.len() != item.sentence.len() {
                return Err(Error::Misaligned {
                    id: i,
                    message: format!("{} labels for {} tokens", item.labels.len(), item.sentence.len()),
                });
            }
            if let Some(&bad) = item.labels.iter().find(|&&l| l >= vocab.len()) {
                return arg(format!("sentence {i}: label id {bad} outside vocabulary of {}", vocab.len()));
            }
        }
        Ok(Self { items, vocab })
    }

    /// Builds a dataset from (tokens, label strings) pairs; ids are assigned
    /// in order and the vocabulary in first-appearance order.
    pub fn from_labeled<I, S>(sentences: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<S>, Vec<S>)>,
        S: AsRef<str>,
    {
        let mut vocab = LabelVocab::new();
        let mut items = Vec::new();
        for (id, (tokens, labels)) in sentences.into_iter().enumerate() {
            let sentence = Sentence::new(id, tokens.iter().map(|t| t.as_ref().to_string()).collect())?;
            if labels.len() != sentence.len() {
                return Err(Error::Misaligned {
                    id,
                    message: format!("{} labels for {} tokens", labels.len(), sentence.len()),
                });
            }
            let labels = labels.iter().map(|l| vocab.intern(l.as_ref())).collect();
            items.push(LabeledSequence { sentence, labels });
        }
        Ok(Self { items, vocab })
    }

    pub fn items(&self) -> &[LabeledSequence] {
        &self.items
    }

    pub fn get(&self, id: usize) -> Option<&LabeledSequence> {
        self.items.get(id)
    }

    pub fn vocab(&self) -> &LabelVocab {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.items.iter().map(|i| &i.sentence)
    }

    pub fn label_strings(&self, id: usize) -> Vec<&str> {
        self.items[id].labels.iter().map(|&l| self.vocab.label(l)).collect()
    }

    pub fn num_tokens(&self) -> usize {
        self.items.iter().map(LabeledSequence::len).sum()
    }
}

/// Column selector for the tag column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagColumn {
    Index(usize),
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConllLayout {
    pub token_col: usize,
    pub tag_col: TagColumn,
}

impl Default for ConllLayout {
    fn default() -> Self {
        Self { token_col: 0, tag_col: TagColumn::Last }
    }
}

impl ConllLayout {
    /// Builds a layout from integer columns where `-1` selects the last column.
    pub fn from_indices(token_col: usize, tag_col: i64) -> Result<Self> {
        let tag_col = match tag_col {
            -1 => TagColumn::Last,
            c if c >= 0 => TagColumn::Index(c as usize),
            c => return arg(format!("tag column {c} is invalid")),
        };
        Ok(Self { token_col, tag_col })
    }

    fn min_columns(&self) -> usize {
        match self.tag_col {
            TagColumn::Index(tag) => self.token_col.max(tag) + 1,
            TagColumn::Last => (self.token_col + 1).max(2),
        }
    }
}

/// Splits text into blank-line separated blocks of (line number, columns),
/// dropping `-DOCSTART-` lines.
fn blocks(text: &str) -> Vec<Vec<(usize, Vec<&str>)>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split([' ', '\t']).filter(|c| !c.is_empty()).collect();
        if cols.is_empty() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            continue;
        }
        if cols[0] == DOCSTART {
            continue;
        }
        current.push((n + 1, cols));
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

pub fn parse_conll(text: &str, layout: ConllLayout) -> Result<Dataset> {
    let need = layout.min_columns();
    let mut vocab = LabelVocab::new();
    let mut items = Vec::new();
    for block in blocks(text) {
        let mut tokens = Vec::with_capacity(block.len());
        let mut labels = Vec::with_capacity(block.len());
        for (line, cols) in block {
            if cols.len() < need {
                return Err(Error::Parse {
                    line,
                    message: format!("expected at least {need} columns, found {}", cols.len()),
                });
            }
            let tag = match layout.tag_col {
                TagColumn::Index(c) => cols[c],
                TagColumn::Last => cols[cols.len() - 1],
            };
            tokens.push(cols[layout.token_col].to_string());
            labels.push(vocab.intern(tag));
        }
        let sentence = Sentence::new(items.len(), tokens)?;
        items.push(LabeledSequence { sentence, labels });
    }
    Ok(Dataset { items, vocab })
}

/// Reads only the token column, for unlabeled tagging input.
pub fn parse_sentences(text: &str, token_col: usize) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for block in blocks(text) {
        let mut tokens = Vec::with_capacity(block.len());
        for (line, cols) in block {
            let Some(tok) = cols.get(token_col) else {
                return Err(Error::Parse {
                    line,
                    message: format!("expected at least {} columns, found {}", token_col + 1, cols.len()),
                });
            };
            tokens.push(tok.to_string());
        }
        out.push(Sentence::new(out.len(), tokens)?);
    }
    Ok(out)
}

/// Serializes with single-space separators; columns other than token and
/// tag are filled with `_`.
pub fn write_conll(d: &Dataset, layout: ConllLayout) -> String {
    let ncols = layout.min_columns();
    let tag_at = match layout.tag_col {
        TagColumn::Index(c) => c,
        TagColumn::Last => ncols - 1,
    };
    let mut out = String::new();
    let mut cols = vec!["_"; ncols];
    for item in &d.items {
        for (tok, &label) in item.sentence.tokens().iter().zip(&item.labels) {
            cols.iter_mut().for_each(|c| *c = "_");
            cols[layout.token_col] = tok;
            cols[tag_at] = d.vocab.label(label);
            out.push_str(&cols.join(" "));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Renames label types through `mapping`, which must be total and injective
/// on the dataset's vocabulary. Label ids are unchanged.
pub fn relabel(d: &Dataset, mapping: &HashMap<String, String>) -> Result<Dataset> {
    let mut seen = HashSet::new();
    let mut types = Vec::with_capacity(d.vocab.len());
    for t in d.vocab.types() {
        let Some(image) = mapping.get(t) else {
            return arg(format!("mapping is not defined for label type {t:?}"));
        };
        if !seen.insert(image.as_str()) {
            return arg(format!("mapping is not injective: {image:?} has several preimages"));
        }
        types.push(image.clone());
    }
    Ok(Dataset { items: d.items.clone(), vocab: LabelVocab::from_types(types)? })
}

/// A typed span over token indices `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

impl Span {
    pub fn new(start: usize, end: usize, kind: impl Into<String>) -> Self {
        Self { start, end, kind: kind.into() }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.start, self.end, self.kind)
    }
}

enum Bio<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_bio(label: &str) -> Result<Bio<'_>> {
    if label == "O" {
        return Ok(Bio::Outside);
    }
    match label.split_once('-') {
        Some(("B", kind)) if !kind.is_empty() => Ok(Bio::Begin(kind)),
        Some(("I", kind)) if !kind.is_empty() => Ok(Bio::Inside(kind)),
        _ => Err(Error::Format(format!("malformed BIO label {label:?}"))),
    }
}

/// True when every label is `O`, `B-X` or `I-X`.
pub fn is_bio<S: AsRef<str>>(labels: &[S]) -> bool {
    labels.iter().all(|l| parse_bio(l.as_ref()).is_ok())
}

/// Extracts maximal typed spans. A stray `I-X` (after `O`, at the start, or
/// after a different type) opens a new span, as conlleval does.
pub fn spans_from_bio<S: AsRef<str>>(labels: &[S]) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, label) in labels.iter().enumerate() {
        let tag = parse_bio(label.as_ref())?;
        let continues = matches!((&tag, open), (Bio::Inside(k), Some((_, cur))) if *k == cur);
        if continues {
            continue;
        }
        if let Some((start, kind)) = open.take() {
            spans.push(Span::new(start, i, kind));
        }
        match tag {
            Bio::Outside => {}
            Bio::Begin(k) | Bio::Inside(k) => open = Some((i, k)),
        }
    }
    if let Some((start, kind)) = open {
        spans.push(Span::new(start, labels.len(), kind));
    }
    Ok(spans)
}

pub fn bio_from_spans(spans: &[Span], len: usize) -> Result<Vec<String>> {
    let mut sorted: Vec<&Span> = spans.iter().collect();
    sorted.sort();
    let mut out = vec!["O".to_string(); len];
    let mut covered = 0;
    for s in sorted {
        if s.start >= s.end || s.end > len {
            return arg(format!("span {s} is empty or outside [0,{len})"));
        }
        if s.start < covered {
            return arg(format!("span {s} overlaps a previous span"));
        }
        if s.kind.is_empty() {
            return arg(format!("span {s} has an empty type"));
        }
        out[s.start] = format!("B-{}", s.kind);
        for slot in &mut out[s.start + 1..s.end] {
            *slot = format!("I-{}", s.kind);
        }
        covered = s.end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> ConllLayout {
        ConllLayout::default()
    }

    #[test]
    fn parses_two_column_block() {
        let d = parse_conll("EU B-ORG\nrejects O\n\n", layout()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.items()[0].sentence.tokens(), &["EU", "rejects"]);
        assert_eq!(d.label_strings(0), vec!["B-ORG", "O"]);
        assert_eq!(d.vocab().types(), &["B-ORG", "O"]);
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        let d = parse_conll("", layout()).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.vocab().len(), 0);
        assert_eq!(write_conll(&d, layout()), "");
    }

    #[test]
    fn docstart_and_four_columns() {
        let text = "-DOCSTART- -X- -X- O\n\nEU NNP B-NP B-ORG\nrejects VBZ B-VP O\n\n\n\nGerman JJ B-NP B-MISC\n";
        let d = parse_conll(text, layout()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.label_strings(1), vec!["B-MISC"]);
        let chunks = parse_conll(text, ConllLayout::from_indices(0, 2).unwrap()).unwrap();
        assert_eq!(chunks.label_strings(0), vec!["B-NP", "B-VP"]);
    }

    #[test]
    fn short_line_reports_line_number() {
        let err = parse_conll("a O\nb\n", layout()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_conll("a b c\n", ConllLayout::from_indices(0, 3).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn tabs_and_repeated_spaces() {
        let d = parse_conll("a\t \tO\n", layout()).unwrap();
        assert_eq!(d.label_strings(0), vec!["O"]);
    }

    #[test]
    fn writes_single_token() {
        let d = Dataset::from_labeled(vec![(vec!["a"], vec!["O"])]).unwrap();
        assert_eq!(write_conll(&d, layout()), "a O\n\n");
        let wide = ConllLayout::from_indices(1, 3).unwrap();
        assert_eq!(write_conll(&d, wide), "_ a _ O\n\n");
        assert_eq!(parse_conll(&write_conll(&d, wide), wide).unwrap(), d);
    }

    #[test]
    fn sentence_rejects_bad_tokens() {
        assert!(Sentence::new(0, vec![]).is_err());
        assert!(Sentence::new(0, vec!["a b".into()]).is_err());
        assert!(Sentence::new(0, vec!["".into()]).is_err());
    }

    #[test]
    fn dataset_validation() {
        let s = Sentence::new(0, vec!["a".into()]).unwrap();
        let vocab = LabelVocab::from_types(["O".to_string()]).unwrap();
        let bad = LabeledSequence { sentence: s.clone(), labels: vec![1] };
        assert!(Dataset::new(vec![bad], vocab.clone()).is_err());
        let short = LabeledSequence { sentence: s, labels: vec![] };
        assert!(Dataset::new(vec![short], vocab).is_err());
    }

    #[test]
    fn bio_examples() {
        assert_eq!(spans_from_bio(&["B-PER", "I-PER", "O"]).unwrap(), vec![Span::new(0, 2, "PER")]);
        assert_eq!(spans_from_bio(&["O", "I-PER", "O"]).unwrap(), vec![Span::new(1, 2, "PER")]);
        assert_eq!(
            spans_from_bio(&["B-ORG", "B-ORG"]).unwrap(),
            vec![Span::new(0, 1, "ORG"), Span::new(1, 2, "ORG")]
        );
        assert_eq!(
            spans_from_bio(&["B-ORG", "I-PER", "I-PER"]).unwrap(),
            vec![Span::new(0, 1, "ORG"), Span::new(1, 3, "PER")]
        );
        assert!(spans_from_bio(&["BPER"]).is_err());
        assert!(spans_from_bio(&["B-"]).is_err());
        assert!(spans_from_bio(&["NN"]).is_err());
        assert!(is_bio(&["O", "B-X"]));
        assert!(!is_bio(&["VBD"]));
    }

    #[test]
    fn bio_from_spans_examples() {
        assert_eq!(bio_from_spans(&[Span::new(0, 2, "PER")], 3).unwrap(), vec!["B-PER", "I-PER", "O"]);
        assert_eq!(bio_from_spans(&[], 2).unwrap(), vec!["O", "O"]);
        assert!(bio_from_spans(&[Span::new(0, 2, "A"), Span::new(1, 3, "B")], 3).is_err());
        assert!(bio_from_spans(&[Span::new(2, 4, "A")], 3).is_err());
    }

    #[test]
    fn relabel_rules() {
        let d = Dataset::from_labeled(vec![(vec!["x", "y"], vec!["A", "B"])]).unwrap();
        let id: HashMap<_, _> = [("A", "A"), ("B", "B")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert_eq!(relabel(&d, &id).unwrap(), d);
        let swap: HashMap<_, _> = [("A", "B"), ("B", "A")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let once = relabel(&d, &swap).unwrap();
        assert_eq!(once.label_strings(0), vec!["B", "A"]);
        assert_eq!(relabel(&once, &swap).unwrap(), d);
        assert_eq!(once.vocab().len(), d.vocab().len());
        let partial: HashMap<_, _> = [("A".to_string(), "C".to_string())].into_iter().collect();
        assert!(relabel(&d, &partial).is_err());
        let collapse: HashMap<_, _> = [("A", "C"), ("B", "C")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert!(relabel(&d, &collapse).is_err());
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        let token = "[A-Za-z0-9.,'-]{1,6}";
        let label = prop_oneof![Just("O".to_string()), "[BI]-[A-Z]{1,3}", "[A-Z]{2,3}"];
        let sentence = (1usize..8).prop_flat_map(move |n| {
            (proptest::collection::vec(token, n), proptest::collection::vec(label.clone(), n))
        });
        proptest::collection::vec(sentence, 0..6)
            .prop_filter("no docstart token", |s| s.iter().all(|(t, _)| t[0] != DOCSTART))
            .prop_map(|s| Dataset::from_labeled(s).unwrap())
    }

    fn arb_spans() -> impl Strategy<Value = (Vec<Span>, usize)> {
        proptest::collection::vec((0usize..3, 1usize..4, "[A-Z]{1,3}"), 0..5).prop_map(|parts| {
            let mut spans = Vec::new();
            let mut pos = 0;
            for (gap, len, kind) in parts {
                let start = pos + gap;
                spans.push(Span::new(start, start + len, kind));
                pos = start + len;
            }
            (spans, pos + 1)
        })
    }

    proptest! {
        #[test]
        fn conll_round_trip(d in arb_dataset()) {
            let text = write_conll(&d, layout());
            prop_assert_eq!(parse_conll(&text, layout()).unwrap(), d);
        }

        #[test]
        fn spans_round_trip((spans, len) in arb_spans()) {
            let bio = bio_from_spans(&spans, len).unwrap();
            prop_assert_eq!(spans_from_bio(&bio).unwrap(), spans);
        }

        #[test]
        fn label_ids_in_range(d in arb_dataset()) {
            for item in d.items() {
                prop_assert!(item.labels.iter().all(|&l| l < d.vocab().len()));
            }
        }
    }
}
