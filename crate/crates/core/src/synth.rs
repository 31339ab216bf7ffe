//! Seeded synthetic corpora for tests, demos and the bundled CLI data.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Dataset;
use crate::error::Result;

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cl", "gr", "st", "tr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "s", "t", "m", "k"];

/// Suffix classes of the suffix-tagging task, paired with their labels.
pub const SUFFIXES: &[(&str, &str)] = &[("ing", "ING"), ("ed", "ED"), ("ly", "LY"), ("ness", "NESS"), ("ful", "FUL")];
/// Label of any word directly after an `-ly` word.
pub const CONTEXT: &str = "MOD";

fn stem(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut s = String::new();
    for _ in 0..syllables {
        s.push_str(ONSETS.choose(rng).unwrap());
        s.push_str(VOWELS.choose(rng).unwrap());
        s.push_str(CODAS.choose(rng).unwrap());
    }
    s
}

/// Shape of a generated suffix-tagging corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuffixCorpus {
    pub sentences: usize,
    /// Distinct stems; every word is a stem plus one of [`SUFFIXES`].
    pub lexicon: usize,
    /// Syllables per stem, drawn uniformly from `1..=max_syllables`.
    pub max_syllables: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SuffixCorpus {
    fn default() -> Self {
        Self { sentences: 500, lexicon: 10, max_syllables: 1, min_len: 4, max_len: 9, seed: 0 }
    }
}

impl SuffixCorpus {
    /// A word's label is fixed by its suffix (`-ing`, `-ed`, `-ly`, `-ness`
    /// or `-ful`), except that the word right after an `-ly` word is `MOD`.
    pub fn generate(&self) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let stems: Vec<String> = (0..self.lexicon.max(1))
            .map(|_| {
                let syl = rng.random_range(1..=self.max_syllables.max(1));
                stem(&mut rng, syl)
            })
            .collect();
        let mut rows = Vec::with_capacity(self.sentences);
        for _ in 0..self.sentences {
            let len = rng.random_range(self.min_len.max(1)..=self.max_len.max(self.min_len.max(1)));
            let mut tokens = Vec::with_capacity(len);
            let mut labels: Vec<String> = Vec::with_capacity(len);
            let mut after_ly = false;
            for _ in 0..len {
                let (suf, label) = SUFFIXES.choose(&mut rng).unwrap();
                let word = format!("{}{suf}", stems.choose(&mut rng).unwrap());
                labels.push(if after_ly { CONTEXT } else { label }.to_string());
                after_ly = word.ends_with("ly");
                tokens.push(word);
            }
            rows.push((tokens, labels));
        }
        Dataset::from_labeled(rows)
    }
}

/// Default-shaped suffix corpus with `n_sentences` sentences.
pub fn suffix_corpus(n_sentences: usize, seed: u64) -> Result<Dataset> {
    SuffixCorpus { sentences: n_sentences, seed, ..Default::default() }.generate()
}

const PERSONS: &[&str] = &["alice", "bruno", "chen", "dara", "elena", "farid", "greta", "hiro", "ines", "jonas", "kemal", "lucia"];
const SURNAMES: &[&str] = &["smith", "okafor", "novak", "tanaka", "silva", "berg", "moreau", "khan"];
const PLACES: &[&str] = &["paris", "lagos", "oslo", "lima", "hanoi", "quito", "dakar", "porto", "riga", "tunis"];
const ORG_HEADS: &[&str] = &["acme", "globex", "initech", "umbra", "vortex", "zenith", "orbit", "nimbus"];
const ORG_TAILS: &[&str] = &["corp", "inc", "group", "labs"];
const VERBS: &[&str] = &["visited", "joined", "left", "praised", "met", "called", "sued", "hired"];
const FILLER: &[&str] = &["the", "a", "new", "old", "team", "office", "report", "today", "again", "quietly"];

/// NER-style BIO corpus with `PER`, `LOC` and `ORG` spans and cue words
/// (`mr` before persons, `in` before places, `at` before organizations).
pub fn ner_corpus(n_sentences: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_sentences);
    for _ in 0..n_sentences {
        let mut tokens: Vec<String> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        let mut push = |t: &str, l: &str, tokens: &mut Vec<String>| {
            tokens.push(t.to_string());
            labels.push(l.to_string());
        };
        let chunks = rng.random_range(2..=4);
        for _ in 0..chunks {
            match rng.random_range(0..5) {
                0 => {
                    if rng.random_bool(0.5) {
                        push("mr", "O", &mut tokens);
                    }
                    push(PERSONS.choose(&mut rng).unwrap(), "B-PER", &mut tokens);
                    if rng.random_bool(0.5) {
                        push(SURNAMES.choose(&mut rng).unwrap(), "I-PER", &mut tokens);
                    }
                }
                1 => {
                    push("in", "O", &mut tokens);
                    push(PLACES.choose(&mut rng).unwrap(), "B-LOC", &mut tokens);
                }
                2 => {
                    push("at", "O", &mut tokens);
                    push(ORG_HEADS.choose(&mut rng).unwrap(), "B-ORG", &mut tokens);
                    push(ORG_TAILS.choose(&mut rng).unwrap(), "I-ORG", &mut tokens);
                }
                3 => push(VERBS.choose(&mut rng).unwrap(), "O", &mut tokens),
                _ => push(FILLER.choose(&mut rng).unwrap(), "O", &mut tokens),
            }
        }
        rows.push((tokens, labels));
    }
    Dataset::from_labeled(rows)
}

/// Collapses every entity type to `ENT`, keeping the B/I prefix.
pub fn coarsen_bio(d: &Dataset) -> Result<Dataset> {
    let rows = d.items().iter().enumerate().map(|(i, item)| {
        let labels: Vec<String> = d
            .label_strings(i)
            .into_iter()
            .map(|l| match l.split_once('-') {
                Some((p, _)) => format!("{p}-ENT"),
                None => l.to_string(),
            })
            .collect();
        (item.sentence.tokens().to_vec(), labels)
    });
    Dataset::from_labeled(rows)
}

/// Splits `d` into its first `at` sentences and the rest, renumbering ids.
pub fn split(d: &Dataset, at: usize) -> Result<(Dataset, Dataset)> {
    let part = |range: std::ops::Range<usize>| {
        Dataset::from_labeled(range.map(|i| {
            let labels: Vec<String> = d.label_strings(i).into_iter().map(str::to_string).collect();
            (d.items()[i].sentence.tokens().to_vec(), labels)
        }))
    };
    let at = at.min(d.len());
    Ok((part(0..at)?, part(at..d.len())?))
}

/// Seed of the sample corpus shipped with the command-line tool.
pub const BUNDLED_SEED: u64 = 2024;

/// The 50-sentence NER-style sample corpus as (train, dev) = (40, 10).
pub fn bundled_corpus() -> Result<(Dataset, Dataset)> {
    split(&ner_corpus(50, BUNDLED_SEED)?, 40)
}
