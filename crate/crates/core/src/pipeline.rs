//! End-to-end tagging: retrieve neighbors, run the copy model, decode.

use std::collections::HashSet;

use crate::copy_model::{copy_logits, copy_posterior, marginal_over_types, CopyPosterior, MarginalMatrix};
use crate::corpus::{Dataset, Sentence};
use crate::decoder::{build_segment_dict, dp_decode_expected, predict_marginal, DPConfig, DecodeResult, Segment};
use crate::embeddings::{embed_sentence, EmbeddingMatrix, EmbeddingProvider};
use crate::error::{arg, Result};
use crate::retrieval::{build_index, NeighborEntry, NeighborIndex, NeighborSet};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decode<T> {
    /// Per-token argmax of the type marginals.
    Marginal,
    /// Segment-penalized dynamic program over copied segments.
    Segments(DPConfig<T>),
}

/// Everything the copy model computed for one input sentence.
#[derive(Debug, Clone)]
pub struct Analysis<T> {
    pub embeddings: EmbeddingMatrix<T>,
    /// Retrieved `(database id, cosine)` pairs, best first.
    pub neighbors: Vec<(usize, T)>,
    pub set: NeighborSet<T>,
    pub posterior: CopyPosterior<T>,
    pub marginals: MarginalMatrix<T>,
}

/// A labeled database plus the index and embeddings needed to tag inputs.
pub struct Tagger<'a, T: Real> {
    db: &'a Dataset,
    query_provider: &'a dyn EmbeddingProvider<T>,
    index: NeighborIndex<T>,
    db_embeddings: Vec<EmbeddingMatrix<T>>,
    neighbors: usize,
}

impl<'a, T: Real> Tagger<'a, T> {
    /// Uses one provider for database and queries.
    pub fn new(db: &'a Dataset, provider: &'a dyn EmbeddingProvider<T>, neighbors: usize) -> Result<Self> {
        Self::with_providers(db, provider, provider, neighbors)
    }

    /// Database sentences are embedded by `db_provider`, inputs by
    /// `query_provider`; both must produce the same width.
    pub fn with_providers(
        db: &'a Dataset,
        db_provider: &'a dyn EmbeddingProvider<T>,
        query_provider: &'a dyn EmbeddingProvider<T>,
        neighbors: usize,
    ) -> Result<Self> {
        if neighbors == 0 {
            return arg("the neighbor count must be at least 1");
        }
        if db_provider.dim() != query_provider.dim() {
            return arg(format!(
                "database embeddings have width {} but query embeddings have width {}",
                db_provider.dim(),
                query_provider.dim()
            ));
        }
        let db_embeddings: Vec<EmbeddingMatrix<T>> = db.sentences().map(|s| db_provider.embed(s)).collect::<Result<_>>()?;
        let index = build_index(db, db_provider)?;
        Ok(Self { db, query_provider, index, db_embeddings, neighbors })
    }

    /// Replaces the index, e.g. with one loaded from disk. Its ids must be
    /// the database's.
    pub fn with_index(mut self, index: NeighborIndex<T>) -> Result<Self> {
        if index.len() != self.db.len() || index.dim() != self.index.dim() {
            return arg(format!(
                "index has {} vectors of width {}, database needs {} of width {}",
                index.len(),
                index.dim(),
                self.db.len(),
                self.index.dim()
            ));
        }
        self.index = index;
        Ok(self)
    }

    pub fn database(&self) -> &Dataset {
        self.db
    }

    pub fn index(&self) -> &NeighborIndex<T> {
        &self.index
    }

    pub fn neighbors(&self) -> usize {
        self.neighbors
    }

    pub fn analyze(&self, sentence: &Sentence) -> Result<Analysis<T>> {
        self.analyze_excluding(sentence, &HashSet::new())
    }

    /// Like [`Tagger::analyze`], never retrieving the database ids in `exclude`.
    pub fn analyze_excluding(&self, sentence: &Sentence, exclude: &HashSet<usize>) -> Result<Analysis<T>> {
        let embeddings = self.query_provider.embed(sentence)?;
        let neighbors = self.index.query(&embed_sentence(&embeddings)?, self.neighbors, exclude)?;
        let entries = neighbors
            .iter()
            .map(|&(id, _)| {
                let item = &self.db.items()[id];
                NeighborEntry {
                    id,
                    sentence: item.sentence.clone(),
                    labels: item.labels.clone(),
                    embeddings: self.db_embeddings[id].clone(),
                }
            })
            .collect();
        let set = NeighborSet::from_entries(entries)?;
        let posterior = copy_posterior(&copy_logits(&embeddings, &set)?)?;
        let marginals = marginal_over_types(&posterior, &set)?;
        Ok(Analysis { embeddings, neighbors, set, posterior, marginals })
    }

    pub fn decode(&self, analysis: &Analysis<T>, how: &Decode<T>) -> Result<DecodeResult<T>> {
        decode_analysis(analysis, how)
    }

    /// Tags one sentence, returning label ids in the database vocabulary.
    pub fn tag(&self, sentence: &Sentence, how: &Decode<T>) -> Result<DecodeResult<T>> {
        self.decode(&self.analyze(sentence)?, how)
    }

    /// Tags every sentence, returning label strings.
    pub fn tag_all<'s>(&self, sentences: impl IntoIterator<Item = &'s Sentence>, how: &Decode<T>) -> Result<Vec<Vec<String>>> {
        sentences
            .into_iter()
            .map(|s| {
                let r = self.tag(s, how)?;
                Ok(r.labels.iter().map(|&l| self.db.vocab().label(l).to_string()).collect())
            })
            .collect()
    }
}

/// Decodes an analysis. Marginal decoding reports one length-1 segment per
/// token, sourced from the most probable flat position with that label.
pub fn decode_analysis<T: Real>(analysis: &Analysis<T>, how: &Decode<T>) -> Result<DecodeResult<T>> {
    match how {
        Decode::Marginal => {
            let labels = predict_marginal(&analysis.marginals);
            let post = &analysis.posterior;
            let flat = analysis.set.flat_labels();
            let mut segments = Vec::with_capacity(labels.len());
            let mut cost_term = T::zero();
            for (t, &l) in labels.iter().enumerate() {
                let best = (0..flat.len())
                    .filter(|&i| flat[i] == l)
                    .fold(None, |acc: Option<usize>, i| match acc {
                        Some(b) if post.prob(t, b) >= post.prob(t, i) => Some(b),
                        _ => Some(i),
                    })
                    .expect("predicted label occurs in the neighbor set");
                let (neighbor, offset) = analysis.set.origin()[best];
                segments.push(Segment { start: t, len: 1, neighbor, offset });
                cost_term += T::one() - analysis.marginals.prob(t, l);
            }
            Ok(DecodeResult { labels, segments, objective: cost_term, cost_term })
        }
        Decode::Segments(cfg) => {
            let dict = build_segment_dict(&analysis.set, cfg.l_max);
            dp_decode_expected(&analysis.marginals, &dict, cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{EmbedderConfig, HashEmbedder};

    fn db() -> Dataset {
        Dataset::from_labeled(vec![
            (vec!["alice", "runs"], vec!["B-PER", "O"]),
            (vec!["bob", "walks", "home"], vec!["B-PER", "O", "O"]),
            (vec!["paris", "is", "big"], vec!["B-LOC", "O", "O"]),
        ])
        .unwrap()
    }

    fn embedder() -> HashEmbedder<f64> {
        HashEmbedder::new(EmbedderConfig { dim: 16, buckets: 1 << 10, window: 1, seed: 3, init_std: 0.1 }).unwrap()
    }

    #[test]
    fn marginal_segments_point_at_matching_labels() {
        let d = db();
        let e = embedder();
        let tagger = Tagger::new(&d, &e, 2).unwrap();
        let s = Sentence::new(9, vec!["alice".into(), "walks".into()]).unwrap();
        let a = tagger.analyze(&s).unwrap();
        assert_eq!(a.neighbors.len(), 2);
        let r = tagger.decode(&a, &Decode::Marginal).unwrap();
        let seqs: Vec<&[usize]> = a.set.label_sequences().collect();
        assert!(r.provenance_is_sound(&seqs));
        assert_eq!(r.num_segments(), 2);
    }

    #[test]
    fn segment_decoding_is_sound() {
        let d = db();
        let e = embedder();
        let tagger = Tagger::new(&d, &e, 3).unwrap();
        let s = Sentence::new(9, vec!["bob".into(), "is".into(), "home".into()]).unwrap();
        let a = tagger.analyze(&s).unwrap();
        let r = tagger.decode(&a, &Decode::Segments(DPConfig::new(0.4))).unwrap();
        let seqs: Vec<&[usize]> = a.set.label_sequences().collect();
        assert!(r.provenance_is_sound(&seqs));
        assert_eq!(r.labels.len(), 3);
    }

    #[test]
    fn rejects_width_mismatch_and_zero_neighbors() {
        let d = db();
        let e = embedder();
        let other: HashEmbedder<f64> =
            HashEmbedder::new(EmbedderConfig { dim: 8, buckets: 1 << 10, window: 1, seed: 3, init_std: 0.1 }).unwrap();
        assert!(Tagger::with_providers(&d, &e, &other, 2).is_err());
        assert!(Tagger::new(&d, &e, 0).is_err());
    }
}
