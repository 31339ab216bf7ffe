//! Sentence-level nearest-neighbor retrieval and neighbor databases.
//!
//! Sentences are indexed by their mean-pooled token embeddings, normalized
//! to unit length, and queried by exact cosine scan.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::corpus::{Dataset, Sentence};
use crate::embeddings::{embed_sentence, EmbeddingMatrix, EmbeddingProvider};
use crate::error::{arg, format, Result};
use crate::matrix::Matrix;
use crate::scalar::{dot, Real};

const NORM_FLOOR: f64 = 1e-12;

/// `u·v / (|u||v|)`, or 0 when either norm is below `1e-12`.
pub fn cosine<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return arg(format!("cosine of vectors with lengths {} and {}", u.len(), v.len()));
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    let floor = T::lit(NORM_FLOOR);
    if nu < floor || nv < floor {
        return Ok(T::zero());
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex<T> {
    ids: Vec<usize>,
    vectors: Matrix<T>,
    zero: Vec<bool>,
    provider_tag: String,
}

impl<T: Real> NeighborIndex<T> {
    /// Builds an index from raw (unnormalized) sentence vectors.
    pub fn from_vectors(ids: Vec<usize>, raw: Matrix<T>, provider_tag: String) -> Result<Self> {
        if ids.len() != raw.rows() {
            return arg(format!("{} ids for {} vectors", ids.len(), raw.rows()));
        }
        if provider_tag.chars().any(char::is_whitespace) || provider_tag.is_empty() {
            return arg(format!("provider tag {provider_tag:?} must be a non-empty word"));
        }
        let mut vectors = raw;
        let mut zero = Vec::with_capacity(ids.len());
        for r in 0..vectors.rows() {
            let row = vectors.row_mut(r);
            let norm = dot(row, row).sqrt();
            let is_zero = norm < T::lit(NORM_FLOOR);
            if !is_zero {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            zero.push(is_zero);
        }
        Ok(Self { ids, vectors, zero, provider_tag })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn vectors(&self) -> &Matrix<T> {
        &self.vectors
    }

    pub fn is_zero(&self, row: usize) -> bool {
        self.zero[row]
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Top-`m` stored sentences by cosine score, descending, ties by
    /// ascending id. Excluded ids are never returned.
    pub fn query(&self, qvec: &[T], m: usize, exclude: &HashSet<usize>) -> Result<Vec<(usize, T)>> {
        if m == 0 {
            return arg("neighbor count must be at least 1");
        }
        if qvec.len() != self.dim() {
            return arg(format!("query width {} does not match index width {}", qvec.len(), self.dim()));
        }
        let mut scored = Vec::with_capacity(self.len());
        for (row, &id) in self.ids.iter().enumerate() {
            if exclude.contains(&id) {
                continue;
            }
            let score = if self.zero[row] { T::zero() } else { cosine(self.vectors.row(row), qvec)? };
            scored.push((id, score));
        }
        let by_rank = |a: &(usize, T), b: &(usize, T)| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0));
        if scored.len() > m {
            scored.select_nth_unstable_by(m - 1, by_rank);
            scored.truncate(m);
        }
        scored.sort_by(by_rank);
        Ok(scored)
    }

    /// `#nnindex v1 dim <D> provider <tag>` followed by `<id> <v1> ... <vD>` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("#nnindex v1 dim {} provider {}\n", self.dim(), self.provider_tag);
        for (r, id) in self.ids.iter().enumerate() {
            write!(out, "{id}").unwrap();
            for v in self.vectors.row(r) {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Reads a persisted index. Stored vectors are taken verbatim.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let parts: Vec<&str> = header.split(' ').collect();
        let (dim, tag) = match parts.as_slice() {
            ["#nnindex", "v1", "dim", d, "provider", tag] => match d.parse::<usize>() {
                Ok(d) => (d, tag.to_string()),
                Err(_) => return format(format!("bad index dimension {d:?}")),
            },
            ["#nnindex", v, ..] if *v != "v1" => {
                return Err(crate::Error::Version(format!("index version {v}")))
            }
            _ => return format(format!("bad index header {header:?}")),
        };
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut zero = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let id = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| crate::Error::Format(format!("index line {}: bad id", n + 2)))?;
            let before = data.len();
            for f in fields {
                data.push(f.parse::<T>().map_err(|_| crate::Error::Format(format!("index line {}: bad float {f:?}", n + 2)))?);
            }
            if data.len() - before != dim {
                return format(format!("index line {}: {} values, header declares {dim}", n + 2, data.len() - before));
            }
            let row = &data[before..];
            zero.push(dot(row, row).sqrt() < T::lit(NORM_FLOOR));
            ids.push(id);
        }
        let vectors = Matrix::from_vec(ids.len(), dim, data)?;
        Ok(Self { ids, vectors, zero, provider_tag: tag })
    }
}

/// Indexes every sentence of `d` by its pooled embedding.
pub fn build_index<T: Real>(d: &Dataset, provider: &dyn EmbeddingProvider<T>) -> Result<NeighborIndex<T>> {
    build_index_from(d.sentences(), provider)
}

pub fn build_index_from<'a, T: Real>(
    sentences: impl IntoIterator<Item = &'a Sentence>,
    provider: &dyn EmbeddingProvider<T>,
) -> Result<NeighborIndex<T>> {
    let dim = provider.dim();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for s in sentences {
        let x = provider.embed(s)?;
        if x.cols() != dim {
            return arg(format!("provider returned width {} for sentence {}, expected {dim}", x.cols(), s.id));
        }
        ids.push(s.id);
        rows.push(embed_sentence(&x)?);
    }
    if ids.is_empty() {
        return arg("cannot index an empty dataset");
    }
    NeighborIndex::from_vectors(ids, Matrix::from_rows(dim, rows)?, provider.tag())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry<T> {
    /// Sentence id in the database.
    pub id: usize,
    pub sentence: Sentence,
    pub labels: Vec<usize>,
    pub embeddings: EmbeddingMatrix<T>,
}

/// Retrieved database `D`: `M` labeled neighbors plus their label tokens
/// flattened into `N_total` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet<T> {
    entries: Vec<NeighborEntry<T>>,
    flat_labels: Vec<usize>,
    flat_embeddings: Matrix<T>,
    origin: Vec<(usize, usize)>,
}

impl<T: Real> NeighborSet<T> {
    pub fn from_entries(entries: Vec<NeighborEntry<T>>) -> Result<Self> {
        let Some(first) = entries.first() else {
            return arg("a neighbor set needs at least one entry");
        };
        let dim = first.embeddings.cols();
        let total: usize = entries.iter().map(|e| e.labels.len()).sum();
        let mut flat_labels = Vec::with_capacity(total);
        let mut data = Vec::with_capacity(total * dim);
        let mut origin = Vec::with_capacity(total);
        for (m, e) in entries.iter().enumerate() {
            if e.labels.len() != e.sentence.len() || e.embeddings.rows() != e.sentence.len() || e.embeddings.cols() != dim {
                return arg(format!("neighbor {m} (sentence {}) has inconsistent shapes", e.id));
            }
            for k in 0..e.labels.len() {
                flat_labels.push(e.labels[k]);
                data.extend_from_slice(e.embeddings.row(k));
                origin.push((m, k));
            }
        }
        let flat_embeddings = Matrix::from_vec(total, dim, data)?;
        Ok(Self { entries, flat_labels, flat_embeddings, origin })
    }

    pub fn entries(&self) -> &[NeighborEntry<T>] {
        &self.entries
    }

    pub fn flat_labels(&self) -> &[usize] {
        &self.flat_labels
    }

    pub fn flat_embeddings(&self) -> &Matrix<T> {
        &self.flat_embeddings
    }

    /// `(m, k)`: neighbor index and token offset of each flat position.
    pub fn origin(&self) -> &[(usize, usize)] {
        &self.origin
    }

    pub fn total_tokens(&self) -> usize {
        self.flat_labels.len()
    }

    pub fn dim(&self) -> usize {
        self.flat_embeddings.cols()
    }

    pub fn label_sequences(&self) -> impl Iterator<Item = &[usize]> {
        self.entries.iter().map(|e| e.labels.as_slice())
    }
}

/// Embeds the ranked neighbors `ids` of `d` and flattens them.
pub fn assemble_neighbor_set<T: Real>(
    d: &Dataset,
    ids: &[usize],
    provider: &dyn EmbeddingProvider<T>,
) -> Result<NeighborSet<T>> {
    let mut entries = Vec::with_capacity(ids.len());
    for &id in ids {
        let Some(item) = d.get(id) else {
            return arg(format!("unknown neighbor sentence id {id}"));
        };
        entries.push(NeighborEntry {
            id,
            sentence: item.sentence.clone(),
            labels: item.labels.clone(),
            embeddings: provider.embed(&item.sentence)?,
        });
    }
    NeighborSet::from_entries(entries)
}
