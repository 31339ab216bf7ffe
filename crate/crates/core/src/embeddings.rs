//! Per-token contextual embeddings.
//!
//! Downstream code consumes embeddings only through [`EmbeddingProvider`].
//! Two providers ship with the crate: [`HashEmbedder`], a trainable
//! single-layer embedder over hashed window features, and
//! [`PrecomputedStore`], which serves matrices read from a sidecar file.

use std::borrow::Cow;
use std::collections::{btree_map, BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::Sentence;
use crate::error::{arg, format, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// `T × D` matrix whose row `t` embeds token `t`.
pub type EmbeddingMatrix<T> = Matrix<T>;

pub trait EmbeddingProvider<T: Real>: Send + Sync {
    /// Embedding width.
    fn dim(&self) -> usize;

    /// Identifies the provider snapshot (recorded in persisted indices).
    fn tag(&self) -> String;

    fn embed(&self, sentence: &Sentence) -> Result<EmbeddingMatrix<T>>;

    /// The trainable embedder behind this provider, if any.
    fn as_trainable(&self) -> Option<&HashEmbedder<T>> {
        None
    }
}

/// Arithmetic mean of the token rows.
pub fn embed_sentence<T: Real>(x: &EmbeddingMatrix<T>) -> Result<Vec<T>> {
    if x.rows() == 0 {
        return arg("cannot pool an embedding matrix with no rows");
    }
    let mut mean = vec![T::zero(); x.cols()];
    for row in x.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = T::lit(x.rows() as f64);
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, s: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(s.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn shape_code(token: &str) -> &'static str {
    let mut chars = token.chars();
    let first = chars.next().unwrap_or(' ');
    if token.chars().any(|c| c.is_ascii_digit()) {
        "0"
    } else if token.chars().all(char::is_uppercase) {
        "AA"
    } else if first.is_uppercase() {
        "Aa"
    } else if token.chars().all(char::is_lowercase) {
        "aa"
    } else {
        "?"
    }
}

/// Sorted, deduplicated hashed-feature bucket ids of one token position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSet {
    pub indices: Vec<usize>,
}

/// Hashed window features of token `t`: for each offset in `[-window, window]`
/// the lowercased word, its boundary-padded character 2/3/4-grams and a
/// capitalization shape, each prefixed with the offset.
pub fn token_features(
    sentence: &Sentence,
    t: usize,
    window: usize,
    seed: u64,
    buckets: usize,
) -> Result<FeatureSet> {
    if t >= sentence.len() {
        return arg(format!("token index {t} out of range for length {}", sentence.len()));
    }
    if buckets == 0 {
        return arg("feature bucket count must be positive");
    }
    let mut indices = Vec::new();
    let mut key = String::new();
    let mut push = |key: &str| indices.push((fnv1a(seed, key) % buckets as u64) as usize);
    let lo = t.saturating_sub(window);
    let hi = (t + window).min(sentence.len() - 1);
    for pos in lo..=hi {
        let offset = pos as i64 - t as i64;
        let raw = &sentence.tokens()[pos];
        let lower = raw.to_lowercase();

        key.clear();
        write!(key, "{offset}|w|{lower}").unwrap();
        push(&key);

        let padded: Vec<char> = std::iter::once('^').chain(lower.chars()).chain(std::iter::once('$')).collect();
        for n in 2..=4 {
            for gram in padded.windows(n) {
                key.clear();
                write!(key, "{offset}|c{n}|").unwrap();
                key.extend(gram);
                push(&key);
            }
        }

        key.clear();
        write!(key, "{offset}|s|{}", shape_code(raw)).unwrap();
        push(&key);
    }
    indices.sort_unstable();
    indices.dedup();
    Ok(FeatureSet { indices })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub buckets: usize,
    pub window: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian initialization.
    pub init_std: f64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self { dim: 128, buckets: 1 << 18, window: 2, seed: 0, init_std: 0.1 }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.buckets == 0 {
            return arg("embedding width and bucket count must be positive");
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return arg(format!("initialization std {} is invalid", self.init_std));
        }
        Ok(())
    }
}

/// Column-sparse gradient with respect to the embedder's weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrad<T> {
    pub dim: usize,
    pub columns: BTreeMap<usize, Vec<T>>,
}

impl<T: Real> SparseGrad<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, columns: BTreeMap::new() }
    }

    pub fn column(&self, i: usize) -> Option<&[T]> {
        self.columns.get(&i).map(Vec::as_slice)
    }

    pub fn add_assign(&mut self, other: &SparseGrad<T>) {
        for (&i, col) in &other.columns {
            match self.columns.entry(i) {
                btree_map::Entry::Vacant(e) => {
                    e.insert(col.clone());
                }
                btree_map::Entry::Occupied(mut e) => {
                    for (a, &b) in e.get_mut().iter_mut().zip(col) {
                        *a += b;
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for col in self.columns.values_mut() {
            col.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Trainable embedder: row `t` is `tanh(Σ_{i ∈ features(t)} W[:, i])`.
///
/// `W` is `dim × buckets` and conceptually dense. Each column starts as a
/// seeded Gaussian draw that can be regenerated at any time, so only the
/// columns changed by training need storing. Columns are materialized on
/// demand; [`HashEmbedder::prepare`] caches those a corpus needs.
#[derive(Debug, Clone)]
pub struct HashEmbedder<T> {
    config: EmbedderConfig,
    columns: HashMap<usize, Vec<T>>,
    touched: BTreeSet<usize>,
}

impl<T: Real> PartialEq for HashEmbedder<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.touched == other.touched
            && self.touched.iter().all(|i| self.columns.get(i) == other.columns.get(i))
    }
}

impl<T: Real> HashEmbedder<T> {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, columns: HashMap::new(), touched: BTreeSet::new() })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    /// The seeded initial value of column `i`.
    pub fn initial_column(&self, i: usize) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(i as u64);
        if self.config.init_std == 0.0 {
            return vec![T::zero(); self.config.dim];
        }
        let normal = Normal::new(0.0, self.config.init_std).expect("validated std");
        (0..self.config.dim).map(|_| T::lit(normal.sample(&mut rng))).collect()
    }

    pub fn column(&self, i: usize) -> Cow<'_, [T]> {
        match self.columns.get(&i) {
            Some(c) => Cow::Borrowed(c),
            None => Cow::Owned(self.initial_column(i)),
        }
    }

    /// Mutable access; marks the column as modified.
    pub fn column_mut(&mut self, i: usize) -> &mut [T] {
        self.touched.insert(i);
        if !self.columns.contains_key(&i) {
            let init = self.initial_column(i);
            self.columns.insert(i, init);
        }
        self.columns.get_mut(&i).unwrap()
    }

    pub fn set_column(&mut self, i: usize, values: Vec<T>) -> Result<()> {
        if i >= self.config.buckets || values.len() != self.config.dim {
            return arg(format!("column {i} with {} values does not fit the parameter shape", values.len()));
        }
        self.touched.insert(i);
        self.columns.insert(i, values);
        Ok(())
    }

    /// Columns that differ from their seeded initialization (in ascending order).
    pub fn touched_columns(&self) -> impl Iterator<Item = (usize, &[T])> {
        self.touched.iter().map(|&i| (i, self.columns[&i].as_slice()))
    }

    pub fn features(&self, sentence: &Sentence, t: usize) -> Result<FeatureSet> {
        token_features(sentence, t, self.config.window, self.config.seed, self.config.buckets)
    }

    /// Materializes every column the given sentences activate.
    pub fn prepare<'a>(&mut self, sentences: impl IntoIterator<Item = &'a Sentence>) {
        for s in sentences {
            for t in 0..s.len() {
                let feats = self.features(s, t).expect("index in range");
                for i in feats.indices {
                    if !self.columns.contains_key(&i) {
                        let init = self.initial_column(i);
                        self.columns.insert(i, init);
                    }
                }
            }
        }
    }

    pub fn embed_tokens(&self, sentence: &Sentence) -> EmbeddingMatrix<T> {
        let dim = self.config.dim;
        let mut x = Matrix::zeros(sentence.len(), dim);
        for t in 0..sentence.len() {
            let feats = self.features(sentence, t).expect("index in range");
            let row: &mut [T] = x.row_mut(t);
            for i in feats.indices {
                for (r, &w) in row.iter_mut().zip(self.column(i).iter()) {
                    *r += w;
                }
            }
            row.iter_mut().for_each(|v| *v = v.tanh());
        }
        x
    }

    /// Gradient of a loss with respect to `W`, given the embedder output `x`
    /// and `dL/dx`. Only columns of active features appear in the result.
    pub fn backprop(
        &self,
        sentence: &Sentence,
        x: &EmbeddingMatrix<T>,
        dl_dx: &Matrix<T>,
    ) -> Result<SparseGrad<T>> {
        let dim = self.config.dim;
        if dl_dx.rows() != sentence.len() || dl_dx.cols() != dim || x.rows() != sentence.len() || x.cols() != dim {
            return arg(format!(
                "gradient shape {}x{} does not match sentence length {} and width {dim}",
                dl_dx.rows(),
                dl_dx.cols(),
                sentence.len()
            ));
        }
        let mut grad = SparseGrad::new(dim);
        for t in 0..sentence.len() {
            let local: Vec<T> = dl_dx
                .row(t)
                .iter()
                .zip(x.row(t))
                .map(|(&g, &v)| g * (T::one() - v * v))
                .collect();
            for i in self.features(sentence, t)?.indices {
                let col = grad.columns.entry(i).or_insert_with(|| vec![T::zero(); dim]);
                for (c, &l) in col.iter_mut().zip(&local) {
                    *c += l;
                }
            }
        }
        Ok(grad)
    }

    fn snapshot_digest(&self) -> u64 {
        let mut h = FNV_OFFSET;
        for (i, col) in self.touched_columns() {
            let mut mix = |b: u64| {
                h ^= b;
                h = h.wrapping_mul(FNV_PRIME);
            };
            mix(i as u64);
            for &v in col {
                mix(v.as_f64().to_bits());
            }
        }
        h
    }
}

impl<T: Real> EmbeddingProvider<T> for HashEmbedder<T> {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn tag(&self) -> String {
        let c = &self.config;
        format!(
            "hash-d{}-f{}-w{}-s{}-{:016x}",
            c.dim,
            c.buckets,
            c.window,
            c.seed,
            self.snapshot_digest()
        )
    }

    fn embed(&self, sentence: &Sentence) -> Result<EmbeddingMatrix<T>> {
        Ok(self.embed_tokens(sentence))
    }

    fn as_trainable(&self) -> Option<&HashEmbedder<T>> {
        Some(self)
    }
}

/// Externally produced embeddings keyed by sentence id.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedStore<T> {
    dim: usize,
    entries: BTreeMap<usize, (Vec<String>, EmbeddingMatrix<T>)>,
}

impl<T: Real> PrecomputedStore<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: usize, tokens: Vec<String>, x: EmbeddingMatrix<T>) -> Result<()> {
        if x.cols() != self.dim || x.rows() != tokens.len() {
            return arg(format!("sentence {id}: matrix {}x{} does not fit {} tokens of width {}", x.rows(), x.cols(), tokens.len(), self.dim));
        }
        if !x.is_finite() {
            return arg(format!("sentence {id}: non-finite embedding value"));
        }
        if self.entries.contains_key(&id) {
            return format(format!("duplicate sentence id {id}"));
        }
        self.entries.insert(id, (tokens, x));
        Ok(())
    }

    pub fn get(&self, id: usize) -> Option<&EmbeddingMatrix<T>> {
        self.entries.get(&id).map(|(_, x)| x)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T: Real> EmbeddingProvider<T> for PrecomputedStore<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn tag(&self) -> String {
        format!("precomputed-d{}-n{}", self.dim, self.entries.len())
    }

    fn embed(&self, sentence: &Sentence) -> Result<EmbeddingMatrix<T>> {
        let Some((tokens, x)) = self.entries.get(&sentence.id) else {
            return arg(format!("no precomputed embeddings for sentence {}", sentence.id));
        };
        if tokens.as_slice() != sentence.tokens() {
            return arg(format!("precomputed tokens for sentence {} do not match the corpus", sentence.id));
        }
        Ok(x.clone())
    }
}

/// Reads the sidecar format: `#dim D`, then per sentence an `#id N` line
/// followed by `token<TAB>v1 ... vD` rows, blocks separated by blank lines.
pub fn load_precomputed<T: Real>(text: &str) -> Result<PrecomputedStore<T>> {
    let mut lines = text.lines().enumerate();
    let dim = match lines.next() {
        Some((_, header)) => match header.strip_prefix("#dim ").map(|d| d.trim().parse::<usize>()) {
            Some(Ok(d)) if d > 0 => d,
            _ => return format(format!("bad sidecar header {header:?}")),
        },
        None => return format("missing sidecar header"),
    };
    let mut store = PrecomputedStore::new(dim);
    let mut current: Option<(usize, Vec<String>, Vec<T>)> = None;
    let flush = |store: &mut PrecomputedStore<T>, cur: Option<(usize, Vec<String>, Vec<T>)>| -> Result<()> {
        if let Some((id, tokens, values)) = cur {
            if tokens.is_empty() {
                return format(format!("sentence {id} has no rows"));
            }
            let x = Matrix::from_vec(tokens.len(), dim, values)?;
            store.insert(id, tokens, x)?;
        }
        Ok(())
    };
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(id) = line.strip_prefix("#id ") {
            flush(&mut store, current.take())?;
            let id = id.trim().parse().map_err(|_| crate::Error::Format(format!("line {}: bad id {id:?}", n + 1)))?;
            if store.entries.contains_key(&id) {
                return format(format!("line {}: duplicate sentence id {id}", n + 1));
            }
            current = Some((id, Vec::new(), Vec::new()));
            continue;
        }
        let Some((_, tokens, values)) = current.as_mut() else {
            return format(format!("line {}: row before any #id line", n + 1));
        };
        let Some((token, rest)) = line.split_once('\t') else {
            return format(format!("line {}: expected token<TAB>values", n + 1));
        };
        let before = values.len();
        for v in rest.split(' ').filter(|v| !v.is_empty()) {
            let parsed: T = v.parse().map_err(|_| crate::Error::Format(format!("line {}: bad float {v:?}", n + 1)))?;
            values.push(parsed);
        }
        if values.len() - before != dim {
            return format(format!("line {}: {} values, header declares {dim}", n + 1, values.len() - before));
        }
        tokens.push(token.to_string());
    }
    flush(&mut store, current)?;
    Ok(store)
}

pub fn write_precomputed<T: Real>(store: &PrecomputedStore<T>) -> String {
    let mut out = format!("#dim {}\n", store.dim);
    for (i, (id, (tokens, x))) in store.entries.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        writeln!(out, "#id {id}").unwrap();
        for (tok, row) in tokens.iter().zip(x.iter_rows()) {
            out.push_str(tok);
            out.push('\t');
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
    }
    out
}
