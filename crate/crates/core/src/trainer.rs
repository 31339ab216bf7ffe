//! Fine-tuning of the hashed-feature embedder.
//!
//! Each training sentence copies labels from its nearest training
//! neighbors; the loss is the latent-marginal negative log-likelihood.
//! Neighbors are chosen once, with the initial parameters, and their token
//! embeddings are constants within a step: gradients flow only through the
//! input sentence's embeddings.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::copy_model::{copy_logits, copy_posterior, grad_wrt_input, marginal_over_types, nll};
use crate::corpus::{Dataset, LabeledSequence};
use crate::decoder::predict_marginal;
use crate::embeddings::{embed_sentence, EmbedderConfig, EmbeddingMatrix, EmbeddingProvider, HashEmbedder, SparseGrad};
use crate::error::{arg, Error, Result};
use crate::retrieval::{build_index, NeighborEntry, NeighborSet};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &str = "#copytag-ckpt";
pub const CHECKPOINT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefreshPolicy {
    /// Re-embed neighbor tokens with the parameters current at each batch.
    PerBatch,
    /// Re-embed the whole training set once at the start of each epoch.
    PerEpoch,
}

impl RefreshPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            RefreshPolicy::PerBatch => "per-batch",
            RefreshPolicy::PerEpoch => "per-epoch",
        }
    }
}

impl FromStr for RefreshPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-batch" => Ok(RefreshPolicy::PerBatch),
            "per-epoch" => Ok(RefreshPolicy::PerEpoch),
            other => arg(format!("unknown refresh policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Neighbors retrieved per training sentence.
    pub neighbors_train: usize,
    /// Neighbors retrieved per sentence at evaluation time.
    pub neighbors_test: usize,
    /// Seeds the shuffling generator.
    pub seed: u64,
    pub refresh: RefreshPolicy,
    /// Exclude a training sentence from its own neighbors.
    pub exclude_self: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 5,
            neighbors_train: 50,
            neighbors_test: 100,
            seed: 0,
            refresh: RefreshPolicy::PerBatch,
            exclude_self: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.neighbors_train == 0 || self.neighbors_test == 0 {
            return arg("batch size and neighbor counts must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return arg(format!("learning rate {} must be positive", self.learning_rate));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments for the parameter columns that have received gradient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    first: HashMap<usize, Vec<T>>,
    second: HashMap<usize, Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new() -> Self {
        Self { step: 0, first: HashMap::new(), second: HashMap::new() }
    }

    pub fn moments(&self, column: usize) -> Option<(&[T], &[T])> {
        Some((self.first.get(&column)?.as_slice(), self.second.get(&column)?.as_slice()))
    }
}

/// One bias-corrected Adam step on a slice; `step` is 1-based.
pub fn adam_step<T: Real>(param: &mut [T], grad: &[T], first: &mut [T], second: &mut [T], step: u64, lr: T, hp: AdamHyper) {
    let (b1, b2, eps) = (T::lit(hp.beta1), T::lit(hp.beta2), T::lit(hp.eps));
    let c1 = T::one() - b1.powi(step as i32);
    let c2 = T::one() - b2.powi(step as i32);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(first.iter_mut()).zip(second.iter_mut()) {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies Adam to every column with a nonzero gradient. The step counter
/// advances even when the gradient is entirely zero.
pub fn adam_update<T: Real>(
    params: &mut HashEmbedder<T>,
    grads: &SparseGrad<T>,
    state: &mut AdamState<T>,
    lr: T,
    hp: AdamHyper,
) -> Result<()> {
    if let Some((&column, _)) = grads.columns.iter().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteGradient { column });
    }
    state.step += 1;
    let dim = params.config().dim;
    for (&i, g) in &grads.columns {
        if g.iter().all(|v| *v == T::zero()) {
            continue;
        }
        let m = state.first.entry(i).or_insert_with(|| vec![T::zero(); dim]);
        let v = state.second.entry(i).or_insert_with(|| vec![T::zero(); dim]);
        adam_step(params.column_mut(i), g, m, v, state.step, lr, hp);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean negative log-likelihood per scored token.
    pub mean_nll: f64,
    pub skipped_tokens: usize,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Real> {
    pub embedder: HashEmbedder<T>,
    pub config: TrainConfig,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub nll: f64,
    pub scored_tokens: usize,
    pub skipped_tokens: usize,
}

/// Loss and parameter gradient for one sentence against a fixed neighbor set.
pub fn sentence_gradient<T: Real>(
    params: &HashEmbedder<T>,
    item: &LabeledSequence,
    neighbors: &NeighborSet<T>,
) -> Result<(BatchStats, SparseGrad<T>)> {
    let x = params.embed_tokens(&item.sentence);
    let post = copy_posterior(&copy_logits(&x, neighbors)?)?;
    let loss = nll(&post, neighbors, &item.labels)?;
    let dx = grad_wrt_input(&post, neighbors, &item.labels)?;
    let grad = params.backprop(&item.sentence, &x, &dx)?;
    let stats = BatchStats { nll: loss.nll.as_f64(), scored_tokens: loss.scored_tokens(), skipped_tokens: loss.skipped };
    Ok((stats, grad))
}

/// One optimizer step on the mean gradient of a batch. A `None` neighbor set
/// (no neighbors available) skips every token of that sentence.
pub fn train_batch<T: Real>(
    params: &mut HashEmbedder<T>,
    state: &mut AdamState<T>,
    learning_rate: f64,
    batch: &[(&LabeledSequence, Option<NeighborSet<T>>)],
) -> Result<BatchStats> {
    let mut total = BatchStats::default();
    let mut grad = SparseGrad::new(params.config().dim);
    for (item, neighbors) in batch {
        let Some(ns) = neighbors else {
            total.skipped_tokens += item.len();
            continue;
        };
        let (stats, g) = sentence_gradient(params, item, ns)?;
        total.nll += stats.nll;
        total.scored_tokens += stats.scored_tokens;
        total.skipped_tokens += stats.skipped_tokens;
        grad.add_assign(&g);
    }
    if !batch.is_empty() {
        grad.scale(T::one() / T::lit(batch.len() as f64));
    }
    adam_update(params, &grad, state, T::lit(learning_rate), AdamHyper::default())?;
    Ok(total)
}

fn neighbor_set<T: Real>(
    train: &Dataset,
    ids: &[usize],
    embeddings: &HashMap<usize, EmbeddingMatrix<T>>,
) -> Result<Option<NeighborSet<T>>> {
    if ids.is_empty() {
        return Ok(None);
    }
    let entries = ids
        .iter()
        .map(|&id| {
            let item = &train.items()[id];
            NeighborEntry { id, sentence: item.sentence.clone(), labels: item.labels.clone(), embeddings: embeddings[&id].clone() }
        })
        .collect();
    NeighborSet::from_entries(entries).map(Some)
}

/// Token accuracy of marginal decoding on `eval`, retrieving `m` neighbors
/// from `db`. Labels are compared as strings so vocabularies may differ.
pub fn marginal_accuracy<T: Real>(
    provider: &dyn EmbeddingProvider<T>,
    db: &Dataset,
    eval: &Dataset,
    m: usize,
) -> Result<f64> {
    let index = build_index(db, provider)?;
    let db_embeddings: Vec<EmbeddingMatrix<T>> = db.sentences().map(|s| provider.embed(s)).collect::<Result<_>>()?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for item in eval.items() {
        let x = provider.embed(&item.sentence)?;
        let hits = index.query(&embed_sentence(&x)?, m, &HashSet::new())?;
        let entries = hits
            .iter()
            .map(|&(id, _)| {
                let d = &db.items()[id];
                NeighborEntry { id, sentence: d.sentence.clone(), labels: d.labels.clone(), embeddings: db_embeddings[id].clone() }
            })
            .collect();
        let ns = NeighborSet::from_entries(entries)?;
        let mm = marginal_over_types(&copy_posterior(&copy_logits(&x, &ns)?)?, &ns)?;
        for (p, &g) in predict_marginal(&mm).into_iter().zip(&item.labels) {
            correct += usize::from(db.vocab().label(p) == eval.vocab().label(g));
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

/// Fine-tunes a copy of the provider's trainable embedder on `train`.
pub fn fine_tune<T: Real>(
    cfg: &TrainConfig,
    train: &Dataset,
    dev: Option<&Dataset>,
    provider: &dyn EmbeddingProvider<T>,
) -> Result<Checkpoint<T>> {
    cfg.validate()?;
    let Some(initial) = provider.as_trainable() else {
        return arg("the embedding provider is not trainable");
    };
    if train.is_empty() {
        return arg("training set is empty");
    }
    if train.vocab().is_empty() {
        return arg("training vocabulary is empty");
    }
    let mut params = initial.clone();
    params.prepare(train.sentences().chain(dev.into_iter().flat_map(Dataset::sentences)));
    let mut checkpoint = Checkpoint { embedder: params.clone(), config: cfg.clone(), log: Vec::new() };
    if cfg.epochs == 0 {
        return Ok(checkpoint);
    }

    // Neighbors are fixed by the initial parameters.
    let index = build_index(train, &params)?;
    let mut neighbor_ids = Vec::with_capacity(train.len());
    for item in train.items() {
        let q = embed_sentence(&params.embed_tokens(&item.sentence))?;
        let exclude: HashSet<usize> = if cfg.exclude_self { [item.sentence.id].into() } else { HashSet::new() };
        let hits = index.query(&q, cfg.neighbors_train, &exclude)?;
        neighbor_ids.push(hits.into_iter().map(|(id, _)| id).collect::<Vec<_>>());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut cache: HashMap<usize, EmbeddingMatrix<T>> = HashMap::new();
        if cfg.refresh == RefreshPolicy::PerEpoch {
            for s in train.sentences() {
                cache.insert(s.id, params.embed_tokens(s));
            }
        }
        let mut epoch_stats = BatchStats::default();
        for chunk in order.chunks(cfg.batch_size) {
            // gradients accumulate in sentence order, whatever the shuffle
            let mut chunk = chunk.to_vec();
            chunk.sort_unstable();
            if cfg.refresh == RefreshPolicy::PerBatch {
                cache.clear();
                for &i in &chunk {
                    for &id in &neighbor_ids[i] {
                        cache.entry(id).or_insert_with(|| params.embed_tokens(&train.items()[id].sentence));
                    }
                }
            }
            let batch = chunk
                .iter()
                .map(|&i| Ok((&train.items()[i], neighbor_set(train, &neighbor_ids[i], &cache)?)))
                .collect::<Result<Vec<_>>>()?;
            let stats = train_batch(&mut params, &mut state, cfg.learning_rate, &batch)?;
            epoch_stats.nll += stats.nll;
            epoch_stats.scored_tokens += stats.scored_tokens;
            epoch_stats.skipped_tokens += stats.skipped_tokens;
        }
        let dev_accuracy = match dev {
            Some(d) if !d.is_empty() => Some(marginal_accuracy(&params, train, d, cfg.neighbors_test)?),
            _ => None,
        };
        let mean_nll = if epoch_stats.scored_tokens == 0 { 0.0 } else { epoch_stats.nll / epoch_stats.scored_tokens as f64 };
        log::info!(
            "epoch {epoch}: mean nll {mean_nll:.5}, skipped tokens {}, dev accuracy {dev_accuracy:?}",
            epoch_stats.skipped_tokens
        );
        checkpoint.log.push(EpochLog { epoch, mean_nll, skipped_tokens: epoch_stats.skipped_tokens, dev_accuracy });
    }
    checkpoint.embedder = params;
    Ok(checkpoint)
}

impl<T: Real> Checkpoint<T> {
    /// Text serialization; only columns changed by training are written,
    /// the rest are regenerated from the seed on load.
    pub fn to_text(&self) -> String {
        let e = self.embedder.config();
        let c = &self.config;
        let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        let touched: Vec<(usize, &[T])> = self.embedder.touched_columns().collect();
        let pairs: [(&str, String); 14] = [
            ("embed_dim", e.dim.to_string()),
            ("buckets", e.buckets.to_string()),
            ("window", e.window.to_string()),
            ("hash_seed", e.seed.to_string()),
            ("init_std", e.init_std.to_string()),
            ("learning_rate", c.learning_rate.to_string()),
            ("batch_size", c.batch_size.to_string()),
            ("epochs", c.epochs.to_string()),
            ("neighbors_train", c.neighbors_train.to_string()),
            ("neighbors_test", c.neighbors_test.to_string()),
            ("seed", c.seed.to_string()),
            ("refresh", c.refresh.as_str().to_string()),
            ("exclude_self", c.exclude_self.to_string()),
            ("columns", touched.len().to_string()),
        ];
        for (k, v) in pairs {
            writeln!(out, "{k}={v}").unwrap();
        }
        for l in &self.log {
            let dev = l.dev_accuracy.map_or("-".to_string(), |a| a.to_string());
            writeln!(out, "log={} {} {} {dev}", l.epoch, l.mean_nll, l.skipped_tokens).unwrap();
        }
        writeln!(out, "#params {} {}", e.dim, e.buckets).unwrap();
        for (i, col) in touched {
            write!(out, "col {i}").unwrap();
            for v in col {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Format(msg);
        let mut lines = text.lines().enumerate();
        match lines.next().map(|(_, l)| l.split_once(' ')) {
            Some(Some((CHECKPOINT_MAGIC, CHECKPOINT_VERSION))) => {}
            Some(Some((CHECKPOINT_MAGIC, v))) => return Err(Error::Version(format!("checkpoint version {v}"))),
            _ => return Err(Error::Version("not a copytag checkpoint".into())),
        }
        let mut kv: HashMap<String, String> = HashMap::new();
        let mut log = Vec::new();
        let mut params_header = None;
        for (n, line) in lines.by_ref() {
            if let Some(rest) = line.strip_prefix("#params ") {
                params_header = Some(rest.to_string());
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("line {}: expected key=value", n + 1)))?;
            if k == "log" {
                let f: Vec<&str> = v.split(' ').collect();
                if f.len() != 4 {
                    return Err(bad(format!("line {}: malformed log entry", n + 1)));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("line {}: bad number {s:?}", n + 1)));
                log.push(EpochLog {
                    epoch: f[0].parse().map_err(|_| bad(format!("line {}: bad epoch", n + 1)))?,
                    mean_nll: num(f[1])?,
                    skipped_tokens: f[2].parse().map_err(|_| bad(format!("line {}: bad count", n + 1)))?,
                    dev_accuracy: if f[3] == "-" { None } else { Some(num(f[3])?) },
                });
            } else {
                kv.insert(k.to_string(), v.to_string());
            }
        }
        fn get<V: FromStr>(kv: &HashMap<String, String>, key: &str) -> Result<V> {
            kv.get(key)
                .ok_or_else(|| Error::Format(format!("checkpoint is missing {key}")))?
                .parse()
                .map_err(|_| Error::Format(format!("checkpoint has a bad value for {key}")))
        }
        let embed = EmbedderConfig {
            dim: get(&kv, "embed_dim")?,
            buckets: get(&kv, "buckets")?,
            window: get(&kv, "window")?,
            seed: get(&kv, "hash_seed")?,
            init_std: get(&kv, "init_std")?,
        };
        let config = TrainConfig {
            learning_rate: get(&kv, "learning_rate")?,
            batch_size: get(&kv, "batch_size")?,
            epochs: get(&kv, "epochs")?,
            neighbors_train: get(&kv, "neighbors_train")?,
            neighbors_test: get(&kv, "neighbors_test")?,
            seed: get(&kv, "seed")?,
            refresh: kv.get("refresh").ok_or_else(|| bad("checkpoint is missing refresh".into()))?.parse()?,
            exclude_self: get(&kv, "exclude_self")?,
        };
        let expected_columns: usize = get(&kv, "columns")?;
        let header = params_header.ok_or_else(|| bad("truncated checkpoint: missing #params".into()))?;
        if header != format!("{} {}", embed.dim, embed.buckets) {
            return Err(bad(format!("#params {header} disagrees with the configuration")));
        }
        let mut embedder = HashEmbedder::new(embed)?;
        let mut seen = 0;
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut f = line.split(' ');
            let (Some("col"), Some(i)) = (f.next(), f.next()) else {
                return Err(bad(format!("line {}: expected a column line", n + 1)));
            };
            let i: usize = i.parse().map_err(|_| bad(format!("line {}: bad column index", n + 1)))?;
            let values = f
                .map(|v| v.parse::<T>().map_err(|_| bad(format!("line {}: bad float {v:?}", n + 1))))
                .collect::<Result<Vec<T>>>()?;
            if values.len() != embedder.config().dim {
                return Err(bad(format!("line {}: truncated column {i}", n + 1)));
            }
            embedder.set_column(i, values)?;
            seen += 1;
        }
        if seen != expected_columns {
            return Err(bad(format!("truncated checkpoint: {seen} of {expected_columns} columns")));
        }
        Ok(Self { embedder, config, log })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_only_advances_step() {
        let mut e: HashEmbedder<f64> = HashEmbedder::new(EmbedderConfig { dim: 2, buckets: 8, window: 0, seed: 1, init_std: 0.1 }).unwrap();
        let before = e.column(3).into_owned();
        let mut g = SparseGrad::new(2);
        g.columns.insert(3, vec![0.0, 0.0]);
        let mut st = AdamState::new();
        adam_update(&mut e, &g, &mut st, 1e-3, AdamHyper::default()).unwrap();
        assert_eq!(st.step, 1);
        assert_eq!(e.column(3).into_owned(), before);
        assert_eq!(e.touched_columns().count(), 0);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        for g in [3.7, -0.02, 1e-3] {
            let (mut p, mut m, mut v) = ([0.5f64], [0.0], [0.0]);
            adam_step(&mut p, &[g], &mut m, &mut v, 1, 1e-3, AdamHyper::default());
            assert!((p[0] - 0.5 + 1e-3 * g.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_two_steps_match_scalar_reference() {
        // textbook scalar reference, written independently of adam_step
        fn reference(mut theta: f64, g: f64, steps: i32) -> f64 {
            let (mut m, mut v) = (0.0, 0.0);
            for t in 1..=steps {
                m = 0.9 * m + 0.1 * g;
                v = 0.999 * v + 0.001 * g * g;
                let mh = m / (1.0 - 0.9f64.powi(t));
                let vh = v / (1.0 - 0.999f64.powi(t));
                theta -= 0.01 * mh / (vh.sqrt() + 1e-8);
            }
            theta
        }
        let (mut p, mut m, mut v) = ([1.0f64], [0.0], [0.0]);
        for step in 1..=2 {
            adam_step(&mut p, &[0.25], &mut m, &mut v, step, 0.01, AdamHyper::default());
        }
        assert!((p[0] - reference(1.0, 0.25, 2)).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut e: HashEmbedder<f64> = HashEmbedder::new(EmbedderConfig { dim: 2, buckets: 8, window: 0, seed: 1, init_std: 0.1 }).unwrap();
        let mut g = SparseGrad::new(2);
        g.columns.insert(5, vec![0.0, f64::NAN]);
        let err = adam_update(&mut e, &g, &mut AdamState::new(), 1e-3, AdamHyper::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { column: 5 }));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!("per-epoch".parse::<RefreshPolicy>().unwrap(), RefreshPolicy::PerEpoch);
        assert!("sometimes".parse::<RefreshPolicy>().is_err());
    }

    #[test]
    fn checkpoint_rejects_bad_headers() {
        assert!(matches!(Checkpoint::<f64>::from_text("#other v1\n"), Err(Error::Version(_))));
        assert!(matches!(Checkpoint::<f64>::from_text("#copytag-ckpt v9\n"), Err(Error::Version(_))));
        assert!(matches!(Checkpoint::<f64>::from_text(""), Err(Error::Version(_))));
    }
}
