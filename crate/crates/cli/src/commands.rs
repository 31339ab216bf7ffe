use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use copytag::corpus::{parse_conll, parse_sentences, write_conll, ConllLayout, Dataset, Sentence};
use copytag::decoder::{build_segment_dict, dp_decode_expected, format_provenance, DPConfig};
use copytag::embeddings::{load_precomputed, EmbedderConfig, EmbeddingProvider, HashEmbedder, PrecomputedStore};
use copytag::evaluation::{both_bio, span_f1, sweep_c, sweep_csv, token_accuracy};
use copytag::pipeline::{Decode, Tagger};
use copytag::retrieval::{build_index, NeighborIndex};
use copytag::trainer::{fine_tune, Checkpoint, RefreshPolicy, TrainConfig};

use crate::args::*;
use crate::output::{write_with_manifest, RunManifest};

impl LayoutArgs {
    fn layout(&self) -> Result<ConllLayout> {
        Ok(ConllLayout::from_indices(self.token_col, self.tag_col)?)
    }

    fn record(&self, m: &mut RunManifest) {
        m.set("token_col", self.token_col).set("tag_col", self.tag_col);
    }
}

impl EmbedderArgs {
    fn config(&self) -> EmbedderConfig {
        EmbedderConfig {
            dim: self.dim,
            buckets: self.buckets,
            window: self.window,
            seed: self.hash_seed,
            init_std: self.init_std,
        }
    }

    fn record(&self, m: &mut RunManifest) {
        m.set("embed_dim", self.dim)
            .set("buckets", self.buckets)
            .set("window", self.window)
            .set("hash_seed", self.hash_seed)
            .set("init_std", self.init_std);
    }
}

fn load_dataset(path: &Path, layout: ConllLayout, m: &mut RunManifest) -> Result<Dataset> {
    let text = m.read_input(path)?;
    parse_conll(&text, layout).with_context(|| format!("parsing {}", path.display()))
}

fn load_sentences(path: &Path, token_col: usize, m: &mut RunManifest) -> Result<Vec<Sentence>> {
    let text = m.read_input(path)?;
    parse_sentences(&text, token_col).with_context(|| format!("parsing {}", path.display()))
}

/// The trainable embedder from a checkpoint, or a fresh one.
fn hash_embedder(ckpt: Option<&Path>, embedder: &EmbedderArgs, m: &mut RunManifest) -> Result<HashEmbedder<f64>> {
    match ckpt {
        Some(path) => {
            m.set("ckpt", path.display());
            let text = m.read_input(path)?;
            Ok(Checkpoint::<f64>::from_text(&text).with_context(|| format!("loading {}", path.display()))?.embedder)
        }
        None => {
            m.set("ckpt", "none");
            embedder.record(m);
            Ok(HashEmbedder::new(embedder.config())?)
        }
    }
}

fn load_store(path: &Path, m: &mut RunManifest) -> Result<PrecomputedStore<f64>> {
    let text = m.read_input(path)?;
    load_precomputed(&text).with_context(|| format!("loading {}", path.display()))
}

enum Providers {
    Hash(HashEmbedder<f64>),
    Precomputed { db: PrecomputedStore<f64>, input: PrecomputedStore<f64> },
}

impl Providers {
    fn resolve<'s>(
        args: &ProviderArgs,
        db: &'s Dataset,
        inputs: impl IntoIterator<Item = &'s Sentence>,
        m: &mut RunManifest,
    ) -> Result<Self> {
        match (&args.db_emb, &args.input_emb) {
            (Some(d), Some(i)) => {
                m.set("db_emb", d.display()).set("input_emb", i.display());
                Ok(Providers::Precomputed { db: load_store(d, m)?, input: load_store(i, m)? })
            }
            _ => {
                let mut e = hash_embedder(args.ckpt.as_deref(), &args.embedder, m)?;
                e.prepare(db.sentences().chain(inputs));
                Ok(Providers::Hash(e))
            }
        }
    }

    fn db(&self) -> &dyn EmbeddingProvider<f64> {
        match self {
            Providers::Hash(e) => e,
            Providers::Precomputed { db, .. } => db,
        }
    }

    fn query(&self) -> &dyn EmbeddingProvider<f64> {
        match self {
            Providers::Hash(e) => e,
            Providers::Precomputed { input, .. } => input,
        }
    }
}

pub fn build_index_cmd(a: &BuildIndexArgs) -> Result<()> {
    let mut m = RunManifest::new("build-index");
    a.layout.record(&mut m);
    let db = load_dataset(&a.data, a.layout.layout()?, &mut m)?;
    let index = match &a.emb {
        Some(path) => {
            m.set("emb", path.display());
            build_index(&db, &load_store(path, &mut m)?)?
        }
        None => {
            let mut e = hash_embedder(a.ckpt.as_deref(), &a.embedder, &mut m)?;
            e.prepare(db.sentences());
            build_index(&db, &e)?
        }
    };
    write_with_manifest(&a.out, index.to_text(), &m)
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let mut m = RunManifest::new("train");
    let layout = a.layout.layout()?;
    a.layout.record(&mut m);
    let train = load_dataset(&a.data, layout, &mut m)?;
    let dev = a.dev.as_deref().map(|p| load_dataset(p, layout, &mut m)).transpose()?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        neighbors_train: a.neighbors,
        neighbors_test: a.test_neighbors,
        seed: a.seed,
        refresh: match a.refresh {
            Refresh::PerBatch => RefreshPolicy::PerBatch,
            Refresh::PerEpoch => RefreshPolicy::PerEpoch,
        },
        exclude_self: !a.include_self,
    };
    cfg.validate()?;
    a.embedder.record(&mut m);
    m.set("learning_rate", cfg.learning_rate)
        .set("batch_size", cfg.batch_size)
        .set("epochs", cfg.epochs)
        .set("neighbors_train", cfg.neighbors_train)
        .set("neighbors_test", cfg.neighbors_test)
        .set("seed", cfg.seed)
        .set("refresh", cfg.refresh.as_str())
        .set("exclude_self", cfg.exclude_self);
    let embedder = HashEmbedder::<f64>::new(a.embedder.config())?;
    let ckpt = fine_tune(&cfg, &train, dev.as_ref(), &embedder)?;
    for l in &ckpt.log {
        let dev = l.dev_accuracy.map_or(String::new(), |d| format!(" dev_accuracy {d:.4}"));
        eprintln!("epoch {} mean_nll {:.5} skipped {}{dev}", l.epoch, l.mean_nll, l.skipped_tokens);
    }
    write_with_manifest(&a.out, ckpt.to_text(), &m)
}

pub fn tag_cmd(a: &TagArgs) -> Result<()> {
    let mut m = RunManifest::new("tag");
    let layout = a.layout.layout()?;
    a.layout.record(&mut m);
    let db = load_dataset(&a.db, layout, &mut m)?;
    let inputs = load_sentences(&a.input, a.layout.token_col, &mut m)?;
    let providers = Providers::resolve(&a.provider, &db, &inputs, &mut m)?;
    m.set("neighbors", a.neighbors).set("decode", format!("{:?}", a.decode).to_lowercase());
    let how = match a.decode {
        DecodeMode::Marginal => Decode::Marginal,
        DecodeMode::Dp => {
            m.set("c", a.c).set("l_max", a.l_max);
            Decode::Segments(DPConfig { c: a.c, l_max: a.l_max, prune: true })
        }
    };
    let mut tagger = Tagger::with_providers(&db, providers.db(), providers.query(), a.neighbors)?;
    if let Some(path) = &a.index {
        m.set("index", path.display());
        let index = NeighborIndex::from_text(&m.read_input(path)?).with_context(|| format!("loading {}", path.display()))?;
        if index.provider_tag() != providers.db().tag() {
            bail!(
                "index {} was built with provider {} but the database is embedded by {}",
                path.display(),
                index.provider_tag(),
                providers.db().tag()
            );
        }
        tagger = tagger.with_index(index)?;
    }
    let mut rows = Vec::with_capacity(inputs.len());
    let mut explain = String::new();
    for s in &inputs {
        let analysis = tagger.analyze(s)?;
        let r = tagger.decode(&analysis, &how)?;
        if a.explain {
            let ids: Vec<String> = analysis.neighbors.iter().map(|(id, _)| id.to_string()).collect();
            writeln!(explain, "# sentence {} neighbors={}", s.id, ids.join(",")).unwrap();
            explain.push_str(&format_provenance(&r, db.vocab()));
        }
        let labels: Vec<String> = r.labels.iter().map(|&l| db.vocab().label(l).to_string()).collect();
        rows.push((s.tokens().to_vec(), labels));
    }
    let pred = Dataset::from_labeled(rows)?;
    write_with_manifest(&a.out, write_conll(&pred, ConllLayout::default()), &m)?;
    if a.explain {
        print!("{explain}");
    }
    Ok(())
}

pub fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let mut m = RunManifest::new("eval");
    let layout = a.layout.layout()?;
    a.layout.record(&mut m);
    m.set("spans", a.spans);
    let pred = load_dataset(&a.pred, layout, &mut m)?;
    let gold = load_dataset(&a.gold, layout, &mut m)?;
    let mut report = format!("token_accuracy {:.4}\n", token_accuracy(&pred, &gold)?);
    if a.spans && !both_bio(&pred, &gold) {
        bail!("--spans needs BIO labels in both files");
    }
    if both_bio(&pred, &gold) {
        let s = span_f1(&pred, &gold)?;
        writeln!(report, "precision {:.4}\nrecall {:.4}\nf1 {:.4}", s.precision, s.recall, s.f1).unwrap();
    }
    if let Some(path) = &a.report {
        write_with_manifest(path, report.clone(), &m)?;
    }
    print!("{report}");
    Ok(())
}

pub fn sweep_cmd(a: &SweepArgs) -> Result<()> {
    let mut m = RunManifest::new("sweep");
    let layout = a.layout.layout()?;
    a.layout.record(&mut m);
    let db = load_dataset(&a.db, layout, &mut m)?;
    let data = load_dataset(&a.data, layout, &mut m)?;
    let mut e = hash_embedder(a.ckpt.as_deref(), &a.embedder, &mut m)?;
    e.prepare(db.sentences().chain(data.sentences()));
    m.set("c_grid", &a.c_grid).set("neighbors", a.neighbors).set("l_max", a.l_max);
    let tagger = Tagger::new(&db, &e, a.neighbors)?;
    let rows = sweep_c(&a.c_grid.0, &tagger, &data, a.l_max)?;
    write_with_manifest(&a.out, sweep_csv(&rows), &m)
}

pub fn inspect_cmd(a: &InspectArgs) -> Result<()> {
    let mut m = RunManifest::new("inspect");
    let layout = a.layout.layout()?;
    let db = load_dataset(&a.db, layout, &mut m)?;
    let inputs = load_sentences(&a.input, a.layout.token_col, &mut m)?;
    let Some(sentence) = inputs.get(a.sentence_id) else {
        bail!("{} has {} sentences; --sentence-id {} is out of range", a.input.display(), inputs.len(), a.sentence_id);
    };
    let providers = Providers::resolve(&a.provider, &db, std::iter::once(sentence), &mut m)?;
    let tagger = Tagger::with_providers(&db, providers.db(), providers.query(), a.neighbors)?;
    let an = tagger.analyze(sentence)?;
    let vocab = db.vocab();
    let mut out = format!("sentence {}: {}\n", sentence.id, sentence.tokens().join(" "));
    let ns: Vec<String> = an.neighbors.iter().map(|(id, cos)| format!("{id}({cos:.4})")).collect();
    writeln!(out, "neighbors {}", ns.join(" ")).unwrap();
    let marginal = tagger.decode(&an, &Decode::Marginal)?;
    for (t, tok) in sentence.tokens().iter().enumerate() {
        let label = marginal.labels[t];
        writeln!(out, "token {t} {tok} -> {} p={:.4}", vocab.label(label), an.marginals.prob(t, label)).unwrap();
        let mut order: Vec<usize> = (0..an.set.total_tokens()).collect();
        order.sort_by(|&i, &j| an.posterior.prob(t, j).total_cmp(&an.posterior.prob(t, i)).then(i.cmp(&j)));
        for &i in order.iter().take(a.top) {
            let (nb, k) = an.set.origin()[i];
            let entry = &an.set.entries()[nb];
            writeln!(
                out,
                "  copy neighbor:{nb} db:{} offset:{k} token={} label={} p={:.4}",
                entry.id,
                entry.sentence.tokens()[k],
                vocab.label(an.set.flat_labels()[i]),
                an.posterior.prob(t, i)
            )
            .unwrap();
        }
    }
    let dict = build_segment_dict(&an.set, copytag::decoder::DEFAULT_MAX_SEGMENT);
    let segs = dp_decode_expected(&an.marginals, &dict, &DPConfig::new(a.c))?;
    writeln!(out, "segments c={} objective={:.4}", a.c, segs.objective).unwrap();
    out.push_str(&format_provenance(&segs, vocab));
    print!("{out}");
    Ok(())
}
