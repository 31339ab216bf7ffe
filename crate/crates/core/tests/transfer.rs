use copytag::corpus::Dataset;
use copytag::decoder::DPConfig;
use copytag::embeddings::{EmbedderConfig, HashEmbedder};
use copytag::evaluation::{evaluate, predictions_dataset, zero_shot_eval};
use copytag::pipeline::{Decode, Tagger};
use copytag::synth::{coarsen_bio, ner_corpus, split, suffix_corpus};
use copytag::trainer::{fine_tune, TrainConfig};

fn embedder() -> HashEmbedder<f64> {
    HashEmbedder::new(EmbedderConfig { dim: 32, buckets: 1 << 14, window: 1, ..Default::default() }).unwrap()
}

#[test]
fn single_label_database_predicts_that_label() {
    let eval = suffix_corpus(10, 4).unwrap();
    let db = Dataset::from_labeled(vec![(vec!["anything", "goes"], vec!["ONLY", "ONLY"])]).unwrap();
    let e = embedder();
    for how in [Decode::Marginal, Decode::Segments(DPConfig::new(0.4))] {
        let tagger = Tagger::new(&db, &e, 5).unwrap();
        for labels in tagger.tag_all(eval.sentences(), &how).unwrap() {
            assert!(labels.iter().all(|l| l == "ONLY"));
        }
        let report = zero_shot_eval(&embedder(), &db, &eval, 5, &how).unwrap();
        assert_eq!(report.token_accuracy, 0.0);
    }
    let empty = Dataset::from_labeled(Vec::<(Vec<String>, Vec<String>)>::new()).unwrap();
    assert!(zero_shot_eval(&embedder(), &empty, &eval, 5, &Decode::Marginal).is_err());
}

#[test]
fn zero_shot_matches_tagging_with_the_new_database() {
    let (train, dev) = split(&ner_corpus(60, 8).unwrap(), 45).unwrap();
    let how = Decode::Segments(DPConfig::new(0.5));
    let report = zero_shot_eval(&embedder(), &train, &dev, 20, &how).unwrap();
    let e = embedder();
    let labels = Tagger::new(&train, &e, 20).unwrap().tag_all(dev.sentences(), &how).unwrap();
    let direct = evaluate(&predictions_dataset(&dev, labels).unwrap(), &dev).unwrap();
    assert_eq!(report.token_accuracy, direct.token_accuracy);
    assert_eq!(report.spans, direct.spans);
    assert!(report.avg_segments.unwrap() >= 1.0);
}

/// Fine-tune on coarse entity tags, then tag with a fine-grained database
/// the model never trained on.
#[test]
fn coarse_training_transfers_to_fine_labels() {
    let (train, dev) = split(&ner_corpus(300, 21).unwrap(), 240).unwrap();
    let coarse = coarsen_bio(&train).unwrap();
    let cfg = TrainConfig { neighbors_train: 20, neighbors_test: 20, ..Default::default() };
    let base = embedder();
    let tuned = fine_tune(&cfg, &coarse, None, &base).unwrap().embedder;
    for how in [Decode::Marginal, Decode::Segments(DPConfig::new(0.5))] {
        let no_ft = zero_shot_eval(&base, &train, &dev, 20, &how).unwrap();
        let ft = zero_shot_eval(&tuned, &train, &dev, 20, &how).unwrap();
        let (f_no, f_ft) = (no_ft.spans.unwrap().f1, ft.spans.unwrap().f1);
        eprintln!(
            "{how:?}: f1 {f_no:.4} -> {f_ft:.4}, token accuracy {:.4} -> {:.4}",
            no_ft.token_accuracy, ft.token_accuracy
        );
        assert!(f_ft >= f_no);
        assert!(ft.token_accuracy >= no_ft.token_accuracy);
    }
}
