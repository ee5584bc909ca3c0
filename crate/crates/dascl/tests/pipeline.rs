//! End-to-end library integration: dictionaries drive training twins, the
//! trained model round-trips through a checkpoint, and evaluation agrees
//! with exported embeddings.

use std::io::BufRead;

use approx::assert_abs_diff_eq;

use dascl::checkpoint::Checkpoint;
use dascl::corpus::{Corpus, Example};
use dascl::encoder::encode;
use dascl::lexicon::{simplify_corpus, tokenize, Lexicon, LexiconSet};
use dascl::losses::LossMode;
use dascl::trainer::{
    docs_to_ids, evaluate, export_embeddings, tokenize_corpus, train, ModelDims, SelectionMetric,
    TrainConfig,
};

fn sentiment_lexicons() -> LexiconSet {
    LexiconSet::new(vec![
        Lexicon::parse("bright\nshining\ngleam*\n", "<positive>", "pos").unwrap(),
        Lexicon::parse("dull\nmurky\ngloom*\nnot bright\n", "<negative>", "neg").unwrap(),
    ])
    .unwrap()
}

fn corpus(prefix: &str, n: usize) -> Corpus {
    let pos = ["bright", "shining", "gleaming", "gleams"];
    let neg = ["dull", "murky", "gloomy", "glooms"];
    let fillers = ["sky", "river", "stone", "wind", "field"];
    let examples = (0..n)
        .map(|i| {
            let label = i % 2;
            let signal = if label == 1 {
                pos[i % pos.len()]
            } else {
                neg[i % neg.len()]
            };
            let text = format!(
                "{} {} {} {}",
                fillers[i % fillers.len()],
                signal,
                fillers[(i + 2) % fillers.len()],
                fillers[(i + 3) % fillers.len()],
            );
            Example::new(format!("{prefix}{i}"), text, label)
        })
        .collect();
    Corpus::from_examples(examples).unwrap()
}

fn small_config(mode: LossMode) -> TrainConfig {
    TrainConfig {
        lambda: 0.5,
        tau_init: 0.3,
        learning_rate: 0.05,
        batch_size: 8,
        epochs: 20,
        dims: ModelDims {
            embedding: 12,
            hidden: 12,
            projection: 6,
            classes: 2,
        },
        selection_metric: SelectionMetric::F1Positive,
        few_shot_n: None,
        ..TrainConfig::new(mode, 11)
    }
}

#[test]
fn dascl_training_with_dictionaries_converges_and_round_trips() {
    let lexicons = sentiment_lexicons();
    let train_set = corpus("t", 32);
    let val_set = corpus("v", 16);

    let outcome = train(&small_config(LossMode::CeDascl), &train_set, &val_set, &lexicons).unwrap();
    let best = &outcome.history.epochs[outcome.history.selected_epoch - 1];
    assert!(best.validation.accuracy >= 0.9, "got {}", best.validation.accuracy);
    assert!(best.contrastive_loss.is_some());

    // The vocabulary covers the replacement tokens introduced by the twins.
    assert!(outcome.vocab.id("<positive>").is_some());
    assert!(outcome.vocab.id("<negative>").is_some());

    // Checkpoint round trip preserves behavior exactly.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    Checkpoint::new(outcome.vocab.clone(), outcome.params.clone())
        .unwrap()
        .save(&path)
        .unwrap();
    let restored = Checkpoint::load(&path).unwrap();

    let test_set = corpus("x", 10);
    let ids = docs_to_ids(&tokenize_corpus(&test_set), &outcome.vocab);
    let restored_ids = docs_to_ids(&tokenize_corpus(&test_set), &restored.vocab);
    assert_eq!(ids, restored_ids);
    let (before, preds_before) = evaluate(&outcome.params, &ids, &test_set.labels()).unwrap();
    let (after, preds_after) = evaluate(&restored.params, &restored_ids, &test_set.labels()).unwrap();
    assert_eq!(before, after);
    for (a, b) in preds_before.iter().zip(&preds_after) {
        assert_eq!(a.score, b.score);
    }
}

#[test]
fn simplified_corpus_feeds_back_through_the_pipeline() {
    // cmd_simplify output is a corpus again; training on it must see the
    // replacement tokens as ordinary words.
    let lexicons = sentiment_lexicons();
    let raw = corpus("s", 12);
    let simplified = simplify_corpus(&raw, &lexicons);
    for (ex, orig) in simplified.examples().iter().zip(raw.examples()) {
        assert_eq!(ex.id, orig.id);
        assert_eq!(ex.label, orig.label);
    }
    let tokens = tokenize(&simplified.examples()[1].text);
    assert!(tokens.tokens().contains(&"<positive>".to_string()));

    let outcome = train(
        &small_config(LossMode::Ce),
        &simplified,
        &simplified,
        &LexiconSet::empty(),
    )
    .unwrap();
    assert!(outcome.vocab.id("<positive>").is_some());
    let best = &outcome.history.epochs[outcome.history.selected_epoch - 1];
    assert_eq!(best.validation.accuracy, 1.0);
}

#[test]
fn empty_text_documents_train_as_unk() {
    let mut examples: Vec<Example> = corpus("t", 12).examples().to_vec();
    examples.push(Example::new("empty", "", 0));
    let train_set = Corpus::from_examples(examples).unwrap();
    let outcome = train(
        &small_config(LossMode::CeDascl),
        &train_set,
        &train_set,
        &sentiment_lexicons(),
    )
    .unwrap();
    let ids = docs_to_ids(&tokenize_corpus(&train_set), &outcome.vocab);
    assert_eq!(ids.last().unwrap(), &vec![0]);
}

#[test]
fn exported_embeddings_match_the_encoder() {
    let lexicons = sentiment_lexicons();
    let train_set = corpus("t", 16);
    let outcome = train(&small_config(LossMode::CeScl), &train_set, &train_set, &lexicons).unwrap();

    let mut buf = Vec::new();
    export_embeddings(&outcome.params, &outcome.vocab, &train_set, &mut buf).unwrap();
    let lines: Vec<String> = buf.lines().map(|l| l.unwrap()).collect();
    assert_eq!(lines.len(), train_set.len() + 1);

    let dims = &outcome.params.dims;
    for (line, ex) in lines[1..].iter().zip(train_set.examples()) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 2 + dims.hidden + dims.projection);
        let ids = outcome.vocab.encode_doc(&tokenize(&ex.text));
        let trace = encode(&outcome.params, &ids).unwrap();
        let psi: Vec<f64> = fields[2 + dims.hidden..]
            .iter()
            .map(|v| v.parse().unwrap())
            .collect();
        for (got, want) in psi.iter().zip(trace.psi.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-6);
        }
    }
}
