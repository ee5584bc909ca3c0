//! Shared test support: brute-force oracles kept independent of the library
//! implementations they check, a synthetic sentiment corpus generator, and
//! helpers for driving the compiled binary.

#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array2;
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dascl::corpus::{Corpus, Example};
use dascl::lexicon::{simplify_corpus, Lexicon, LexiconSet};

// ---------------------------------------------------------------------------
// Brute-force oracles
// ---------------------------------------------------------------------------

fn dot(emb: &Array2<f64>, a: usize, b: usize) -> f64 {
    emb.row(a).dot(&emb.row(b))
}

/// Direct transcription of the dictionary-assisted contrastive objective:
/// a naive triple loop with raw exponentials and the per-anchor coefficient
/// 1/(2*N_y - 1), where N_y counts originals (rows 0..N) with the anchor's
/// label. No log-sum-exp tricks; independent of the library path.
pub fn dascl_oracle(emb: &Array2<f64>, labels: &[usize], tau: f64) -> f64 {
    let two_n = emb.nrows();
    let n = two_n / 2;
    let mut total = 0.0;
    for i in 0..two_n {
        let n_yi = (0..n).filter(|&j| labels[j] == labels[i]).count();
        let coeff = 1.0 / (2.0 * n_yi as f64 - 1.0);
        let mut inner = 0.0;
        for j in 0..two_n {
            if j == i || labels[j] != labels[i] {
                continue;
            }
            let mut denom = 0.0;
            for k in 0..two_n {
                if k != i {
                    denom += (dot(emb, i, k) / tau).exp();
                }
            }
            inner += ((dot(emb, i, j) / tau).exp() / denom).ln();
        }
        total += coeff * inner;
    }
    -total / two_n as f64
}

/// Direct transcription of the plain supervised contrastive objective over
/// N documents: coefficient 1/(N_y - 1), no outer normalization, anchors
/// with a unique label skipped.
pub fn scl_oracle(emb: &Array2<f64>, labels: &[usize], tau: f64) -> f64 {
    let n = emb.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let n_yi = (0..n).filter(|&j| labels[j] == labels[i]).count();
        if n_yi <= 1 {
            continue;
        }
        let coeff = 1.0 / (n_yi as f64 - 1.0);
        let mut inner = 0.0;
        for j in 0..n {
            if j == i || labels[j] != labels[i] {
                continue;
            }
            let mut denom = 0.0;
            for k in 0..n {
                if k != i {
                    denom += (dot(emb, i, k) / tau).exp();
                }
            }
            inner += ((dot(emb, i, j) / tau).exp() / denom).ln();
        }
        total -= coeff * inner;
    }
    total
}

/// Average precision by threshold enumeration: for every distinct score,
/// recount positives and predicted-positives from scratch.
pub fn ap_oracle(preds: &[(usize, f64)]) -> f64 {
    let total_pos = preds.iter().filter(|(y, _)| *y == 1).count();
    assert!(total_pos > 0, "oracle needs a positive example");
    let mut thresholds: Vec<f64> = preds.iter().map(|(_, s)| *s).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let tp = preds.iter().filter(|(y, s)| *y == 1 && *s >= t).count();
        let predicted = preds.iter().filter(|(_, s)| *s >= t).count();
        let precision = tp as f64 / predicted as f64;
        let recall = tp as f64 / total_pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Random unit-row embedding matrix.
pub fn random_unit_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut emb = Array2::<f64>::zeros((rows, cols));
    for mut row in emb.rows_mut() {
        loop {
            for v in row.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let norm = row.dot(&row).sqrt();
            if norm > 1e-3 {
                row /= norm;
                break;
            }
        }
    }
    emb
}

// ---------------------------------------------------------------------------
// Synthetic sentiment corpus
// ---------------------------------------------------------------------------

const WORDS_PER_CLASS: usize = 50;
const TRAIN_HALF: usize = 25;
const FILLER_WORDS: usize = 120;
const DISTRACTOR_WORDS: usize = 40;

fn positive_word(i: usize) -> String {
    format!("glint{i:02}")
}

fn negative_word(i: usize) -> String {
    format!("murk{i:02}")
}

/// Two 50-word class dictionaries compiled with their replacement tokens.
pub fn synth_lexicons() -> LexiconSet {
    let pos: String = (0..WORDS_PER_CLASS).map(|i| positive_word(i) + "\n").collect();
    let neg: String = (0..WORDS_PER_CLASS).map(|i| negative_word(i) + "\n").collect();
    LexiconSet::new(vec![
        Lexicon::parse(&pos, "<positive>", "synthetic_positive").unwrap(),
        Lexicon::parse(&neg, "<negative>", "synthetic_negative").unwrap(),
    ])
    .unwrap()
}

fn synth_doc(rng: &mut ChaCha8Rng, id: String, signal_range: std::ops::Range<usize>) -> Example {
    let label = rng.random_range(0..2usize);
    let len = rng.random_range(8..=14usize);
    let n_signal = rng.random_range(2..=4usize);
    let n_distract = (len as f64 * 0.1).round().max(1.0) as usize;
    let n_filler = len - n_signal - n_distract;

    let mut tokens: Vec<String> = Vec::with_capacity(len);
    for _ in 0..n_signal {
        let w = rng.random_range(signal_range.clone());
        tokens.push(if label == 1 {
            positive_word(w)
        } else {
            negative_word(w)
        });
    }
    for _ in 0..n_distract {
        tokens.push(format!("odd{:02}", rng.random_range(0..DISTRACTOR_WORDS)));
    }
    for _ in 0..n_filler {
        tokens.push(format!("fill{:03}", rng.random_range(0..FILLER_WORDS)));
    }
    for i in (1..tokens.len()).rev() {
        let j = rng.random_range(0..=i);
        tokens.swap(i, j);
    }
    Example::new(id, tokens.join(" "), label)
}

fn synth_split(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    n: usize,
    signal_range: std::ops::Range<usize>,
) -> Corpus {
    let examples = (0..n)
        .map(|i| synth_doc(rng, format!("{prefix}{i:04}"), signal_range.clone()))
        .collect();
    Corpus::from_examples(examples).unwrap()
}

/// The generated experiment data. Class is signaled by words drawn from two
/// disjoint 50-word dictionaries embedded in filler noise, with ~10%
/// label-irrelevant distractor tokens per document.
///
/// Training-distribution splits draw signal words from the first half of
/// each dictionary. The `test_unseen_simplified` split draws from the
/// second half (words the training documents never contain) and its text
/// is stored keyword-simplified: at desk scale the dictionary itself is the
/// only bridge from never-trained surface words to something the encoder
/// knows, standing in for the lexical generalization a pretrained model
/// would provide.
pub struct SynthData {
    pub pool: Corpus,
    pub val: Corpus,
    pub test_seen: Corpus,
    pub test_unseen_simplified: Corpus,
    pub lexicons: LexiconSet,
}

pub fn synth_data(seed: u64, pool_docs: usize) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicons = synth_lexicons();
    let pool = synth_split(&mut rng, "pool", pool_docs, 0..TRAIN_HALF);
    let val = synth_split(&mut rng, "val", 200, 0..TRAIN_HALF);
    let test_seen = synth_split(&mut rng, "seen", 300, 0..TRAIN_HALF);
    let test_unseen = synth_split(&mut rng, "unseen", 300, TRAIN_HALF..WORDS_PER_CLASS);
    let test_unseen_simplified = simplify_corpus(&test_unseen, &lexicons);
    SynthData {
        pool,
        val,
        test_seen,
        test_unseen_simplified,
        lexicons,
    }
}

// ---------------------------------------------------------------------------
// Binary helpers
// ---------------------------------------------------------------------------

pub fn dascl_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dascl"))
}

pub fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn write_corpus(corpus: &Corpus, path: &Path) {
    let file = std::fs::File::create(path).unwrap();
    corpus.write_jsonl(std::io::BufWriter::new(file)).unwrap();
}
