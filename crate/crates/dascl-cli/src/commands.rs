//! Command implementations. Input problems are validation errors (exit 1);
//! failures while producing output are runtime errors (exit 2).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use dascl::checkpoint::Checkpoint;
use dascl::corpus::Corpus;
use dascl::gradcheck::{run_suite, GradCheckReport};
use dascl::lexicon::{simplify_corpus, Lexicon, LexiconSet};
use dascl::losses::LossMode;
use dascl::trainer::{
    self, docs_to_ids, metric_value, tokenize_corpus, EpochRecord, TrainConfig,
};

use crate::config::{default_lexicon_name, ExperimentConfig};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

// Console output goes through here so a closed stdout (e.g. piping into
// `head`) cannot abort a run before its files are written.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    Corpus::read_jsonl(BufReader::new(file))
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_all(b"\n")
        .and_then(|()| writer.flush())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Parses repeated `PATH:TOKEN` dictionary flags in priority order.
fn parse_dict_flags(flags: &[String]) -> Result<LexiconSet, CliError> {
    let mut lexicons = Vec::with_capacity(flags.len());
    for (i, flag) in flags.iter().enumerate() {
        let (path, token) = flag.rsplit_once(':').ok_or_else(|| {
            CliError::Validation(format!(
                "--dict {flag:?}: expected PATH:TOKEN (e.g. positive.txt:<positive>)"
            ))
        })?;
        let path = Path::new(path);
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let name = default_lexicon_name(path, i);
        let lexicon = Lexicon::parse(&text, token, &name)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        lexicons.push(lexicon);
    }
    LexiconSet::new(lexicons).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn simplify(dicts: &[String], input: &Path, output: &Path) -> Result<(), CliError> {
    let lexicons = parse_dict_flags(dicts)?;
    let corpus = read_corpus(input)?;
    let simplified = simplify_corpus(&corpus, &lexicons);
    let file = File::create(output)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", output.display())))?;
    simplified
        .write_jsonl(BufWriter::new(file))
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", output.display())))?;
    Ok(())
}

/// The on-disk history format: the training settings echoed back, plus the
/// per-epoch records and the selected epoch.
#[derive(Serialize)]
struct HistoryFile<'a> {
    config: &'a TrainConfig,
    selected_epoch: usize,
    epochs: &'a [EpochRecord],
}

pub fn train(config_path: &Path) -> Result<(), CliError> {
    let config = ExperimentConfig::load(config_path)?;
    let lexicons = config.load_lexicons()?;
    let train_corpus = read_corpus(&config.train)?;
    let val_corpus = read_corpus(&config.val)?;
    let classes = config.training.dims.classes;
    for (corpus, path) in [(&train_corpus, &config.train), (&val_corpus, &config.val)] {
        corpus
            .validate_labels(classes)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    }
    if let Some(n) = config.training.few_shot_n {
        if n > train_corpus.len() {
            return Err(CliError::Validation(format!(
                "few_shot_n: {n} exceeds the training corpus size {}",
                train_corpus.len()
            )));
        }
    }
    let test_corpus = match &config.test {
        Some(path) => {
            let corpus = read_corpus(path)?;
            corpus
                .validate_labels(classes)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            Some(corpus)
        }
        None => None,
    };

    let outcome = trainer::train(&config.training, &train_corpus, &val_corpus, &lexicons)
        .map_err(|e| CliError::Runtime(format!("training failed: {e}")))?;

    fs::create_dir_all(&config.output_dir).map_err(|e| {
        CliError::Runtime(format!("cannot create {}: {e}", config.output_dir.display()))
    })?;
    let checkpoint = Checkpoint::new(outcome.vocab.clone(), outcome.params.clone())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let checkpoint_path = config.output_dir.join("checkpoint.json");
    checkpoint
        .save(&checkpoint_path)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let history_path = config.output_dir.join("history.json");
    write_json(
        &HistoryFile {
            config: &config.training,
            selected_epoch: outcome.history.selected_epoch,
            epochs: &outcome.history.epochs,
        },
        &history_path,
    )?;

    let selected = &outcome.history.epochs[outcome.history.selected_epoch - 1];
    let metric_name = match config.training.selection_metric {
        dascl::trainer::SelectionMetric::Accuracy => "accuracy",
        dascl::trainer::SelectionMetric::F1Positive => "f1_positive",
    };
    say!(
        "selected epoch {} of {} ({} = {:.4})",
        outcome.history.selected_epoch,
        config.training.epochs,
        metric_name,
        metric_value(&selected.validation, config.training.selection_metric),
    );
    say!(
        "validation: accuracy {:.4}, precision {:.4}, recall {:.4}, f1 {:.4}, macro-f1 {:.4}, ap {:.4}",
        selected.validation.accuracy,
        selected.validation.precision,
        selected.validation.recall,
        selected.validation.f1_positive,
        selected.validation.macro_f1,
        selected.validation.average_precision,
    );
    say!("checkpoint: {}", checkpoint_path.display());
    say!("history:    {}", history_path.display());

    if let Some(test_corpus) = test_corpus {
        let docs = docs_to_ids(&tokenize_corpus(&test_corpus), &outcome.vocab);
        let (report, _) = trainer::evaluate(&outcome.params, &docs, &test_corpus.labels())
            .map_err(|e| CliError::Runtime(format!("test evaluation failed: {e}")))?;
        let report_path = config.output_dir.join("test_report.json");
        write_json(&report, &report_path)?;
        say!(
            "test: accuracy {:.4}, ap {:.4} ({})",
            report.accuracy,
            report.average_precision,
            report_path.display()
        );
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path)
        .map_err(|e| CliError::Validation(format!("checkpoint {}: {e}", path.display())))
}

pub fn eval(checkpoint: &Path, input: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let corpus = read_corpus(input)?;
    corpus
        .validate_labels(ckpt.params.dims.classes)
        .map_err(|e| CliError::Validation(format!("{}: {e}", input.display())))?;
    let docs = docs_to_ids(&tokenize_corpus(&corpus), &ckpt.vocab);
    let (report, _) = trainer::evaluate(&ckpt.params, &docs, &corpus.labels())
        .map_err(|e| CliError::Validation(format!("evaluation failed: {e}")))?;
    let rendered = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    say!("{rendered}");
    if let Some(path) = output {
        write_json(&report, path)?;
    }
    Ok(())
}

fn print_report(report: &GradCheckReport) {
    say!(
        "mode {}: max relative error {:.3e} over {} trials (tolerance {:.1e}): {}",
        report.mode,
        report.max_rel_error,
        report.trials,
        report.tolerance,
        if report.passed { "PASS" } else { "FAIL" }
    );
}

pub fn gradcheck(mode: Option<LossMode>, seed: u64, trials: usize) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Validation("--trials must be >= 1".into()));
    }
    let modes: Vec<LossMode> = match mode {
        Some(m) => vec![m],
        None => LossMode::ALL.to_vec(),
    };
    let reports =
        run_suite(&modes, trials, seed).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut all_passed = true;
    for report in &reports {
        print_report(report);
        all_passed &= report.passed;
    }
    if !all_passed {
        return Err(CliError::Runtime(
            "gradient check failed: analytic and finite-difference gradients disagree".into(),
        ));
    }
    Ok(())
}

pub fn export_embeddings(checkpoint: &Path, input: &Path, output: &Path) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let corpus = read_corpus(input)?;
    let file = File::create(output)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", output.display())))?;
    let mut writer = BufWriter::new(file);
    trainer::export_embeddings(&ckpt.params, &ckpt.vocab, &corpus, &mut writer)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", output.display())))?;
    writer
        .flush()
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", output.display())))?;
    Ok(())
}
