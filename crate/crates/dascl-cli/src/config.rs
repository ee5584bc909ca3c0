//! Experiment configuration: corpus paths, dictionaries in priority order,
//! training settings, and the output directory. Validated in full before
//! any work starts.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dascl::lexicon::{Lexicon, LexiconSet};
use dascl::trainer::TrainConfig;

use crate::commands::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionarySpec {
    pub path: PathBuf,
    pub token: String,
    /// Lexicon name; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: PathBuf,
    pub val: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub dictionaries: Vec<DictionarySpec>,
    #[serde(flatten)]
    pub training: TrainConfig,
    pub output_dir: PathBuf,
}

const TOP_LEVEL_KEYS: &[&str] = &[
    "train",
    "val",
    "test",
    "dictionaries",
    "output_dir",
    // TrainConfig fields, flattened
    "mode",
    "lambda",
    "tau_init",
    "learning_rate",
    "batch_size",
    "epochs",
    "seed",
    "dims",
    "selection_metric",
    "few_shot_n",
    "weight_decay",
    "grad_clip",
];

impl ExperimentConfig {
    /// Parses and validates a config file: schema, field values, and the
    /// existence of every referenced input file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            CliError::Validation(format!("config {}: {e}", path.display()))
        })?;
        let object = value.as_object().ok_or_else(|| {
            CliError::Validation(format!("config {}: expected a JSON object", path.display()))
        })?;
        let known: BTreeSet<&str> = TOP_LEVEL_KEYS.iter().copied().collect();
        for key in object.keys() {
            if !known.contains(key.as_str()) {
                return Err(CliError::Validation(format!(
                    "config {}: unknown field `{key}`",
                    path.display()
                )));
            }
        }
        let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| {
            CliError::Validation(format!("config {}: {e}", path.display()))
        })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.training
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        for (field, p) in [("train", Some(&self.train)), ("val", Some(&self.val)), ("test", self.test.as_ref())] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(CliError::Validation(format!(
                        "{field}: file not found: {}",
                        p.display()
                    )));
                }
            }
        }
        for (i, spec) in self.dictionaries.iter().enumerate() {
            if !spec.path.is_file() {
                return Err(CliError::Validation(format!(
                    "dictionaries[{i}].path: file not found: {}",
                    spec.path.display()
                )));
            }
        }
        Ok(())
    }

    /// Loads and compiles the configured dictionaries in priority order.
    pub fn load_lexicons(&self) -> Result<LexiconSet, CliError> {
        let mut lexicons = Vec::with_capacity(self.dictionaries.len());
        for (i, spec) in self.dictionaries.iter().enumerate() {
            let text = fs::read_to_string(&spec.path).map_err(|e| {
                CliError::Validation(format!(
                    "dictionaries[{i}]: cannot read {}: {e}",
                    spec.path.display()
                ))
            })?;
            let name = spec
                .name
                .clone()
                .unwrap_or_else(|| default_lexicon_name(&spec.path, i));
            let lexicon = Lexicon::parse(&text, &spec.token, &name).map_err(|e| {
                CliError::Validation(format!("dictionaries[{i}] ({}): {e}", spec.path.display()))
            })?;
            lexicons.push(lexicon);
        }
        LexiconSet::new(lexicons).map_err(|e| {
            CliError::Validation(format!("{e}; set explicit dictionary names in the config"))
        })
    }
}

pub fn default_lexicon_name(path: &Path, index: usize) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dictionary".to_string());
    format!("{stem}#{index}")
}
