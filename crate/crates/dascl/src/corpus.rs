//! Labeled corpora and their JSONL on-disk form: one object per line,
//! `{"id": ..., "text": ..., "label": ...}`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::CorpusError;

/// One labeled document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub label: usize,
}

impl Example {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: usize) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
        }
    }
}

/// An ordered collection of examples with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    examples: Vec<Example>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids.
    pub fn from_examples(examples: Vec<Example>) -> Result<Self, CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for ex in &examples {
            if !seen.insert(ex.id.as_str()) {
                return Err(CorpusError::DuplicateId { id: ex.id.clone() });
            }
        }
        Ok(Self { examples })
    }

    /// For derived corpora whose ids are copied from an already-validated
    /// source.
    pub(crate) fn from_examples_unchecked(examples: Vec<Example>) -> Self {
        Self { examples }
    }

    /// Reads JSONL; every non-empty line must parse as an [`Example`].
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut examples = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: Example = serde_json::from_str(&line)
                .map_err(|source| CorpusError::Parse { line: idx + 1, source })?;
            examples.push(ex);
        }
        Self::from_examples(examples)
    }

    /// Writes JSONL, one example per line, in corpus order.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<(), CorpusError> {
        for ex in &self.examples {
            serde_json::to_writer(&mut writer, ex).map_err(std::io::Error::other)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Checks every label against the class count.
    pub fn validate_labels(&self, classes: usize) -> Result<(), CorpusError> {
        for ex in &self.examples {
            if ex.label >= classes {
                return Err(CorpusError::LabelOutOfRange {
                    id: ex.id.clone(),
                    label: ex.label,
                    classes,
                });
            }
        }
        Ok(())
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}
