//! Versioned JSON checkpoints bundling the vocabulary with all encoder
//! parameters. Floats are serialized in shortest-round-trip form, so a
//! save/load cycle reproduces every weight exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderParams, Vocab};
use crate::error::CheckpointError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub vocab: Vocab,
    pub params: EncoderParams,
}

impl Checkpoint {
    pub fn new(vocab: Vocab, params: EncoderParams) -> Result<Self, CheckpointError> {
        let ckpt = Self {
            version: CHECKPOINT_VERSION,
            vocab,
            params,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    /// Structural consistency: version, vocabulary size, and array shapes.
    pub fn validate(&self) -> Result<(), CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: self.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let dims = &self.params.dims;
        dims.validate()
            .map_err(|e| CheckpointError::Inconsistent(e.to_string()))?;
        if self.vocab.len() != dims.vocab {
            return Err(CheckpointError::Inconsistent(format!(
                "vocabulary has {} tokens but dims.vocab is {}",
                self.vocab.len(),
                dims.vocab
            )));
        }
        let shapes = [
            ("embedding", self.params.embedding.dim(), (dims.vocab, dims.embedding)),
            ("w_hidden", self.params.w_hidden.dim(), (dims.embedding, dims.hidden)),
            ("w_proj", self.params.w_proj.dim(), (dims.hidden, dims.projection)),
            ("w_class", self.params.w_class.dim(), (dims.hidden, dims.classes)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(CheckpointError::Inconsistent(format!(
                    "{name} has shape {got:?}, expected {want:?}"
                )));
            }
        }
        let vectors = [
            ("b_hidden", self.params.b_hidden.len(), dims.hidden),
            ("b_proj", self.params.b_proj.len(), dims.projection),
            ("b_class", self.params.b_class.len(), dims.classes),
        ];
        for (name, got, want) in vectors {
            if got != want {
                return Err(CheckpointError::Inconsistent(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
        }
        if !self.params.rho.is_finite() {
            return Err(CheckpointError::Inconsistent(format!(
                "rho is not finite: {}",
                self.params.rho
            )));
        }
        let finite = self.params.embedding.iter().all(|v| v.is_finite())
            && self.params.w_hidden.iter().all(|v| v.is_finite())
            && self.params.b_hidden.iter().all(|v| v.is_finite())
            && self.params.w_proj.iter().all(|v| v.is_finite())
            && self.params.b_proj.iter().all(|v| v.is_finite())
            && self.params.w_class.iter().all(|v| v.is_finite())
            && self.params.b_class.iter().all(|v| v.is_finite());
        if !finite {
            return Err(CheckpointError::Inconsistent(
                "parameters contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let file = File::create(path)?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let file = File::open(path)?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
        ckpt.validate()?;
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, EncoderDims, Vocab};
    use crate::lexicon::tokenize;

    fn sample() -> Checkpoint {
        let vocab = Vocab::build(&[tokenize("a b c d")]);
        let dims = EncoderDims {
            vocab: vocab.len(),
            embedding: 3,
            hidden: 4,
            projection: 2,
            classes: 2,
        };
        Checkpoint::new(vocab, init_params(dims, 8, 0.3).unwrap()).unwrap()
    }

    #[test]
    fn save_load_reproduces_params_exactly() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.params.to_flat(), ckpt.params.to_flat());
        assert_eq!(back.vocab.len(), ckpt.vocab.len());
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut ckpt = sample();
        ckpt.version = 99;
        assert!(matches!(
            ckpt.validate(),
            Err(CheckpointError::Version { found: 99, .. })
        ));
    }

    #[test]
    fn vocab_size_mismatch_rejected() {
        let mut ckpt = sample();
        ckpt.params.dims.vocab = 3;
        assert!(matches!(
            ckpt.validate(),
            Err(CheckpointError::Inconsistent(_))
        ));
    }
}
