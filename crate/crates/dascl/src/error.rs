//! Error types, one enum per subsystem.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("replacement token {token:?} must match <[a-z_]+>")]
    InvalidToken { token: String },
    #[error("dictionary line {line}: entry is only `*`")]
    BareWildcard { line: usize },
    #[error("dictionary line {line}: phrase {entry:?} may not contain `*`")]
    WildcardInPhrase { line: usize, entry: String },
    #[error("dictionary line {line}: {entry:?}: `*` is only supported as a trailing prefix wildcard")]
    StrayWildcard { line: usize, entry: String },
    #[error("dictionary line {line}: {entry:?} has no matchable characters")]
    EmptyEntry { line: usize, entry: String },
    #[error("duplicate lexicon name {name:?}")]
    DuplicateLexiconName { name: String },
    #[error("invalid document token {token:?}: tokens must be nonempty and whitespace-free")]
    InvalidDocToken { token: String },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("duplicate example id {id:?}")]
    DuplicateId { id: String },
    #[error("example {id:?}: label {label} out of range for {classes} classes")]
    LabelOutOfRange {
        id: String,
        label: usize,
        classes: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("tau_init must be > 0, got {0}")]
    InvalidTauInit(f64),
    #[error("cannot encode an empty document; map empty docs to <unk> upstream")]
    EmptyDoc,
    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenIdOutOfRange { id: usize, vocab: usize },
    #[error("projection collapsed to the zero vector; cannot L2-normalize")]
    ZeroNormProjection,
    #[error("shape mismatch in backward: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Error)]
pub enum LossError {
    #[error("temperature must be > 0, got {0}")]
    NonPositiveTau(f64),
    #[error("lambda must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("contrastive batch must pair each original with its twin: label {i} != label {twin}")]
    BrokenTwinPairing { i: usize, twin: usize },
    #[error("embedding {index} has norm {norm} but must be unit length")]
    NonUnitEmbedding { index: usize, norm: f64 },
    #[error("batch inputs disagree in length: {0}")]
    LengthMismatch(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("labels must be binary (0 or 1); saw {value}")]
    NonBinaryLabel { value: usize },
    #[error("score {value} is not a finite number in [0, 1]")]
    InvalidScore { value: f64 },
    #[error("average precision is undefined without positive examples")]
    NoPositiveExamples,
    #[error("no predictions to evaluate")]
    Empty,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("few-shot sample size {n} must be between 1 and the corpus size {len}")]
    BadSampleSize { n: usize, len: usize },
    #[error("corpora are misaligned: {0}")]
    MisalignedCorpora(String),
    #[error("non-finite {what}; aborting")]
    NonFinite { what: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
