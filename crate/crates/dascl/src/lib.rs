//! Dictionary-assisted supervised contrastive learning for text
//! classification, end to end at desk scale: dictionary-driven keyword
//! simplification, a small differentiable encoder with an L2-normalized
//! projection head, the cross-entropy/contrastive loss family with exact
//! gradients and a learnable temperature, a deterministic training loop
//! with epoch-wise model selection, classification metrics, and embedding
//! export.

pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod lexicon;
pub mod losses;
pub mod metrics;
pub mod trainer;
