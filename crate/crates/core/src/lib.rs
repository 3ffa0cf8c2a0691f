//! Reader-aware abstractive summarization.
//!
//! A pointer-copy sequence-to-sequence summarizer that also reads the
//! comments left on a document. A salience classifier filters noisy
//! comments, the remaining ones are aligned with the document to find the
//! reader-focused content, and an adversarially trained discriminator plus
//! a goal tracker steer the decoder toward that content.

pub mod corpus;
pub mod decoder;
pub mod denoising;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod goal_tracker;
pub mod graph;
pub mod model;
pub mod params;
pub mod reader_attention;
pub mod supervisor;
pub mod training;

pub use corpus::{EncodedExample, Example, Vocabulary};
pub use error::{Error, Result};
pub use model::{Generation, Model, ModelConfig, Variant};
pub use params::{ParamGroup, ParamStore};
