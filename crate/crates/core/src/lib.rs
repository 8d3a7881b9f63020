//! Gazetteer-augmented linear-chain CRF toolkit for named entity recognition.
//!
//! The pipeline runs from raw BIO corpora to macro-F1 reports:
//!
//! * [`corpus`] reads, cleans and summarizes CoNLL-style corpora.
//! * [`gazetteer`] builds a character trie over entity lists and emits
//!   per-token membership flags.
//! * [`sidecar`] ingests externally produced per-token vectors and tags.
//! * [`quantize`] clusters embedding vectors with k-means.
//! * [`features`] turns sentences into sparse feature vectors under the nine
//!   presets `A`..`I`.
//! * [`crf`] trains and decodes the linear-chain CRF.
//! * [`eval`] scores predictions at token and entity level.

pub mod corpus;
pub mod crf;
mod error;
pub mod eval;
pub mod features;
pub mod gazetteer;
pub mod io;
pub mod labels;
pub mod quantize;
pub mod sidecar;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
pub use labels::{EntityType, Label, LabelScheme};
