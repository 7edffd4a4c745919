//! Cross-language information retrieval with query-dependent translation
//! models learned from pseudo-relevant documents.

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod index;
pub mod prf;
pub mod projection;
pub mod pipeline;
pub mod synth;
pub mod translation;

pub use error::{Error, Result, Stage};
