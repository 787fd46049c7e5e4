//! Cross-lingual retrieval over aligned embedding spaces.
//!
//! The crate covers the whole offline pipeline: corpus preparation
//! ([`corpus`]), static and contextual text embeddings ([`embeddings`]),
//! orthogonal alignment of two monolingual spaces ([`projection`]), cosine
//! and query-likelihood ranking with localized segment/sentence matching
//! ([`retrieval`]), MAP evaluation with significance testing ([`evaluation`])
//! and contrastive fine-tuning of a linear adapter ([`finetune`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The `*F64`
//! aliases below are what the command-line driver uses.

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod finetune;
pub mod linalg;
pub mod projection;
pub mod retrieval;
pub mod scalar;
pub mod vector;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type EmbeddingStoreF32 = embeddings::EmbeddingStore<f32>;
pub type EmbeddingStoreF64 = embeddings::EmbeddingStore<f64>;
pub type MatrixF64 = linalg::Matrix<f64>;
pub type ProjectionMatrixF64 = projection::ProjectionMatrix<f64>;
pub type AdapterMatrixF64 = finetune::AdapterMatrix<f64>;
pub type TextRepresentationF64 = retrieval::TextRepresentation<f64>;
pub type TrainingBatchF64 = finetune::TrainingBatch<f64>;
