//! Sequence labeling by copying token labels from retrieved neighbor sentences.
//!
//! A tagger embeds every token of an input sentence, retrieves the nearest
//! labeled sentences from a database, and predicts each label as the label
//! type carrying the most copy probability. Because the model only scores
//! token similarity, any label inventory present in the database can be
//! emitted, which makes swapping the database a zero-shot transfer.
//!
//! Decoding can alternatively penalize the number of distinct copied
//! segments with an exact dynamic program over a trie of the label
//! subsequences found among the neighbors (see [`decoder`]).
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`). The aliases
//! at the crate root pin the `f64` instantiation used by the CLI.

pub mod copy_model;
pub mod corpus;
pub mod decoder;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod matrix;
pub mod pipeline;
pub mod retrieval;
pub mod scalar;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Real;

pub type MatrixF64 = matrix::Matrix<f64>;
pub type MatrixF32 = matrix::Matrix<f32>;

pub type HashEmbedderF64 = embeddings::HashEmbedder<f64>;
pub type HashEmbedderF32 = embeddings::HashEmbedder<f32>;
pub type PrecomputedStoreF64 = embeddings::PrecomputedStore<f64>;

pub type NeighborIndexF64 = retrieval::NeighborIndex<f64>;
pub type NeighborSetF64 = retrieval::NeighborSet<f64>;
pub type NeighborSetF32 = retrieval::NeighborSet<f32>;

pub type CopyPosteriorF64 = copy_model::CopyPosterior<f64>;
pub type MarginalMatrixF64 = copy_model::MarginalMatrix<f64>;
pub type MarginalMatrixF32 = copy_model::MarginalMatrix<f32>;

pub type DecodeResultF64 = decoder::DecodeResult<f64>;
pub type CheckpointF64 = trainer::Checkpoint<f64>;
pub type CheckpointF32 = trainer::Checkpoint<f32>;
pub type TaggerF64<'a> = pipeline::Tagger<'a, f64>;
