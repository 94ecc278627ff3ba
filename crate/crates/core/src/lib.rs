//! Dual-stream text/volume retrieval engine.
//!
//! Everything in this crate is pure computation over in-memory values: corpus
//! filtering and splitting, tokenization and the frozen toy text encoder, 3D
//! volume resizing/augmentation and the trainable patch encoder, cross-view
//! fusion, the consistency and contrastive losses with their analytic
//! gradients, the training loop, exact cosine search and the retrieval
//! metrics. File formats, curation of raw directories and the command line
//! live in the `ctrieve` crate.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod error;
pub mod fusion;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod params;
pub mod retrieval;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod train;
pub mod vision;

pub use error::{Error, Result};
pub use tensor::{EmbeddingVector, TokenMatrix};
