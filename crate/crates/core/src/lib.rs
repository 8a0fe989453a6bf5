//! Memory networks for text question answering.
//!
//! The crate is organised around the four components of a memory network:
//! input featurization ([`features`]), memory writes and candidate lookup
//! ([`memory`]), supporting-fact retrieval and response ranking ([`model`],
//! built on the bilinear scorers in [`scoring`]). Parameters are learned with
//! margin-ranking SGD in [`training`]. The [`simulator`] produces grounded
//! story/question data, and [`harness`] wires everything into experiments,
//! file formats and a CLI.
//!
//! Data-parallel loops (evaluation across questions, k-means assignment,
//! hash benchmarks) run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential iteration otherwise. See [`parallel`].

pub mod error;
pub mod features;
pub mod harness;
pub mod memory;
pub mod model;
pub mod parallel;
pub mod scoring;
pub mod simulator;
pub mod training;

pub use error::{MemnnError, Result};
pub use features::{tokenize, ContextStore, FeatureLayout, LayoutKind, Region, SparseVector, Vocab};
pub use memory::{HashIndex, MemoryStore};
pub use model::{MemNN, ModelFlags};
pub use scoring::{EmbeddingMatrix, MatrixRole, SegmenterParams};
pub use training::TrainConfig;
