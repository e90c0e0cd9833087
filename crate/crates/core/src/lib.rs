//! Speculative decoding for autoregressive protein sequence generation, with
//! draft candidates ranked by k-mer motif statistics mined from a multiple
//! sequence alignment.
//!
//! The crate is organised bottom-up:
//!
//! - [`vocab`]: shared token vocabulary and the residue codec.
//! - [`msa`]: FASTA/A2M ingestion and gap stripping.
//! - [`kmer`]: per-k motif frequency index and candidate scoring.
//! - [`lm`]: next-token models (n-gram, table, remote), warping and sampling.
//! - [`coupling`]: token-level maximal coupling (accept / residual correction).
//! - [`decode`]: vanilla speculative decoding, batch-and-select decoding and
//!   plain autoregressive baselines.
//! - [`analysis`]: library metrics, speedup models and misranking estimates.
//! - [`oracle`]: exact enumeration of small sequence distributions.
//! - [`sweep`]: hyperparameter grids.
//! - [`manifest`]: run manifests and output hashes.

pub mod analysis;
pub mod coupling;
pub mod decode;
pub mod kmer;
pub mod lm;
pub mod manifest;
pub mod msa;
pub mod oracle;
pub mod rng;
pub mod sweep;
pub mod vocab;

pub use coupling::{acceptance_probability, couple, residual, CouplingOutcome};
pub use decode::{
    baseline_generate, generate_library, specmer_generate, speculative_generate, DecodeConfig,
    DecodeTrace, GenerationResult, LibraryKind,
};
pub use kmer::{KmerIndex, KmerScore};
pub use lm::{Distribution, LanguageModel, ModelDescriptor, SamplerConfig};
pub use msa::Msa;
pub use vocab::{TokenId, TokenSequence, Vocabulary};

/// Version string recorded in manifests and index files.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
