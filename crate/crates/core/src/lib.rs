//! Multi-document abstractive summarization over heterogeneous document graphs.
//!
//! A cluster of related documents is turned into a graph with word, sentence
//! and document nodes joined by six typed edge sets. A windowed-attention text
//! encoder initialises node embeddings, a multi-channel graph attention network
//! refines them, a differentiable compressor keeps the salient sentences (and
//! the words and documents they touch), and a transformer decoder generates the
//! summary from the compressed node set.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: dataset loading, tokenization, vocabulary and encoder input layout
//! - [`embeddings`]: static word vectors and sentence embedding providers
//! - [`rouge`]: ROUGE-1/2 and summary-level ROUGE-L
//! - [`hetgraph`]: heterogeneous graph construction, validation and export
//! - [`numeric`]: reverse-mode tape, parameters, Adam, gradient checking, checkpoints
//! - [`text_model`]: local/global attention encoder, causal decoder, beam search
//! - [`mgat`]: multi-channel graph attention encoder
//! - [`compressor`]: top-k sentence selection with soft masking
//! - [`model`]: the assembled summarizer
//! - [`training`]: losses, train step and the fit loop
//! - [`config`]: the serializable run configuration
//! - [`study`]: ablation and compression-ratio sweeps

pub mod compressor;
pub mod config;
pub mod corpus;
pub mod embeddings;
mod error;
pub mod hetgraph;
pub mod mgat;
pub mod model;
pub mod numeric;
pub mod rouge;
pub mod study;
pub mod text_model;
pub mod training;

pub use error::{Error, ErrorKind, Result};
