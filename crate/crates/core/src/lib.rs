//! Multi-language source-code corpus pipeline and code language-model
//! evaluation harness.
//!
//! The crate is organized the way data flows through it:
//!
//! * [`ingest`] turns a repository manifest into per-file records restricted to
//!   each repository's majority language, and builds decontaminated eval sets.
//! * [`filter`] applies size/length filters, exact content-hash dedup and
//!   per-language corpus statistics.
//! * [`lexer`] is a table-driven lexer for the twelve corpus languages; its token
//!   counts normalize perplexity across models with different tokenizers.
//! * [`bpe`] trains and applies a byte-level BPE tokenizer.
//! * [`backend`] abstracts language models (HTTP service or local n-gram) for
//!   sampling completions and scoring log-likelihoods.
//! * [`intrinsic`] computes lexer-normalized perplexity.
//! * [`extrinsic`] runs HumanEval-style functional-correctness evaluation and
//!   the unbiased pass@k estimator.
//! * [`report`] persists results and emits tabular/figure data.
//!
//! Numeric kernels are generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below pin the common choices.

pub mod backend;
pub mod bpe;
pub mod config;
pub mod error;
pub mod extrinsic;
pub mod filter;
pub mod ingest;
pub mod intrinsic;
pub mod language;
pub mod lexer;
pub mod report;
pub mod scalar;

pub use error::{Error, Result};
pub use language::LanguageId;
pub use scalar::Real;

/// Default floating-point type used by reports and the CLI.
pub type Float = f64;

/// Double-precision n-gram model (the default local backend model).
pub type NGram = backend::ngram::NGramModel<f64>;

/// Single-precision n-gram model.
pub type NGram32 = backend::ngram::NGramModel<f32>;

/// Tool version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
