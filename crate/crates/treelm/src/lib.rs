//! Syntactic language modeling over linearized phrase-structure trees.
//!
//! The library covers the full pipeline at desk scale:
//!
//! - [`treebank`]: bracketed-tree parsing, action-sequence linearization with
//!   closing-symbol duplication, structural transforms, vocabulary building.
//! - [`maskgen`]: stack/compose attention masks and tree-depth relative
//!   positions for duplicated sequences, plus plain causal masks.
//! - [`segmenter`]: fixed-length segmentation with a pruned recurrent memory
//!   that keeps exactly the positions that may still be attended.
//! - [`model`]: a small trainable transformer with relative-position
//!   attention, teacher-forced scoring, ancestral sampling, and a
//!   finite-difference gradient check.
//! - [`evalsuite`]: marginalized perplexity bounds over proposal trees, parse
//!   reranking with labeled bracketing F1, inequality-based syntactic test
//!   suites, and per-token model comparison dumps.
//! - [`synth`]: small probabilistic grammars for generating corpora and
//!   enumerating candidate parses in tests and examples.
//!
//! The `treelm` binary exposes the same operations as subcommands; the
//! `examples/` directory contains one runnable example per capability.

pub mod cli;
pub mod error;
pub mod evalsuite;
pub mod maskgen;
pub mod model;
pub mod segmenter;
pub mod synth;
pub mod treebank;

pub use error::{Error, Result};
pub use maskgen::{AttentionKind, InputView, MaskBundle, MaskMode, PositionScheme, StepSeq};
pub use model::{Model, ModelConfig, TrainConfig};
pub use treebank::{ActionSequence, Tree, Vocabulary};
