//! Phrase-structure trees and their linearizations.

mod actions;
mod files;
mod transforms;
mod tree;
mod vocab;

pub use actions::{linearize, terminals_sequence, Action, ActionKind, ActionSequence};
pub use files::{read_documents, read_trees, write_trees};
pub use transforms::{reverse_structure, to_left_branching, to_right_branching};
pub use tree::{parse_bracketed, Tree};
pub use vocab::{build_vocab, vocab_ids, SymbolClass, Vocabulary};
