//! Structural analysis of detected handwritten math symbols.
//!
//! The pipeline takes per-symbol detections ([`detections`]), derives pairwise
//! geometric features ([`geometry`]), classifies spatial relations with a
//! configurable rule table ([`relations`]), assembles a baseline symbol
//! relationship tree ([`tree`]) and serializes it as LaTeX tokens
//! ([`emitter`]). [`metrics`] scores token sequences, [`synth`] generates
//! layouts with known answers, [`preprocess`] binarizes grayscale images and
//! [`fixtures`] checks the versioned example corpus.

pub mod detections;
pub mod emitter;
pub mod fixtures;
pub mod geometry;
pub mod metrics;
pub mod preprocess;
pub mod relations;
pub mod synth;
pub mod tree;

use thiserror::Error;

pub use detections::{Expression, SymbolBox, Vocabulary};
pub use emitter::{emit_latex, tokenize_latex, TokenSequence};
pub use relations::{default_config, RelationLabel, RuleConfig};
pub use tree::{build_tree, Bsrt};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecognizeError {
    #[error(transparent)]
    Tree(#[from] tree::TreeError),
    #[error(transparent)]
    Emit(#[from] emitter::EmitError),
}

/// Builds the tree for one symbol set and emits its tokens.
pub fn recognize(
    symbols: &[SymbolBox],
    config: &RuleConfig,
) -> Result<(Bsrt, TokenSequence), RecognizeError> {
    let tree = build_tree(symbols, config)?;
    let tokens = emit_latex(&tree)?;
    Ok((tree, tokens))
}
