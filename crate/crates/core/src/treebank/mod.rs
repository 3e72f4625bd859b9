//! Bracketed parse trees, binarization and tree shapes.

mod grammar;
mod parse;
mod shape;
mod tree;

pub use grammar::Grammar;
pub use parse::{parse_bracketed, parse_syntax, ParseOptions, ParseStats, Treebank};
pub use shape::{catalan_count, enumerate_shapes, Skeleton, SkeletonNode, TreeShape, MAX_ENUMERATED_LEAVES};
pub use tree::{binarize, BinarizePolicy, Coord, NodeView, ParseTree, SyntaxTree};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreebankError {
    #[error("unbalanced brackets at byte {0}")]
    UnbalancedBrackets(usize),
    #[error("empty node at byte {0}")]
    EmptyNode(usize),
    #[error("node at byte {0} does not have exactly two children")]
    NonBinaryNode(usize),
    #[error("trace or empty element at byte {0}")]
    TraceToken(usize),
    #[error("unexpected token at byte {0}")]
    UnexpectedToken(usize),
    #[error("invalid tree shape `{0}`")]
    InvalidShape(String),
    #[error("shape enumeration limited to {max} leaves, got {requested}")]
    LimitExceeded { requested: usize, max: usize },
    #[error("word count must be at least 1")]
    ZeroLength,
}
