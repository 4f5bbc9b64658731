//! Edit extraction over MiniLang: parse both versions of a function, diff
//! their token leaves and locate the smallest subtrees covering the change.

mod diff;
mod example;
mod syntax;

use alloc::string::String;

pub use diff::{minimal_encompassing_subtree, tree_diff, EditScript};
pub use example::{annotate_context, build_example, splice, strip_markers, EditExample};
pub use syntax::{join_tokens, lex, parse, Ancestors, Node, NodeId, NodeKind, SyntaxTree, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EditError {
    #[error("lex error at byte {offset}: unexpected character {found:?}")]
    Lex { offset: usize, found: char },
    #[error("parse error at token {position}: expected {expected}, found {}", found.as_deref().unwrap_or("end of input"))]
    Parse {
        position: usize,
        expected: String,
        found: Option<String>,
    },
    #[error("parse error at token {position}: `{{` opened at token {open_at} is never closed (found {})", found.as_deref().unwrap_or("end of input"))]
    UnclosedBrace {
        open_at: usize,
        position: usize,
        found: Option<String>,
    },
    #[error("no edits")]
    NoEdits,
    #[error("leaf index {index} out of range for a tree with {leaves} leaves")]
    LeafOutOfRange { index: usize, leaves: usize },
    #[error("no change")]
    NoChange,
    #[error("guidance is empty")]
    EmptyGuidance,
    #[error("span {start}..{end} invalid for a context of {len} tokens")]
    InvalidSpan { start: usize, end: usize, len: usize },
}

#[cfg(test)]
pub(crate) mod test_programs;
