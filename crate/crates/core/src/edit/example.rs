//! Building (e_p, e_n, C, G) records from before/after function pairs.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::diff::{minimal_encompassing_subtree, tree_diff};
use super::syntax::{parse, NodeId, SyntaxTree};
use super::EditError;
use crate::tokenizer::Special;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditExample {
    /// Code to be edited.
    pub e_p: String,
    /// Code after the edit.
    pub e_n: String,
    /// Whole before-edit function, whitespace-normalized.
    pub context: String,
    pub guidance: String,
    /// Half-open token range of `e_p` within `context`.
    pub span: (usize, usize),
}

impl EditExample {
    pub fn context_tokens(&self) -> Vec<&str> {
        self.context.split_whitespace().collect()
    }
}

/// Extracts the edited region of a before/after pair.
///
/// Each side starts from the lowest common ancestor of its edited leaves. If
/// splicing `e_n` over `e_p` in the before code does not reproduce the after
/// code, both sides widen along their ancestor chains until it does; the
/// pair with the fewest total leaves wins. A side with no edited leaves (a
/// pure insertion or deletion) may use any of its nodes.
pub fn build_example(before: &str, after: &str, guidance: &str) -> Result<EditExample, EditError> {
    if guidance.trim().is_empty() {
        return Err(EditError::EmptyGuidance);
    }
    let tb = parse(before)?;
    let ta = parse(after)?;
    let script = tree_diff(&tb, &ta);
    if script.is_empty() {
        return Err(EditError::NoChange);
    }
    let candidates = |tree: &SyntaxTree, edited: &[usize]| -> Result<Vec<NodeId>, EditError> {
        if edited.is_empty() {
            Ok((0..tree.nodes().len()).collect())
        } else {
            let lca = minimal_encompassing_subtree(tree, edited)?;
            Ok(tree.ancestors(lca).collect())
        }
    };
    let cb = candidates(&tb, &script.before)?;
    let ca = candidates(&ta, &script.after)?;

    let (xb, xa) = (tb.tokens(), ta.tokens());
    let prefix = xb.iter().zip(xa).take_while(|(p, q)| p == q).count();
    let suffix = xb.iter().rev().zip(xa.iter().rev()).take_while(|(p, q)| p == q).count();

    let mut best: Option<((usize, usize, usize, usize), NodeId, NodeId)> = None;
    for &nb in &cb {
        let (sb, eb) = tb.node(nb).span;
        for &na in &ca {
            let (sa, ea) = ta.node(na).span;
            let tail = xb.len() - eb;
            if sb != sa || sb > prefix || tail != xa.len() - ea || tail > suffix {
                continue;
            }
            let key = (eb - sb + ea - sa, eb - sb, sb, ea);
            if best.as_ref().map_or(true, |(k, _, _)| key < *k) {
                best = Some((key, nb, na));
            }
        }
    }
    let (_, nb, na) = best.expect("the two roots are always consistent");
    Ok(EditExample {
        e_p: tb.unparse_node(nb),
        e_n: ta.unparse_node(na),
        context: tb.unparse(),
        guidance: guidance.to_string(),
        span: tb.node(nb).span,
    })
}

/// The context with `<START>` before and `<END>` after the `e_p` span.
pub fn annotate_context(example: &EditExample) -> Result<String, EditError> {
    let tokens = example.context_tokens();
    let (start, end) = example.span;
    if start >= end || end > tokens.len() {
        return Err(EditError::InvalidSpan {
            start,
            end,
            len: tokens.len(),
        });
    }
    let mut out: Vec<&str> = Vec::with_capacity(tokens.len() + 2);
    out.extend_from_slice(&tokens[..start]);
    out.push(Special::Start.text());
    out.extend_from_slice(&tokens[start..end]);
    out.push(Special::End.text());
    out.extend_from_slice(&tokens[end..]);
    Ok(out.join(" "))
}

/// Removes `<START>`/`<END>` words from an annotated context.
pub fn strip_markers(annotated: &str) -> String {
    let kept: Vec<&str> = annotated
        .split_whitespace()
        .filter(|w| *w != Special::Start.text() && *w != Special::End.text())
        .collect();
    kept.join(" ")
}

/// `context` with the token range `span` replaced by `replacement`.
pub fn splice(context: &str, span: (usize, usize), replacement: &str) -> String {
    let tokens: Vec<&str> = context.split_whitespace().collect();
    let mut out: Vec<&str> = Vec::with_capacity(tokens.len());
    out.extend_from_slice(&tokens[..span.0]);
    out.extend(replacement.split_whitespace());
    out.extend_from_slice(&tokens[span.1..]);
    out.join(" ")
}
