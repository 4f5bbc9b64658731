//! Leaf-level LCS diff and lowest common ancestors.

use alloc::vec;
use alloc::vec::Vec;

use super::syntax::{NodeId, SyntaxTree, Token};
use super::EditError;

/// Leaf indices outside the longest common subsequence of two token
/// sequences. Both lists are sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EditScript {
    /// Deleted or updated leaves of the before tree.
    pub before: Vec<usize>,
    /// Inserted or updated leaves of the after tree.
    pub after: Vec<usize>,
}

impl EditScript {
    pub fn is_empty(&self) -> bool {
        self.before.is_empty() && self.after.is_empty()
    }

    pub fn swapped(&self) -> EditScript {
        EditScript {
            before: self.after.clone(),
            after: self.before.clone(),
        }
    }
}

pub fn tree_diff(before: &SyntaxTree, after: &SyntaxTree) -> EditScript {
    diff_tokens(before.tokens(), after.tokens())
}

/// When two LCS alignments are equally long, the unmatched token that is
/// smaller by (kind, text) is skipped first. The choice depends only on the
/// pair of tokens, so swapping the inputs mirrors the script.
pub(crate) fn diff_tokens(a: &[Token], b: &[Token]) -> EditScript {
    let (n, m) = (a.len(), b.len());
    // lcs[i][j] = LCS length of a[i..] and b[j..]
    let w = m + 1;
    let mut lcs = vec![0u32; (n + 1) * w];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * w + j] = if a[i] == b[j] {
                lcs[(i + 1) * w + j + 1] + 1
            } else {
                lcs[(i + 1) * w + j].max(lcs[i * w + j + 1])
            };
        }
    }
    let mut script = EditScript::default();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            i += 1;
            j += 1;
            continue;
        }
        let skip_a = lcs[(i + 1) * w + j];
        let skip_b = lcs[i * w + j + 1];
        if skip_a > skip_b || (skip_a == skip_b && a[i] < b[j]) {
            script.before.push(i);
            i += 1;
        } else {
            script.after.push(j);
            j += 1;
        }
    }
    script.before.extend(i..n);
    script.after.extend(j..m);
    script
}

/// Lowest common ancestor of the given leaves. Since every interior node
/// has at least two children, it is also the unique node with the fewest
/// leaves among those covering the set.
pub fn minimal_encompassing_subtree(tree: &SyntaxTree, edited: &[usize]) -> Result<NodeId, EditError> {
    let leaves = tree.leaf_count();
    if let Some(&index) = edited.iter().find(|&&i| i >= leaves) {
        return Err(EditError::LeafOutOfRange { index, leaves });
    }
    let lo = *edited.iter().min().ok_or(EditError::NoEdits)?;
    let hi = *edited.iter().max().ok_or(EditError::NoEdits)?;
    // Span containment is equivalent to covering every leaf in [lo, hi].
    let found = tree
        .ancestors(tree.leaf_node(lo))
        .find(|&id| tree.node(id).span.1 > hi)
        .expect("the root spans every leaf");
    Ok(found)
}
