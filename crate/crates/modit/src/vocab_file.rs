//! Plain-text vocabulary: a header line, the piece table one per line, then
//! the merge rules as `left right` pairs.
//!
//! ```text
//! modit-vocab 1
//! pieces 3
//! <s>
//! ...
//! merges 1
//! ▁a b
//! ```

use sha2::{Digest, Sha256};

use modit_core::tokenizer::Vocabulary;

use crate::FormatError;

const HEADER: &str = "modit-vocab 1";

pub fn vocab_to_string(v: &Vocabulary) -> String {
    let mut out = format!("{HEADER}\npieces {}\n", v.len());
    for p in v.pieces() {
        out.push_str(p);
        out.push('\n');
    }
    out.push_str(&format!("merges {}\n", v.merges().len()));
    for (l, r) in v.merges() {
        out.push_str(&format!("{l} {r}\n"));
    }
    out
}

/// Hex SHA-256 of the serialized vocabulary.
pub fn vocab_digest(v: &Vocabulary) -> String {
    let digest = Sha256::digest(vocab_to_string(v).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn vocab_from_str(text: &str) -> Result<Vocabulary, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let bad = |line: usize, message: String| FormatError::Line { line, message };
    let mut next = |what: &str| lines.next().ok_or_else(|| FormatError::Schema(format!("vocabulary ends before {what}")));

    let (_, header) = next("the header")?;
    if header != HEADER {
        return Err(FormatError::Version {
            found: header.to_string(),
            expected: HEADER.to_string(),
        });
    }
    let count = |line: usize, text: &str, key: &str| -> Result<usize, FormatError> {
        text.strip_prefix(key)
            .and_then(|s| s.strip_prefix(' '))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(line, format!("expected `{key} <count>`")))
    };
    let (n, line) = next("the piece count")?;
    let pieces_len = count(n, line, "pieces")?;
    let mut pieces = Vec::with_capacity(pieces_len);
    for _ in 0..pieces_len {
        pieces.push(next("the last piece")?.1.to_string());
    }
    let (n, line) = next("the merge count")?;
    let merges_len = count(n, line, "merges")?;
    let mut merges = Vec::with_capacity(merges_len);
    for _ in 0..merges_len {
        let (n, line) = next("the last merge")?;
        let (l, r) = line.split_once(' ').ok_or_else(|| bad(n, "expected `left right`".into()))?;
        merges.push((l.to_string(), r.to_string()));
    }
    if let Some((n, extra)) = lines.next() {
        if !extra.trim().is_empty() {
            return Err(bad(n, "unexpected content after the merge rules".into()));
        }
    }
    Ok(Vocabulary::from_parts(pieces, merges)?)
}
