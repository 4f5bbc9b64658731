//! Greedy byte-pair subword tokenizer with a word-start marker.
//!
//! Text is split on whitespace; each word becomes a sequence of characters
//! whose first character carries [`WORD_START`]. Training repeatedly merges
//! the most frequent adjacent pair. Because the marker only ever appears at
//! the front of a word, merges never cross word boundaries and decoding can
//! restore the whitespace-normalized text exactly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// Reserved word-start marker (never expected in corpus text).
pub const WORD_START: char = '\u{2581}';

pub type TokenId = u32;

/// Reserved tokens, occupying ids `0..Special::ALL.len()` in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Special {
    Bos,
    Eos,
    Pad,
    Unk,
    Sep,
    Start,
    End,
}

impl Special {
    pub const ALL: [Special; 7] = [
        Special::Bos,
        Special::Eos,
        Special::Pad,
        Special::Unk,
        Special::Sep,
        Special::Start,
        Special::End,
    ];

    pub const fn id(self) -> TokenId {
        self as TokenId
    }

    pub const fn text(self) -> &'static str {
        match self {
            Special::Bos => "<s>",
            Special::Eos => "</s>",
            Special::Pad => "<pad>",
            Special::Unk => "<unk>",
            Special::Sep => "<SEP>",
            Special::Start => "<START>",
            Special::End => "<END>",
        }
    }

    pub fn from_id(id: TokenId) -> Option<Special> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn from_text(text: &str) -> Option<Special> {
        Self::ALL.iter().copied().find(|s| s.text() == text)
    }
}

impl fmt::Display for Special {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizerError {
    #[error("cannot train a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("token id {id} is outside the vocabulary (size {size})")]
    InvalidId { id: TokenId, size: usize },
    #[error("piece table must start with the special tokens; slot {slot} holds {found:?}")]
    MissingSpecial { slot: usize, found: String },
    #[error("duplicate piece {0:?}")]
    DuplicatePiece(String),
    #[error("piece {0:?} is empty or contains whitespace")]
    MalformedPiece(String),
    #[error("merge rule {index} ({left:?} + {right:?}) references a piece missing from the table")]
    UnknownMergePiece { index: usize, left: String, right: String },
}

/// Whitespace-normalized form: tokens separated by single spaces.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, w) in text.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// Initial symbols of a word: marker-prefixed first character, then the
/// remaining characters one by one.
fn initial_symbols(word: &str) -> Vec<String> {
    let mut chars = word.chars();
    let mut out = Vec::with_capacity(word.chars().count());
    if let Some(c) = chars.next() {
        let mut first = String::new();
        first.push(WORD_START);
        first.push(c);
        out.push(first);
    }
    out.extend(chars.map(|c| c.to_string()));
    out
}

/// Trained subword inventory.
#[derive(Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    index: BTreeMap<String, TokenId>,
    merges: Vec<(String, String)>,
    /// (left id, right id) → (rank, merged id)
    merge_table: BTreeMap<(TokenId, TokenId), (usize, TokenId)>,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("pieces", &self.pieces.len())
            .field("merges", &self.merges.len())
            .finish()
    }
}

impl Vocabulary {
    /// Learns `n_merges` merge rules from `corpus`.
    ///
    /// Each round merges the adjacent pair with the highest corpus frequency;
    /// ties go to the lexicographically smallest merged string, then the
    /// smallest left piece. Training stops early once no pair remains.
    pub fn train<S: AsRef<str>>(corpus: &[S], n_merges: usize) -> Result<Self, TokenizerError> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for text in corpus {
            for w in text.as_ref().split_whitespace() {
                *counts.entry(w).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }

        let mut words: Vec<(Vec<String>, usize)> =
            counts.iter().map(|(w, &c)| (initial_symbols(w), c)).collect();
        let alphabet: BTreeSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();

        let mut pieces: Vec<String> = Special::ALL.iter().map(|s| s.text().to_string()).collect();
        let mut known: BTreeSet<String> = pieces.iter().cloned().collect();
        for a in alphabet {
            if known.insert(a.clone()) {
                pieces.push(a);
            }
        }

        let mut merges = Vec::with_capacity(n_merges);
        while merges.len() < n_merges {
            let mut pair_counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for (syms, c) in &words {
                for w in syms.windows(2) {
                    *pair_counts.entry((w[0].as_str(), w[1].as_str())).or_default() += c;
                }
            }
            let mut best: Option<((&str, &str), usize, String)> = None;
            for (&(l, r), &c) in &pair_counts {
                let mut merged = String::with_capacity(l.len() + r.len());
                merged.push_str(l);
                merged.push_str(r);
                if Special::from_text(&merged).is_some() {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((bp, bc, bm)) => c > *bc || (c == *bc && (merged.as_str(), l) < (bm.as_str(), bp.0)),
                };
                if better {
                    best = Some(((l, r), c, merged));
                }
            }
            let Some(((l, r), _, merged)) = best else { break };
            let (l, r) = (l.to_string(), r.to_string());
            drop(pair_counts);

            for (syms, _) in &mut words {
                apply_merge(syms, &l, &r, &merged);
            }
            if known.insert(merged.clone()) {
                pieces.push(merged);
            }
            merges.push((l, r));
        }
        Self::from_parts(pieces, merges)
    }

    /// Rebuilds a vocabulary from its piece table and ordered merge list,
    /// validating both.
    pub fn from_parts(pieces: Vec<String>, merges: Vec<(String, String)>) -> Result<Self, TokenizerError> {
        for (slot, s) in Special::ALL.iter().enumerate() {
            match pieces.get(slot) {
                Some(p) if p == s.text() => {}
                other => {
                    return Err(TokenizerError::MissingSpecial {
                        slot,
                        found: other.cloned().unwrap_or_default(),
                    })
                }
            }
        }
        let mut index = BTreeMap::new();
        for (id, p) in pieces.iter().enumerate() {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                return Err(TokenizerError::MalformedPiece(p.clone()));
            }
            if index.insert(p.clone(), id as TokenId).is_some() {
                return Err(TokenizerError::DuplicatePiece(p.clone()));
            }
        }
        let mut merge_table = BTreeMap::new();
        for (rank, (l, r)) in merges.iter().enumerate() {
            let mut merged = l.clone();
            merged.push_str(r);
            let unknown = || TokenizerError::UnknownMergePiece {
                index: rank,
                left: l.clone(),
                right: r.clone(),
            };
            let li = *index.get(l).ok_or_else(unknown)?;
            let ri = *index.get(r).ok_or_else(unknown)?;
            let mi = *index.get(&merged).ok_or_else(unknown)?;
            if li < Special::ALL.len() as TokenId || ri < Special::ALL.len() as TokenId {
                return Err(unknown());
            }
            merge_table.entry((li, ri)).or_insert((rank, mi));
        }
        Ok(Vocabulary {
            pieces,
            index,
            merges,
            merge_table,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn id(&self, piece: &str) -> Option<TokenId> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: TokenId) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    /// Encodes raw text. Special ids are never produced from text content;
    /// characters outside the trained alphabet become `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for w in text.split_whitespace() {
            self.encode_word_into(w, &mut out);
        }
        out
    }

    fn encode_word_into(&self, word: &str, out: &mut Vec<TokenId>) {
        let unk = Special::Unk.id();
        let mut syms: Vec<TokenId> = initial_symbols(word)
            .iter()
            .map(|s| match self.index.get(s) {
                Some(&id) if id >= Special::ALL.len() as TokenId => id,
                _ => unk,
            })
            .collect();
        // Applying the lowest-ranked available pair first is equivalent to
        // replaying the rules in training order: a rule's inputs are always
        // produced by strictly earlier rules.
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| self.merge_table.get(&(w[0], w[1])).map(|&(rank, m)| (rank, w[0], w[1], m)))
                .min();
            let Some((_, l, r, m)) = best else { break };
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
                    merged.push(m);
                    i += 2;
                } else {
                    merged.push(syms[i]);
                    i += 1;
                }
            }
            syms = merged;
        }
        out.extend(syms);
    }

    /// Reassembles subword pieces into whitespace-separated code tokens.
    ///
    /// `<s>`, `</s>` and `<pad>` are dropped; the remaining specials render
    /// as their literal text as standalone tokens.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        let mut in_word = false;
        let start_word = |out: &mut String, in_word: &mut bool| {
            if !out.is_empty() {
                out.push(' ');
            }
            *in_word = true;
        };
        for &id in ids {
            let piece = self.piece(id).ok_or(TokenizerError::InvalidId {
                id,
                size: self.len(),
            })?;
            match Special::from_id(id) {
                Some(Special::Bos | Special::Eos | Special::Pad) => {}
                Some(s) => {
                    start_word(&mut out, &mut in_word);
                    out.push_str(s.text());
                    in_word = false;
                }
                None => {
                    if let Some(rest) = piece.strip_prefix(WORD_START) {
                        start_word(&mut out, &mut in_word);
                        out.push_str(rest);
                    } else {
                        if !in_word {
                            start_word(&mut out, &mut in_word);
                        }
                        out.push_str(piece);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn apply_merge(syms: &mut Vec<String>, l: &str, r: &str, merged: &str) {
    if syms.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
            out.push(merged.to_string());
            i += 2;
        } else {
            out.push(core::mem::take(&mut syms[i]));
            i += 1;
        }
    }
    *syms = out;
}
