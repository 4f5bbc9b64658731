//! Turning a record into model inputs for one modality configuration.

use alloc::string::String;
use alloc::vec::Vec;

use super::corpus::DatasetRecord;
use super::phi::{Modality, Phi};
use crate::model::{Seq2Seq, Variant};
use crate::tokenizer::{normalize_whitespace, Special, TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsolidateError {
    #[error("{phi} needs {field}, which record {id} lacks")]
    MissingModality { phi: Phi, field: &'static str, id: String },
    #[error("record {id}: span {start}..{end} outside a context of {len} tokens")]
    InvalidSpan { id: String, start: usize, end: usize, len: usize },
    #[error("record {id}: {what} of {len} tokens exceeds the limit of {max}")]
    TooLong { id: String, what: &'static str, len: usize, max: usize },
}

/// Model inputs plus the normalized text a correct prediction must match.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Consolidated {
    pub id: String,
    pub pair: Seq2Seq,
    pub expected: String,
}

fn encode_words(vocab: &Vocabulary, words: &[&str], out: &mut Vec<TokenId>) {
    for w in words {
        out.extend(vocab.encode(w));
    }
}

/// Builds the encoder segments (one per retained modality, in the order
/// e_p, G, C) and the `<s> … </s>` target.
///
/// Single-encoder and decoder-only models get the segments joined with
/// `<s>`; the multi-encoder keeps them apart. Context is cut from the end
/// when the input would exceed `max_len`.
pub fn consolidate(
    record: &DatasetRecord,
    phi: Phi,
    variant: Variant,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Consolidated, ConsolidateError> {
    let missing = |field: &'static str| ConsolidateError::MissingModality {
        phi,
        field,
        id: record.id.clone(),
    };
    let extraction = record.extraction.as_ref();

    let mut segments: Vec<Vec<TokenId>> = Vec::with_capacity(3);
    for m in phi.modalities() {
        let ids = match m {
            Modality::Edit => vocab.encode(&extraction.ok_or_else(|| missing("e_p"))?.e_p),
            Modality::Guidance => vocab.encode(&record.guidance),
            Modality::Context => {
                let words: Vec<&str> = record.code_before.split_whitespace().collect();
                if !phi.annotated() {
                    vocab.encode(&record.code_before)
                } else {
                    let (start, end) = extraction.ok_or_else(|| missing("span"))?.span;
                    if start >= end || end > words.len() {
                        return Err(ConsolidateError::InvalidSpan {
                            id: record.id.clone(),
                            start,
                            end,
                            len: words.len(),
                        });
                    }
                    let mut ids = Vec::new();
                    encode_words(vocab, &words[..start], &mut ids);
                    ids.push(Special::Start.id());
                    encode_words(vocab, &words[start..end], &mut ids);
                    ids.push(Special::End.id());
                    encode_words(vocab, &words[end..], &mut ids);
                    ids
                }
            }
        };
        if ids.is_empty() {
            return Err(missing(m.field()));
        }
        segments.push(ids);
    }

    let expected = if phi.full_code() {
        normalize_whitespace(&record.code_after)
    } else {
        normalize_whitespace(&extraction.ok_or_else(|| missing("e_n"))?.e_n)
    };
    let mut target = Vec::with_capacity(expected.len() + 2);
    target.push(Special::Bos.id());
    target.extend(vocab.encode(&expected));
    target.push(Special::Eos.id());
    if target.len() - 1 > max_len {
        return Err(ConsolidateError::TooLong {
            id: record.id.clone(),
            what: "target",
            len: target.len() - 1,
            max: max_len,
        });
    }

    let context = phi.context().then(|| segments.len() - 1);
    let segments = match variant {
        Variant::MultiEncoder => {
            if let Some(c) = context {
                truncate_tail(&mut segments[c], max_len, &record.id);
            }
            segments
        }
        Variant::SingleEncoder | Variant::DecoderOnly => {
            let budget = if variant == Variant::DecoderOnly {
                // source, <SEP> and all target ids but the last
                max_len.saturating_sub(target.len())
            } else {
                max_len
            };
            let fixed: usize = segments.iter().enumerate().filter(|&(i, _)| Some(i) != context).map(|(_, s)| s.len() + 1).sum();
            match context {
                Some(c) => {
                    let room = budget.checked_sub(fixed).filter(|&r| r > 0);
                    let Some(room) = room else {
                        return Err(ConsolidateError::TooLong {
                            id: record.id.clone(),
                            what: "input without context",
                            len: fixed,
                            max: budget,
                        });
                    };
                    truncate_tail(&mut segments[c], room, &record.id);
                }
                None if fixed - 1 > budget => {
                    return Err(ConsolidateError::TooLong {
                        id: record.id.clone(),
                        what: "input",
                        len: fixed - 1,
                        max: budget,
                    });
                }
                None => {}
            }
            let mut joined = Vec::new();
            for (i, s) in segments.iter().enumerate() {
                if i > 0 {
                    joined.push(Special::Bos.id());
                }
                joined.extend_from_slice(s);
            }
            alloc::vec![joined]
        }
    };
    Ok(Consolidated {
        id: record.id.clone(),
        pair: Seq2Seq { segments, target },
        expected,
    })
}

fn truncate_tail(ids: &mut Vec<TokenId>, max: usize, id: &str) {
    if ids.len() > max {
        log::warn!("record {id}: context cut from {} to {max} tokens", ids.len());
        ids.truncate(max);
    }
}
