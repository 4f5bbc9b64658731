//! Top-1 exact-match evaluation.

use alloc::string::String;
use alloc::vec::Vec;

use super::consolidate::Consolidated;
use super::PipelineError;
use crate::model::{Inference, Model, ModelParameters};
use crate::tokenizer::{normalize_whitespace, Vocabulary};

/// Decoding settings shared by validation and evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeConfig {
    pub beam: usize,
    pub max_len: usize,
    pub length_penalty: f64,
}

impl DecodeConfig {
    pub fn beam(beam: usize, max_len: usize) -> Self {
        DecodeConfig {
            beam,
            max_len,
            length_penalty: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub id: String,
    pub prediction: String,
    pub expected: String,
    pub correct: bool,
}

/// Rank-1 beam hypothesis as normalized text.
pub fn predict(inference: &Inference<'_>, vocab: &Vocabulary, record: &Consolidated, decode: DecodeConfig) -> Result<String, PipelineError> {
    let hyps = inference.beam_search(&record.pair.segments, decode.beam, decode.max_len, decode.length_penalty)?;
    let best = hyps.first().map_or(&[][..], |h| h.patch());
    Ok(normalize_whitespace(&vocab.decode(best)?))
}

/// One verdict per record, in input order. A prediction is correct when
/// its detokenized, whitespace-normalized text equals the expected text.
pub fn evaluate_top1(
    model: &Model,
    params: &ModelParameters,
    vocab: &Vocabulary,
    records: &[Consolidated],
    decode: DecodeConfig,
) -> Result<Vec<Verdict>, PipelineError> {
    let inference = Inference::new(model, params);
    records
        .iter()
        .map(|r| {
            let prediction = predict(&inference, vocab, r, decode)?;
            let correct = prediction == r.expected;
            Ok(Verdict {
                id: r.id.clone(),
                prediction,
                expected: r.expected.clone(),
                correct,
            })
        })
        .collect()
}

/// Percentage of correct verdicts; 0 for an empty set.
pub fn accuracy(verdicts: &[Verdict]) -> f64 {
    if verdicts.is_empty() {
        return 0.0;
    }
    100.0 * verdicts.iter().filter(|v| v.correct).count() as f64 / verdicts.len() as f64
}
