//! Transformer encoder-decoder in three arrangements (one shared encoder,
//! one encoder per modality, or a single causal stack), with greedy and
//! beam-search decoding.

mod decode;
mod forward;
mod params;

use alloc::string::String;
use alloc::vec::Vec;

use crate::numerics::{Activation, NumericsError};
use crate::tokenizer::TokenId;

pub use decode::{Hypothesis, Inference};
pub use forward::{AttentionKind, AttentionMap, Forward, LayerCache, Memory, Probe};
pub use params::{Model, ModelParameters};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    SingleEncoder,
    MultiEncoder,
    DecoderOnly,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::SingleEncoder, Variant::MultiEncoder, Variant::DecoderOnly];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SingleEncoder => "single_encoder",
            Variant::MultiEncoder => "multi_encoder",
            Variant::DecoderOnly => "decoder_only",
        }
    }

    pub fn from_name(name: &str) -> Option<Variant> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ffn: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub vocab_size: usize,
    /// Number of encoder stacks for the multi-encoder variant.
    pub modalities: usize,
    pub activation: Activation,
    /// Adds sinusoidal position encodings to the embeddings.
    pub positional: bool,
}

impl ModelConfig {
    /// Small configuration that trains in minutes on one core.
    pub fn desk(variant: Variant, vocab_size: usize) -> Self {
        ModelConfig {
            variant,
            encoder_layers: 2,
            decoder_layers: 2,
            d_model: 64,
            heads: 4,
            ffn: 256,
            dropout: 0.1,
            max_len: 256,
            vocab_size,
            modalities: 3,
            activation: Activation::Gelu,
            positional: true,
        }
    }

    /// Transformer-base shape with six encoder and six decoder layers.
    pub fn base(variant: Variant, vocab_size: usize) -> Self {
        ModelConfig {
            encoder_layers: 6,
            decoder_layers: 6,
            d_model: 512,
            heads: 8,
            ffn: 2048,
            max_len: 512,
            ..Self::desk(variant, vocab_size)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Number of encoder stacks the variant owns.
    pub fn encoder_stacks(&self) -> usize {
        match self.variant {
            Variant::SingleEncoder => 1,
            Variant::MultiEncoder => self.modalities,
            Variant::DecoderOnly => 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: &'static str| Err(ModelError::InvalidConfig(msg));
        if self.d_model == 0 || self.heads == 0 || self.ffn == 0 || self.max_len == 0 {
            return fail("widths, head count and max_len must be positive");
        }
        if self.d_model % self.heads != 0 {
            return fail("d_model must be divisible by heads");
        }
        if self.decoder_layers == 0 || (self.variant != Variant::DecoderOnly && self.encoder_layers == 0) {
            return fail("layer counts must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.vocab_size <= crate::tokenizer::Special::End.id() as usize {
            return fail("vocabulary must include the special tokens");
        }
        if self.variant == Variant::MultiEncoder && self.modalities == 0 {
            return fail("multi-encoder needs at least one modality");
        }
        Ok(())
    }
}

/// Encoder inputs (one id sequence per modality, or a single joined
/// sequence) and the gold target `<s> … </s>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seq2Seq {
    pub segments: Vec<Vec<TokenId>>,
    pub target: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("expected {expected} input segments, got {found}")]
    ModalityCount { expected: usize, found: usize },
    #[error("joined sequence must contain exactly one <SEP>, found {found}")]
    Separator { found: usize },
    #[error("source is empty")]
    EmptySource,
    #[error("decoder prefix must start with <s>")]
    PrefixStart,
    #[error("target must be <s> … </s> with at least one predicted token")]
    MalformedTarget,
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: TokenId, vocab: usize },
    #[error("sequence of {len} tokens exceeds max_len {max}")]
    TooLong { len: usize, max: usize },
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("unexpected parameter {0}")]
    UnexpectedParameter(String),
    #[error("parameter {name} has shape {found:?}, expected {expected:?}")]
    ParameterShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("beam size must be at least 1")]
    BeamSize,
}

#[cfg(test)]
mod tests;
