//! JSON experiment configuration. Every field is optional; missing ones
//! take the desk defaults for the chosen Φ and variant.

use serde::{Deserialize, Serialize};

use modit_core::model::{ModelConfig, Variant};
use modit_core::numerics::Activation;
use modit_core::pipeline::{DecodeConfig, ExperimentConfig, Phi, TrainConfig};

use crate::FormatError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub encoder_layers: Option<usize>,
    pub decoder_layers: Option<usize>,
    pub d_model: Option<usize>,
    pub heads: Option<usize>,
    pub ffn: Option<usize>,
    pub dropout: Option<f64>,
    pub max_len: Option<usize>,
    /// "gelu" or "relu".
    pub activation: Option<String>,
    pub positional: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub label_smoothing: Option<f64>,
    pub seed: Option<u64>,
    pub stop_when_perfect: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeSection {
    pub beam: Option<usize>,
    pub max_len: Option<usize>,
    pub length_penalty: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub decode: DecodeSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile, FormatError> {
        serde_json::from_str(text).map_err(|e| FormatError::Schema(format!("config: {e}")))
    }

    /// Desk defaults overridden by whatever the file sets.
    pub fn resolve(&self, phi: Phi, variant: Variant, vocab_size: usize) -> Result<ExperimentConfig, FormatError> {
        let mut c = ExperimentConfig::desk(phi, variant, vocab_size);
        let m = &self.model;
        let model = &mut c.model;
        set(&mut model.encoder_layers, m.encoder_layers);
        set(&mut model.decoder_layers, m.decoder_layers);
        set(&mut model.d_model, m.d_model);
        set(&mut model.heads, m.heads);
        set(&mut model.ffn, m.ffn);
        set(&mut model.dropout, m.dropout);
        set(&mut model.max_len, m.max_len);
        set(&mut model.positional, m.positional);
        if let Some(a) = &m.activation {
            model.activation = parse_activation(a)?;
        }
        model.validate().map_err(|e| FormatError::Schema(e.to_string()))?;
        // The learning-rate default depends on the final model shape.
        c.train = TrainConfig::for_model(&c.model);
        let t = &self.train;
        set(&mut c.train.lr, t.lr);
        set(&mut c.train.max_epochs, t.max_epochs);
        set(&mut c.train.patience, t.patience);
        set(&mut c.train.batch_size, t.batch_size);
        set(&mut c.train.label_smoothing, t.label_smoothing);
        set(&mut c.train.seed, t.seed);
        set(&mut c.train.stop_when_perfect, t.stop_when_perfect);
        set(&mut c.decode.beam, self.decode.beam);
        set(&mut c.decode.max_len, self.decode.max_len);
        set(&mut c.decode.length_penalty, self.decode.length_penalty);
        if c.decode.beam == 0 {
            return Err(FormatError::Schema("decode.beam must be at least 1".into()));
        }
        if c.train.batch_size == 0 {
            return Err(FormatError::Schema("train.batch_size must be at least 1".into()));
        }
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn parse_activation(s: &str) -> Result<Activation, FormatError> {
    match s {
        "gelu" => Ok(Activation::Gelu),
        "relu" => Ok(Activation::Relu),
        other => Err(FormatError::Schema(format!("unknown activation {other:?}"))),
    }
}

pub fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Gelu => "gelu",
        Activation::Relu => "relu",
    }
}

/// Fully specified form stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredConfig {
    pub phi: String,
    pub variant: String,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ffn: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub vocab_size: usize,
    pub modalities: usize,
    pub activation: String,
    pub positional: bool,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub seed: u64,
    pub stop_when_perfect: bool,
    pub beam: usize,
    pub decode_max_len: usize,
    pub length_penalty: f64,
}

impl From<&ExperimentConfig> for StoredConfig {
    fn from(c: &ExperimentConfig) -> Self {
        let m = &c.model;
        StoredConfig {
            phi: c.phi.id().into(),
            variant: m.variant.name().into(),
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            d_model: m.d_model,
            heads: m.heads,
            ffn: m.ffn,
            dropout: m.dropout,
            max_len: m.max_len,
            vocab_size: m.vocab_size,
            modalities: m.modalities,
            activation: activation_name(m.activation).into(),
            positional: m.positional,
            lr: c.train.lr,
            max_epochs: c.train.max_epochs,
            patience: c.train.patience,
            batch_size: c.train.batch_size,
            label_smoothing: c.train.label_smoothing,
            seed: c.train.seed,
            stop_when_perfect: c.train.stop_when_perfect,
            beam: c.decode.beam,
            decode_max_len: c.decode.max_len,
            length_penalty: c.decode.length_penalty,
        }
    }
}

impl TryFrom<&StoredConfig> for ExperimentConfig {
    type Error = FormatError;

    fn try_from(s: &StoredConfig) -> Result<Self, FormatError> {
        let phi = Phi::from_id(&s.phi).ok_or_else(|| FormatError::Schema(format!("unknown phi {:?}", s.phi)))?;
        let variant =
            Variant::from_name(&s.variant).ok_or_else(|| FormatError::Schema(format!("unknown variant {:?}", s.variant)))?;
        let model = ModelConfig {
            variant,
            encoder_layers: s.encoder_layers,
            decoder_layers: s.decoder_layers,
            d_model: s.d_model,
            heads: s.heads,
            ffn: s.ffn,
            dropout: s.dropout,
            max_len: s.max_len,
            vocab_size: s.vocab_size,
            modalities: s.modalities,
            activation: parse_activation(&s.activation)?,
            positional: s.positional,
        };
        model.validate().map_err(|e| FormatError::Schema(e.to_string()))?;
        Ok(ExperimentConfig {
            phi,
            model,
            train: TrainConfig {
                lr: s.lr,
                max_epochs: s.max_epochs,
                patience: s.patience,
                batch_size: s.batch_size,
                label_smoothing: s.label_smoothing,
                seed: s.seed,
                stop_when_perfect: s.stop_when_perfect,
            },
            decode: DecodeConfig {
                beam: s.beam,
                max_len: s.decode_max_len,
                length_penalty: s.length_penalty,
            },
        })
    }
}
