//! Corpus generation, input consolidation, training, evaluation and the
//! modality ablation harness.

mod ablation;
mod consolidate;
mod corpus;
mod eval;
mod phi;
mod train;

pub use ablation::{
    consolidate_all, run_ablation, subset_accuracy, AblationOutcome, CellResult, EvalReport, EvalRow, Split, SplitKind,
    VerdictRow,
};
pub use consolidate::{consolidate, ConsolidateError, Consolidated};
pub use corpus::{generate_corpus, vocabulary_corpus, DatasetRecord, EditFamily, Extraction};
pub use eval::{accuracy, evaluate_top1, predict, DecodeConfig, Verdict};
pub use phi::{Modality, Phi};
pub use train::{
    train, train_from, train_step, EarlyStopping, EpochLog, ExperimentConfig, Observation, StopReason, TrainConfig, TrainOutcome,
};

use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::tokenizer::TokenizerError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Consolidate(#[from] ConsolidateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("{0} is empty")]
    EmptySet(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("loss diverged to {loss} at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
}

#[cfg(test)]
mod tests;
