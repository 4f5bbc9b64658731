//! Minibatch training with per-epoch beam validation and early stopping.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::consolidate::Consolidated;
use super::eval::{accuracy, evaluate_top1, DecodeConfig};
use super::phi::Phi;
use super::PipelineError;
use crate::model::{Forward, Model, ModelConfig, ModelParameters, Variant};
use crate::numerics::{adam_step, AdamConfig, AdamState, Graph, Ops};
use crate::tokenizer::Vocabulary;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without a strictly better validation score before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub seed: u64,
    /// Stop as soon as validation reaches 100%.
    pub stop_when_perfect: bool,
}

impl TrainConfig {
    /// 5e-5 at transformer-base scale, 1e-3 for anything smaller.
    pub fn for_model(model: &ModelConfig) -> Self {
        let base_scale = model.d_model >= 512 && model.encoder_layers >= 6 && model.decoder_layers >= 6;
        TrainConfig {
            lr: if base_scale { 5e-5 } else { 1e-3 },
            max_epochs: 30,
            patience: 5,
            batch_size: 16,
            label_smoothing: 0.1,
            seed: 0,
            stop_when_perfect: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub phi: Phi,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
}

impl ExperimentConfig {
    /// Desk-scale model, beam 5, and a decode limit that fits whole
    /// functions in full-code mode.
    pub fn desk(phi: Phi, variant: Variant, vocab_size: usize) -> Self {
        let mut model = ModelConfig::desk(variant, vocab_size);
        model.modalities = phi.modality_count();
        let train = TrainConfig::for_model(&model);
        ExperimentConfig {
            phi,
            model,
            train,
            decode: DecodeConfig::beam(5, if phi.full_code() { 160 } else { 64 }),
        }
    }

    /// Same settings for another cell of an ablation.
    pub fn with_cell(&self, phi: Phi, variant: Variant) -> Self {
        let mut c = self.clone();
        if phi.full_code() != self.phi.full_code() {
            c.decode.max_len = if phi.full_code() { self.decode.max_len.max(160) } else { 64.min(self.decode.max_len) };
        }
        c.phi = phi;
        c.model.variant = variant;
        c.model.modalities = phi.modality_count();
        c
    }
}

/// Patience bookkeeping. A score equal to the best so far still becomes
/// the retained checkpoint (the later epoch wins) but does not reset the
/// patience counter.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    since_best: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub keep: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, score: f64) -> Observation {
        let keep = self.best.map_or(true, |b| score >= b);
        if self.best.map_or(true, |b| score > b) {
            self.best = Some(score);
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        Observation {
            keep,
            stop: self.since_best >= self.patience,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-token loss over the epoch.
    pub loss: f64,
    pub valid_accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Perfect,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub params: ModelParameters,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub stop: StopReason,
}

/// One optimizer step over `batch`; returns the token-weighted mean loss.
pub fn train_step(
    model: &Model,
    params: &mut ModelParameters,
    adam: &mut AdamState,
    adam_config: &AdamConfig,
    batch: &[&Consolidated],
    label_smoothing: f64,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<f64, PipelineError> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, params);
    let total = {
        let mut fwd = Forward::new(model, &mut g, &vars);
        if let Some(rng) = dropout {
            fwd = fwd.with_dropout(rng);
        }
        let mut parts = Vec::with_capacity(batch.len());
        let mut tokens = 0usize;
        for r in batch {
            let (loss, n) = fwd.loss(&r.pair, label_smoothing)?;
            parts.push((loss, n));
            tokens += n;
        }
        let ops = fwd.ops();
        let mut total = None;
        for (loss, n) in parts {
            let weighted = ops.scale(&loss, n as f64 / tokens as f64);
            total = Some(match total {
                None => weighted,
                Some(t) => ops.add(&t, &weighted)?,
            });
        }
        total.ok_or(PipelineError::EmptySet("batch"))?
    };
    let loss = g.value(&total).item();
    if !loss.is_finite() {
        return Ok(loss);
    }
    g.backward(total)?;
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| g.take_grad(v).unwrap_or_else(|| alloc::vec![0.0; t.numel()]))
        .collect();
    let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
    adam_step(params.tensors_mut(), &refs, adam, adam_config)?;
    Ok(loss)
}

/// Trains from a seeded initialization, validating with beam search after
/// every epoch and keeping the best checkpoint.
pub fn train(
    config: &ExperimentConfig,
    vocab: &Vocabulary,
    train_set: &[Consolidated],
    valid_set: &[Consolidated],
) -> Result<TrainOutcome, PipelineError> {
    let model = Model::new(config.model.clone())?;
    let init = model.init_params(config.train.seed);
    train_from(config, vocab, train_set, valid_set, init)
}

/// [`train`] starting from given parameters.
pub fn train_from(
    config: &ExperimentConfig,
    vocab: &Vocabulary,
    train_set: &[Consolidated],
    valid_set: &[Consolidated],
    mut params: ModelParameters,
) -> Result<TrainOutcome, PipelineError> {
    if train_set.is_empty() {
        return Err(PipelineError::EmptySet("training set"));
    }
    if valid_set.is_empty() {
        return Err(PipelineError::EmptySet("validation set"));
    }
    let model = Model::new(config.model.clone())?;
    let tc = &config.train;
    if tc.batch_size == 0 {
        return Err(PipelineError::InvalidConfig("batch size must be positive"));
    }
    let adam_config = AdamConfig::with_lr(tc.lr);
    let mut adam = AdamState::new(params.tensors());
    let mut order_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    dropout_rng.set_stream(1);
    let use_dropout = config.model.dropout > 0.0;

    let mut stopper = EarlyStopping::new(tc.patience);
    let mut best = (params.clone(), 0usize, 0.0f64);
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut tokens) = (0.0, 0usize);
        for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<&Consolidated> = chunk.iter().map(|&i| &train_set[i]).collect();
            let n: usize = batch.iter().map(|r| r.pair.target.len() - 1).sum();
            let rng = use_dropout.then_some(&mut dropout_rng);
            let loss = train_step(&model, &mut params, &mut adam, &adam_config, &batch, tc.label_smoothing, rng)?;
            if !loss.is_finite() {
                return Err(PipelineError::Divergence { epoch, batch: b + 1, loss });
            }
            loss_sum += loss * n as f64;
            tokens += n;
        }
        let verdicts = evaluate_top1(&model, &params, vocab, valid_set, config.decode)?;
        let acc = accuracy(&verdicts);
        let entry = EpochLog {
            epoch,
            loss: loss_sum / tokens as f64,
            valid_accuracy: acc,
        };
        log::info!("{} {} epoch {epoch}: loss {:.4}, valid top-1 {acc:.2}%", config.phi, config.model.variant, entry.loss);
        log.push(entry);
        let obs = stopper.observe(acc);
        if obs.keep {
            best = (params.clone(), epoch, acc);
        }
        if tc.stop_when_perfect && acc >= 100.0 {
            stop = StopReason::Perfect;
            break;
        }
        if obs.stop {
            stop = StopReason::Patience;
            break;
        }
    }
    Ok(TrainOutcome {
        params: best.0,
        log,
        best_epoch: best.1,
        best_accuracy: best.2,
        stop,
    })
}
