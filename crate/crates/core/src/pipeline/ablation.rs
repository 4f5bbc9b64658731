//! Data splits, per-cell training and the accuracy report.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::consolidate::{consolidate, Consolidated};
use super::corpus::DatasetRecord;
use super::eval::{evaluate_top1, Verdict};
use super::phi::Phi;
use super::train::{train, EpochLog, ExperimentConfig, TrainOutcome};
use super::PipelineError;
use crate::model::{Model, ModelParameters, Variant};
use crate::tokenizer::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitKind {
    Train,
    Valid,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Valid, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Valid => "valid",
            SplitKind::Test => "test",
        }
    }

    pub fn from_name(s: &str) -> Option<SplitKind> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Record indices of an 80/10/10 partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded shuffle of `0..n`, then the first 80% train, the next 10%
    /// validation and the rest test.
    pub fn new(n: usize, seed: u64) -> Split {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = n * 8 / 10;
        let n_valid = n / 10;
        let test = idx.split_off(n_train + n_valid);
        let valid = idx.split_off(n_train);
        Split { train: idx, valid, test }
    }

    pub fn get(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Valid => &self.valid,
            SplitKind::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub phi: Phi,
    pub variant: Variant,
    pub split: SplitKind,
    pub examples: usize,
    pub correct: usize,
}

impl EvalRow {
    pub fn accuracy(&self) -> f64 {
        if self.examples == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.examples as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerdictRow {
    pub phi: Phi,
    pub variant: Variant,
    pub split: SplitKind,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Recounts rows from per-example verdicts, one row per
    /// (Φ, variant, split) in order of first appearance.
    pub fn from_verdicts(seeds: Vec<u64>, verdicts: &[VerdictRow]) -> EvalReport {
        let mut rows: Vec<EvalRow> = Vec::new();
        for v in verdicts {
            let i = match rows
                .iter()
                .position(|r| r.phi == v.phi && r.variant == v.variant && r.split == v.split)
            {
                Some(i) => i,
                None => {
                    rows.push(EvalRow {
                        phi: v.phi,
                        variant: v.variant,
                        split: v.split,
                        examples: 0,
                        correct: 0,
                    });
                    rows.len() - 1
                }
            };
            rows[i].examples += 1;
            rows[i].correct += usize::from(v.verdict.correct);
        }
        EvalReport { seeds, rows }
    }

    pub fn row(&self, phi: Phi, variant: Variant, split: SplitKind) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.phi == phi && r.variant == variant && r.split == split)
    }
}

/// Consolidates every record for one cell; fails on the first record that
/// cannot be.
pub fn consolidate_all(
    records: &[DatasetRecord],
    indices: &[usize],
    config: &ExperimentConfig,
    vocab: &Vocabulary,
) -> Result<Vec<Consolidated>, PipelineError> {
    indices
        .iter()
        .map(|&i| Ok(consolidate(&records[i], config.phi, config.model.variant, vocab, config.model.max_len)?))
        .collect()
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub config: ExperimentConfig,
    pub params: ModelParameters,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct AblationOutcome {
    pub report: EvalReport,
    pub verdicts: Vec<VerdictRow>,
    pub cells: Vec<CellResult>,
}

/// Trains and evaluates one model per (Φ, variant) cell on a shared split,
/// with the seed of `base` everywhere.
pub fn run_ablation(
    base: &ExperimentConfig,
    cells: &[(Phi, Variant)],
    records: &[DatasetRecord],
    vocab: &Vocabulary,
    report_splits: &[SplitKind],
) -> Result<AblationOutcome, PipelineError> {
    let seed = base.train.seed;
    let split = Split::new(records.len(), seed);
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let mut results = Vec::new();
    for &(phi, variant) in cells {
        let config = base.with_cell(phi, variant);
        let train_set = consolidate_all(records, &split.train, &config, vocab)?;
        let valid_set = consolidate_all(records, &split.valid, &config, vocab)?;
        let TrainOutcome {
            params, log, best_epoch, ..
        } = train(&config, vocab, &train_set, &valid_set)?;
        let model = Model::new(config.model.clone())?;
        for &kind in report_splits {
            let set = match kind {
                SplitKind::Train => train_set.clone(),
                SplitKind::Valid => valid_set.clone(),
                SplitKind::Test => consolidate_all(records, &split.test, &config, vocab)?,
            };
            let vs = evaluate_top1(&model, &params, vocab, &set, config.decode)?;
            rows.push(EvalRow {
                phi,
                variant,
                split: kind,
                examples: vs.len(),
                correct: vs.iter().filter(|v| v.correct).count(),
            });
            verdicts.extend(vs.into_iter().map(|verdict| VerdictRow {
                phi,
                variant,
                split: kind,
                verdict,
            }));
        }
        results.push(CellResult {
            config,
            params,
            log,
            best_epoch,
        });
    }
    Ok(AblationOutcome {
        report: EvalReport {
            seeds: alloc::vec![seed],
            rows,
        },
        verdicts,
        cells: results,
    })
}

/// `(correct, examples)` over one cell and split, restricted to record ids
/// accepted by `keep`.
pub fn subset_accuracy(
    verdicts: &[VerdictRow],
    phi: Phi,
    variant: Variant,
    split: SplitKind,
    keep: impl Fn(&str) -> bool,
) -> (usize, usize) {
    let matching: Vec<&VerdictRow> = verdicts
        .iter()
        .filter(|v| v.phi == phi && v.variant == variant && v.split == split && keep(&v.verdict.id))
        .collect();
    (matching.iter().filter(|v| v.verdict.correct).count(), matching.len())
}
