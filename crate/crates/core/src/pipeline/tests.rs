use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::model::{Inference, Model, ModelConfig, Variant};
use crate::numerics::{Activation, AdamConfig, AdamState};
use crate::tokenizer::{normalize_whitespace, Vocabulary};

fn small_config(phi: Phi, variant: Variant, vocab: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk(phi, variant, vocab);
    c.model = ModelConfig {
        encoder_layers: 1,
        decoder_layers: 1,
        d_model: 16,
        heads: 2,
        ffn: 32,
        dropout: 0.0,
        max_len: 96,
        activation: Activation::Gelu,
        ..c.model
    };
    c.train.max_epochs = 3;
    c.train.batch_size = 4;
    c.decode = DecodeConfig::beam(2, 12);
    c
}

fn corpus(n: usize) -> (Vec<DatasetRecord>, Vocabulary) {
    let records = generate_corpus(17, n, 0.5);
    let vocab = Vocabulary::train(&vocabulary_corpus(&records), 120).unwrap();
    (records, vocab)
}

#[test]
fn early_stopping_counts_post_best_validations() {
    let mut s = EarlyStopping::new(5);
    let scores = [50.0, 40.0, 30.0, 20.0, 10.0, 5.0, 1.0];
    let mut stopped_at = None;
    for (i, &x) in scores.iter().enumerate() {
        let o = s.observe(x);
        assert_eq!(o.keep, i == 0);
        if o.stop {
            stopped_at = Some(i);
            break;
        }
    }
    assert_eq!(stopped_at, Some(5));
}

#[test]
fn ties_keep_the_later_checkpoint_without_resetting_patience() {
    let mut s = EarlyStopping::new(2);
    assert_eq!(s.observe(10.0), Observation { keep: true, stop: false });
    assert_eq!(s.observe(10.0), Observation { keep: true, stop: false });
    assert_eq!(s.observe(10.0), Observation { keep: true, stop: true });
    let mut s = EarlyStopping::new(2);
    s.observe(10.0);
    s.observe(5.0);
    assert_eq!(s.observe(11.0), Observation { keep: true, stop: false });
    assert_eq!(s.best(), Some(11.0));
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let (records, vocab) = corpus(12);
    let config = small_config(Phi::Ecg, Variant::SingleEncoder, vocab.len());
    let model = Model::new(config.model.clone()).unwrap();
    let set = consolidate_all(&records, &(0..12).collect::<Vec<_>>(), &config, &vocab).unwrap();
    let mut params = model.init_params(3);
    let before = params.clone();
    let mut adam = AdamState::new(params.tensors());
    let batch: Vec<&Consolidated> = set.iter().collect();
    for _ in 0..4 {
        let loss = train_step(&model, &mut params, &mut adam, &AdamConfig::with_lr(0.0), &batch, 0.1, None).unwrap();
        assert!(loss.is_finite());
    }
    assert_eq!(adam.step(), 4);
    for (a, b) in params.tensors().iter().zip(before.tensors()) {
        let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same);
    }
}

#[test]
fn nan_loss_aborts_with_location() {
    let (records, vocab) = corpus(20);
    let config = small_config(Phi::E, Variant::SingleEncoder, vocab.len());
    let set = consolidate_all(&records, &(0..20).collect::<Vec<_>>(), &config, &vocab).unwrap();
    let model = Model::new(config.model.clone()).unwrap();
    let mut params = model.init_params(0);
    params.get_mut("output.bias").unwrap().data_mut()[0] = f64::NAN;
    let err = train_from(&config, &vocab, &set, &set[..2], params).unwrap_err();
    assert!(matches!(err, PipelineError::Divergence { epoch: 1, batch: 1, .. }), "{err:?}");
}

#[test]
fn training_lowers_loss_and_is_reproducible() {
    let (records, vocab) = corpus(24);
    let mut config = small_config(Phi::Eg, Variant::SingleEncoder, vocab.len());
    config.model.dropout = 0.1;
    config.train.max_epochs = 4;
    config.train.patience = 10;
    let set = consolidate_all(&records, &(0..24).collect::<Vec<_>>(), &config, &vocab).unwrap();
    let a = train(&config, &vocab, &set[..20], &set[20..]).unwrap();
    let b = train(&config, &vocab, &set[..20], &set[20..]).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.params, b.params);
    assert_eq!(a.log.len(), 4);
    assert!(a.log[3].loss < a.log[0].loss, "{:?}", a.log);
    config.train.seed = 1;
    let c = train(&config, &vocab, &set[..20], &set[20..]).unwrap();
    assert_ne!(c.params, a.params);
}

#[test]
fn beam_one_evaluation_is_greedy() {
    let (records, vocab) = corpus(10);
    for variant in Variant::ALL {
        let config = small_config(Phi::Ec, variant, vocab.len());
        let model = Model::new(config.model.clone()).unwrap();
        let params = model.init_params(5);
        let set = consolidate_all(&records, &(0..10).collect::<Vec<_>>(), &config, &vocab).unwrap();
        let verdicts = evaluate_top1(&model, &params, &vocab, &set, DecodeConfig::beam(1, 10)).unwrap();
        let inf = Inference::new(&model, &params);
        for (v, r) in verdicts.iter().zip(&set) {
            let g = inf.greedy(&r.pair.segments, 10).unwrap();
            let text = normalize_whitespace(&vocab.decode(g.patch()).unwrap());
            assert_eq!(v.prediction, text);
        }
    }
}

#[test]
fn comparison_is_on_detokenized_text() {
    let pieces: Vec<alloc::string::String> = crate::tokenizer::Special::ALL
        .iter()
        .map(|s| s.text().into())
        .chain(["▁a", "b", "▁ab", "▁c"].map(Into::into))
        .collect();
    let merges = vec![("▁a".into(), "b".into())];
    let vocab = Vocabulary::from_parts(pieces, merges).unwrap();
    let split = [7, 8, 10];
    let merged = [9, 10];
    assert_eq!(vocab.decode(&split).unwrap(), "ab c");
    assert_eq!(vocab.decode(&split).unwrap(), vocab.decode(&merged).unwrap());
}

#[test]
fn untrained_model_is_near_zero() {
    let (records, vocab) = corpus(60);
    let config = ExperimentConfig::desk(Phi::Ecg, Variant::SingleEncoder, vocab.len());
    let set = consolidate_all(&records, &(0..60).collect::<Vec<_>>(), &config, &vocab).unwrap();
    let model = Model::new(config.model.clone()).unwrap();
    for seed in 0..3 {
        let params = model.init_params(seed);
        let verdicts = evaluate_top1(&model, &params, &vocab, &set, DecodeConfig::beam(5, 24)).unwrap();
        assert!(accuracy(&verdicts) < 5.0, "seed {seed}: {}", accuracy(&verdicts));
    }
}

#[test]
fn overfit_small_set_reaches_full_train_accuracy() {
    let (records, vocab) = corpus(8);
    let mut config = small_config(Phi::Ecg, Variant::SingleEncoder, vocab.len());
    config.model.d_model = 32;
    config.model.heads = 4;
    config.model.ffn = 64;
    config.train.lr = 3e-3;
    config.train.max_epochs = 120;
    config.train.patience = 120;
    config.decode = DecodeConfig::beam(2, 16);
    let set = consolidate_all(&records, &(0..8).collect::<Vec<_>>(), &config, &vocab).unwrap();
    let out = train(&config, &vocab, &set, &set).unwrap();
    assert_eq!(out.stop, StopReason::Perfect, "{:?}", out.log.last());
    let model = Model::new(config.model.clone()).unwrap();
    let verdicts = evaluate_top1(&model, &out.params, &vocab, &set, config.decode).unwrap();
    assert_eq!(accuracy(&verdicts), 100.0);
}

#[test]
fn single_cell_ablation_matches_direct_run() {
    let (records, vocab) = corpus(30);
    let config = small_config(Phi::Eg, Variant::MultiEncoder, vocab.len());
    let out = run_ablation(&config, &[(Phi::Eg, Variant::MultiEncoder)], &records, &vocab, &[SplitKind::Test]).unwrap();

    let split = Split::new(records.len(), config.train.seed);
    let tr = consolidate_all(&records, &split.train, &config, &vocab).unwrap();
    let va = consolidate_all(&records, &split.valid, &config, &vocab).unwrap();
    let te = consolidate_all(&records, &split.test, &config, &vocab).unwrap();
    let direct = train(&config, &vocab, &tr, &va).unwrap();
    let model = Model::new(config.model.clone()).unwrap();
    let verdicts = evaluate_top1(&model, &direct.params, &vocab, &te, config.decode).unwrap();

    assert_eq!(out.cells[0].params, direct.params);
    let row = &out.report.rows[0];
    assert_eq!((row.examples, row.correct), (verdicts.len(), verdicts.iter().filter(|v| v.correct).count()));
    let from_out: Vec<&Verdict> = out.verdicts.iter().map(|v| &v.verdict).collect();
    assert_eq!(from_out, verdicts.iter().collect::<Vec<_>>());
}

#[test]
fn report_recount_matches_live_rows() {
    let (records, vocab) = corpus(20);
    let config = small_config(Phi::E, Variant::SingleEncoder, vocab.len());
    let cells = [(Phi::E, Variant::SingleEncoder), (Phi::Ec, Variant::DecoderOnly)];
    let out = run_ablation(&config, &cells, &records, &vocab, &SplitKind::ALL).unwrap();
    assert_eq!(out.report.rows.len(), 6);
    assert_eq!(EvalReport::from_verdicts(out.report.seeds.clone(), &out.verdicts), out.report);
    for r in &out.report.rows {
        assert!(r.correct <= r.examples);
        assert_eq!(r.accuracy(), 100.0 * r.correct as f64 / r.examples as f64);
    }
}

#[test]
fn split_is_80_10_10() {
    let s = Split::new(2000, 4);
    assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (1600, 200, 200));
    let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..2000).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn split_is_deterministic_partition(n in 0usize..300, seed in any::<u64>()) {
        let a = Split::new(n, seed);
        prop_assert_eq!(&a, &Split::new(n, seed));
        let mut all: Vec<usize> = a.train.iter().chain(&a.valid).chain(&a.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(a.train.len(), n * 8 / 10);
        prop_assert_eq!(a.valid.len(), n / 10);
    }

    #[test]
    fn report_invariants(flags in proptest::collection::vec((0usize..3, any::<bool>()), 0..60)) {
        let rows: Vec<VerdictRow> = flags
            .iter()
            .enumerate()
            .map(|(i, &(s, correct))| VerdictRow {
                phi: Phi::E,
                variant: Variant::SingleEncoder,
                split: SplitKind::ALL[s],
                verdict: Verdict { id: alloc::format!("{i}"), prediction: "x".into(), expected: "x".into(), correct },
            })
            .collect();
        let report = EvalReport::from_verdicts(vec![1], &rows);
        prop_assert_eq!(report.rows.iter().map(|r| r.examples).sum::<usize>(), flags.len());
        for r in &report.rows {
            prop_assert!(r.correct <= r.examples);
            let acc = r.accuracy();
            prop_assert!((0.0..=100.0).contains(&acc));
        }
    }
}
