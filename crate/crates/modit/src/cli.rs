//! Command-line front end.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use modit_core::edit::EditError;
use modit_core::model::{Inference, Model, Variant};
use modit_core::pipeline::{
    consolidate, consolidate_all, evaluate_top1, generate_corpus, predict, run_ablation, train, vocabulary_corpus,
    DatasetRecord, EvalReport, EvalRow, Extraction, Phi, PipelineError, Split, SplitKind, VerdictRow,
};
use modit_core::tokenizer::Vocabulary;

use crate::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::config::ConfigFile;
use crate::dataset::{load_jsonl, write_jsonl, Dataset};
use crate::report::{render_report, write_verdicts, Timing};
use crate::vocab_file::{vocab_digest, vocab_from_str, vocab_to_string};
use crate::FormatError;

#[derive(Parser, Debug)]
#[command(name = "modit", version, about = "Multi-modal neural code editing")]
pub struct Cli {
    /// Seed for corpus generation, data splits, initialization and dropout.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthetic corpus tools.
    Corpus {
        #[command(subcommand)]
        action: CorpusCommand,
    },
    /// Subword vocabulary tools.
    Tokenizer {
        #[command(subcommand)]
        action: TokenizerCommand,
    },
    /// Adds e_p, e_n and span to every record.
    Extract(ExtractArgs),
    /// Trains one model on the training split.
    Train(TrainArgs),
    /// Top-1 exact match of a checkpoint on one split.
    Eval(EvalArgs),
    /// Predicts the edit for one JSON record read from standard input.
    Predict(PredictArgs),
    /// Trains and evaluates every (Φ, variant) cell of a matrix.
    Ablate(AblateArgs),
}

#[derive(Subcommand, Debug)]
pub enum CorpusCommand {
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        ambiguity: f64,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum TokenizerCommand {
    Train {
        #[arg(long)]
        merges: usize,
        /// Dataset whose code and guidance the vocabulary must cover.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub phi: String,
    #[arg(long, default_value = "single_encoder")]
    pub variant: String,
    /// JSON overrides of the desk configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch log as TSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
    All,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub phi: String,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Per-example verdicts as JSON lines.
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub beam: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// JSON: {"phi": [...], "variants": [...], "splits": [...], "config": {...}}.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: exit code 2.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io(e) => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Consolidate(_) | PipelineError::InvalidConfig(_) | PipelineError::EmptySet(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn with_path(path: &Path, e: io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| with_path(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| with_path(path, e))?))
}

fn load_data(path: &Path) -> Result<Dataset, CliError> {
    let f = File::open(path).map_err(|e| with_path(path, e))?;
    load_jsonl(BufReader::new(f)).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    vocab_from_str(&read_text(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let f = File::open(path).map_err(|e| with_path(path, e))?;
    read_checkpoint(BufReader::new(f)).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn parse_phi(s: &str) -> Result<Phi, CliError> {
    Phi::from_id(s).ok_or_else(|| {
        let ids: Vec<&str> = Phi::ALL.iter().map(|p| p.id()).collect();
        invalid(format!("unknown phi {s:?}; expected one of {}", ids.join(", ")))
    })
}

fn parse_variant(s: &str) -> Result<Variant, CliError> {
    Variant::from_name(s).ok_or_else(|| invalid(format!("unknown variant {s:?}")))
}

/// Every record needs its edit region before it can be consolidated.
fn require_extracted(records: &[DatasetRecord]) -> Result<(), CliError> {
    match records.iter().find(|r| r.extraction.is_none()) {
        Some(r) => Err(invalid(format!("record {} has no e_p/e_n/span; run `extract` first", r.id))),
        None => Ok(()),
    }
}

fn check_vocab(ckpt: &Checkpoint, vocab: &Vocabulary) -> Result<(), CliError> {
    if vocab_digest(vocab) != ckpt.vocab_sha256 {
        return Err(invalid("vocabulary does not match the one the checkpoint was trained with"));
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Corpus {
            action: CorpusCommand::Gen { n, ambiguity, out },
        } => {
            if !(0.0..=1.0).contains(&ambiguity) {
                return Err(invalid("--ambiguity must lie in [0, 1]"));
            }
            let records = generate_corpus(seed, n, ambiguity);
            match out {
                Some(p) => {
                    let mut w = create(&p)?;
                    write_jsonl(&mut w, &records)?;
                    w.flush()?;
                }
                None => {
                    let stdout = io::stdout();
                    let mut w = stdout.lock();
                    write_jsonl(&mut w, &records)?;
                }
            }
        }
        Command::Tokenizer {
            action: TokenizerCommand::Train { merges, input, out },
        } => {
            let data = load_data(&input)?;
            let vocab = Vocabulary::train(&vocabulary_corpus(&data.records), merges)
                .map_err(|e| invalid(e.to_string()))?;
            fs::write(&out, vocab_to_string(&vocab)).map_err(|e| with_path(&out, e))?;
            log::info!("{} pieces, {} merges", vocab.len(), vocab.merges().len());
        }
        Command::Extract(a) => {
            let data = load_data(&a.input)?;
            let records = data
                .records
                .iter()
                .map(|r| r.extract().map_err(|e| invalid(format!("record {}: {e}", r.id))))
                .collect::<Result<Vec<_>, _>>()?;
            match a.out {
                Some(p) => {
                    let mut w = create(&p)?;
                    write_jsonl(&mut w, &records)?;
                    w.flush()?;
                }
                None => write_jsonl(io::stdout().lock(), &records)?,
            }
        }
        Command::Train(a) => cmd_train(a, seed)?,
        Command::Eval(a) => cmd_eval(a, seed)?,
        Command::Predict(a) => cmd_predict(a)?,
        Command::Ablate(a) => cmd_ablate(a, seed)?,
    }
    Ok(())
}

fn experiment(config: Option<&ConfigFile>, phi: Phi, variant: Variant, vocab: &Vocabulary, seed: u64) -> Result<modit_core::pipeline::ExperimentConfig, CliError> {
    let default = ConfigFile::default();
    let mut c = config.unwrap_or(&default).resolve(phi, variant, vocab.len())?;
    c.train.seed = seed;
    Ok(c)
}

fn cmd_train(a: TrainArgs, seed: u64) -> Result<(), CliError> {
    let phi = parse_phi(&a.phi)?;
    let variant = parse_variant(&a.variant)?;
    let file = a.config.as_deref().map(|p| ConfigFile::parse(&read_text(p)?).map_err(CliError::from)).transpose()?;
    let vocab = load_vocab(&a.vocab)?;
    let data = load_data(&a.data)?;
    require_extracted(&data.records)?;
    let config = experiment(file.as_ref(), phi, variant, &vocab, seed)?;
    let split = Split::new(data.records.len(), seed);
    let train_set = consolidate_all(&data.records, &split.train, &config, &vocab)?;
    let valid_set = consolidate_all(&data.records, &split.valid, &config, &vocab)?;
    let out = train(&config, &vocab, &train_set, &valid_set)?;
    let ckpt = Checkpoint {
        config,
        vocab_sha256: vocab_digest(&vocab),
        params: out.params,
        best_epoch: out.best_epoch,
    };
    let mut w = create(&a.out)?;
    write_checkpoint(&mut w, &ckpt)?;
    w.flush()?;
    if let Some(p) = a.log {
        fs::write(&p, log_tsv(&out.log)).map_err(|e| with_path(&p, e))?;
    }
    println!(
        "best epoch {} of {}, validation top-1 {:.2}%",
        out.best_epoch,
        out.log.len(),
        out.best_accuracy
    );
    Ok(())
}

fn log_tsv(log: &[modit_core::pipeline::EpochLog]) -> String {
    let mut s = String::from("epoch\tloss\tvalid_top1\n");
    for l in log {
        s.push_str(&format!("{}\t{:.6}\t{:.2}\n", l.epoch, l.loss, l.valid_accuracy));
    }
    s
}

fn cmd_eval(a: EvalArgs, seed: u64) -> Result<(), CliError> {
    let phi = parse_phi(&a.phi)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    if ckpt.config.phi != phi {
        return Err(invalid(format!("checkpoint was trained for {}, not {phi}", ckpt.config.phi)));
    }
    let vocab = load_vocab(&a.vocab)?;
    check_vocab(&ckpt, &vocab)?;
    let data = load_data(&a.data)?;
    require_extracted(&data.records)?;
    let mut config = ckpt.config.clone();
    if let Some(b) = a.beam {
        if b == 0 {
            return Err(invalid("--beam must be at least 1"));
        }
        config.decode.beam = b;
    }
    let split = Split::new(data.records.len(), seed);
    let kinds: Vec<SplitKind> = match a.split {
        SplitArg::Train => vec![SplitKind::Train],
        SplitArg::Valid => vec![SplitKind::Valid],
        SplitArg::Test => vec![SplitKind::Test],
        SplitArg::All => SplitKind::ALL.to_vec(),
    };
    let model = Model::new(config.model.clone()).map_err(|e| invalid(e.to_string()))?;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for kind in kinds {
        let set = consolidate_all(&data.records, split.get(kind), &config, &vocab)?;
        let vs = evaluate_top1(&model, &ckpt.params, &vocab, &set, config.decode)?;
        rows.push(EvalRow {
            phi,
            variant: config.model.variant,
            split: kind,
            examples: vs.len(),
            correct: vs.iter().filter(|v| v.correct).count(),
        });
        verdicts.extend(vs.into_iter().map(|verdict| VerdictRow {
            phi,
            variant: config.model.variant,
            split: kind,
            verdict,
        }));
    }
    print!("{}", render_report(&EvalReport { seeds: vec![seed], rows }));
    if let Some(p) = a.verdicts {
        let mut w = create(&p)?;
        write_verdicts(&mut w, &verdicts)?;
        w.flush()?;
    }
    Ok(())
}

/// What `predict` reads: a record whose after-code and patch may be absent.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Query {
    #[serde(default)]
    id: Option<String>,
    code_before: String,
    #[serde(default)]
    code_after: Option<String>,
    #[serde(default)]
    guidance: String,
    #[serde(default)]
    e_p: Option<String>,
    #[serde(default)]
    e_n: Option<String>,
    #[serde(default)]
    span: Option<[usize; 2]>,
}

fn cmd_predict(a: PredictArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let vocab = load_vocab(&a.vocab)?;
    check_vocab(&ckpt, &vocab)?;
    let mut text = String::new();
    io::stdin().read_to_string(&mut text)?;
    let q: Query = serde_json::from_str(text.trim()).map_err(|e| invalid(format!("standard input: {e}")))?;
    let mut record = DatasetRecord {
        id: q.id.unwrap_or_else(|| "stdin".into()),
        code_before: q.code_before.clone(),
        code_after: q.code_after.clone().unwrap_or_else(|| q.code_before.clone()),
        guidance: q.guidance,
        extraction: None,
    };
    record.extraction = match (q.e_p, q.span, q.code_after) {
        (Some(e_p), Some([s, e]), _) => Some(Extraction {
            e_n: q.e_n.unwrap_or_else(|| e_p.clone()),
            e_p,
            span: (s, e),
        }),
        (_, _, Some(_)) => match record.extract() {
            Ok(r) => r.extraction,
            Err(EditError::EmptyGuidance) => return Err(invalid("guidance is empty")),
            Err(e) => return Err(invalid(e.to_string())),
        },
        _ => None,
    };
    let config = &ckpt.config;
    if (config.phi.edit() || config.phi.annotated()) && record.extraction.is_none() {
        return Err(invalid(format!("{} needs e_p and span (or code_after to extract them from)", config.phi)));
    }
    if record.extraction.is_none() {
        // Only the target side reads these; prediction ignores the target.
        record.extraction = Some(Extraction {
            e_p: String::new(),
            e_n: record.code_before.clone(),
            span: (0, 0),
        });
    }
    let c = consolidate(&record, config.phi, config.model.variant, &vocab, config.model.max_len)
        .map_err(|e| invalid(e.to_string()))?;
    let model = Model::new(config.model.clone()).map_err(|e| invalid(e.to_string()))?;
    let inference = Inference::new(&model, &ckpt.params);
    let mut decode = config.decode;
    if let Some(b) = a.beam {
        decode.beam = b.max(1);
    }
    println!("{}", predict(&inference, &vocab, &c, decode)?);
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Matrix {
    phi: Vec<String>,
    #[serde(default = "default_variants")]
    variants: Vec<String>,
    #[serde(default = "default_splits")]
    splits: Vec<String>,
    #[serde(default)]
    config: ConfigFile,
}

fn default_variants() -> Vec<String> {
    vec!["single_encoder".into()]
}

fn default_splits() -> Vec<String> {
    vec!["valid".into(), "test".into()]
}

fn cmd_ablate(a: AblateArgs, seed: u64) -> Result<(), CliError> {
    let matrix: Matrix =
        serde_json::from_str(&read_text(&a.matrix)?).map_err(|e| invalid(format!("{}: {e}", a.matrix.display())))?;
    let phis = matrix.phi.iter().map(|p| parse_phi(p)).collect::<Result<Vec<_>, _>>()?;
    let variants = matrix.variants.iter().map(|v| parse_variant(v)).collect::<Result<Vec<_>, _>>()?;
    let splits = matrix
        .splits
        .iter()
        .map(|s| SplitKind::from_name(s).ok_or_else(|| invalid(format!("unknown split {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if phis.is_empty() || variants.is_empty() {
        return Err(invalid("matrix needs at least one phi and one variant"));
    }
    let vocab = load_vocab(&a.vocab)?;
    let data = load_data(&a.data)?;
    require_extracted(&data.records)?;
    let cells: Vec<(Phi, Variant)> = phis.iter().flat_map(|&p| variants.iter().map(move |&v| (p, v))).collect();
    let base = experiment(Some(&matrix.config), cells[0].0, cells[0].1, &vocab, seed)?;

    let started = Instant::now();
    let out = run_ablation(&base, &cells, &data.records, &vocab, &splits)?;
    let total = started.elapsed().as_secs_f64();

    fs::create_dir_all(a.out_dir.join("checkpoints")).map_err(|e| with_path(&a.out_dir, e))?;
    fs::create_dir_all(a.out_dir.join("logs")).map_err(|e| with_path(&a.out_dir, e))?;
    let report = render_report(&out.report);
    fs::write(a.out_dir.join("report.tsv"), &report)?;
    let mut w = create(&a.out_dir.join("verdicts.jsonl"))?;
    write_verdicts(&mut w, &out.verdicts)?;
    w.flush()?;
    let digest = vocab_digest(&vocab);
    for cell in &out.cells {
        let name = format!("{}-{}", cell.config.phi.id(), cell.config.model.variant.name());
        let ckpt = Checkpoint {
            config: cell.config.clone(),
            vocab_sha256: digest.clone(),
            params: cell.params.clone(),
            best_epoch: cell.best_epoch,
        };
        let mut w = create(&a.out_dir.join("checkpoints").join(format!("{name}.ckpt")))?;
        write_checkpoint(&mut w, &ckpt)?;
        w.flush()?;
        fs::write(a.out_dir.join("logs").join(format!("{name}.tsv")), log_tsv(&cell.log))?;
    }
    // Per-cell wall-clock is not tracked by the core loop; the sidecar
    // records the whole run.
    let timing = Timing {
        cells: Vec::new(),
        total_seconds: total,
    };
    fs::write(
        a.out_dir.join("timing.json"),
        serde_json::to_string_pretty(&timing).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    print!("{report}");
    Ok(())
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
