//! `dbnt`: build corpora, train deep belief nets, encode documents and
//! evaluate retrieval from the command line.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error,
//! 3 numerical divergence.

mod config;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use dbnt::codes::{self, CodeValues, LatentCode};
use dbnt::container::Container;
use dbnt::corpus::{self, BowDocument, Vocabulary};
use dbnt::dbn::{self, DbnModel};
use dbnt::eval;
use dbnt::finetune::{self, AutoencoderModel};

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "dbnt", version, about = "Deep belief nets for topic modeling")]
struct Cli {
    /// `key = value` config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Per-key override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the vocabulary and the train/test corpus files from raw text
    BuildCorpus {
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long)]
        vocab_size: Option<usize>,
    },
    /// Greedy layer-wise pretraining of the DBN
    Pretrain,
    /// Unroll the DBN and fine-tune the autoencoder
    Finetune,
    /// Write latent codes for a corpus
    Encode {
        /// Corpus to encode (default: the test split)
        #[arg(long)]
        input: Option<PathBuf>,
        /// Binary codes thresholded at `binarize.threshold`
        #[arg(long)]
        binarize: bool,
    },
    /// Accuracy curve of a codes file
    Eval {
        #[arg(long)]
        codes: Option<PathBuf>,
        /// Comma-separated neighbor counts
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// First two principal components of a codes or corpus file
    Pca {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Core(dbnt::Error),
    /// Output written, but some inputs were skipped.
    Partial(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<dbnt::Error> for CliError {
    fn from(e: dbnt::Error) -> Self {
        Self::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Core(dbnt::Error::InvalidArgument(_)) => 1,
            Self::Core(dbnt::Error::Divergence(_)) => 3,
            Self::Core(_) | Self::Partial(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "config: {e}"),
            Self::Core(e) => write!(f, "{e}"),
            Self::Partial(msg) => f.write_str(msg),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Core(dbnt::Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Core(dbnt::Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

/// Runs `f` on the output file, or on stdout when none is configured.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> CliResult) -> CliResult {
    match path {
        Some(p) => f(&mut create(p)?),
        None => f(&mut io::stdout().lock()),
    }
}

fn read_vocab(cfg: &RunConfig) -> CliResult<Vocabulary> {
    Ok(Vocabulary::read(open(&cfg.paths.vocab)?)?)
}

fn read_docs(path: &Path, vocab_size: Option<usize>) -> CliResult<Vec<BowDocument>> {
    corpus::read_corpus(open(path)?, vocab_size).map_err(|e| match e {
        dbnt::Error::Parse { line, msg } => CliError::Core(dbnt::Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        }),
        other => other.into(),
    })
}

fn arch(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

fn cmd_build_corpus(cfg: &RunConfig) -> CliResult {
    let raw_path = cfg
        .paths
        .raw
        .as_deref()
        .ok_or_else(|| ConfigError("build-corpus needs paths.raw or --raw".into()))?;
    let raw = corpus::read_raw(open(raw_path)?)?;
    let token_lists: Vec<Vec<&str>> = raw.iter().map(|d| d.tokens.iter().map(String::as_str).collect()).collect();
    let vocab = corpus::build_vocabulary(&token_lists, cfg.vocab_size)?;
    let (docs, empty): (Vec<BowDocument>, Vec<BowDocument>) = raw
        .iter()
        .map(|d| corpus::vectorize(d.doc_id.clone(), d.label.clone(), &d.tokens, &vocab))
        .partition(|d| d.total() > 0);
    if !empty.is_empty() {
        let ids: Vec<&str> = empty.iter().map(BowDocument::doc_id).collect();
        warn!("dropped document(s) with no in-vocabulary words: {}", ids.join(", "));
    }
    let split = corpus::split_corpus(docs, vocab, cfg.train_fraction, cfg.seed)?;

    let mut out = create(&cfg.paths.vocab)?;
    split.vocabulary.write(&mut out)?;
    out.flush()?;
    let mut out = create(&cfg.paths.train)?;
    corpus::write_corpus(&mut out, &split.train)?;
    out.flush()?;
    let mut out = create(&cfg.paths.test)?;
    corpus::write_corpus(&mut out, &split.test)?;
    out.flush()?;
    println!(
        "documents: {} (train {}, test {}), vocabulary: {}",
        split.train.len() + split.test.len(),
        split.train.len(),
        split.test.len(),
        split.vocabulary.len()
    );
    Ok(())
}

fn cmd_pretrain(cfg: &RunConfig) -> CliResult {
    let vocab = read_vocab(cfg)?;
    if cfg.layer_sizes[0] != vocab.len() {
        return Err(ConfigError(format!(
            "layer_sizes starts with {} but the vocabulary has {} words",
            cfg.layer_sizes[0],
            vocab.len()
        ))
        .into());
    }
    let docs = read_docs(&cfg.paths.train, Some(vocab.len()))?;
    let (pre, _) = cfg.seeded();
    info!("pretraining {} on {} documents", arch(&cfg.layer_sizes), docs.len());
    let model = dbn::pretrain(&docs, &cfg.layer_sizes, &pre)?;
    model.save(&cfg.paths.dbn)?;
    info!("wrote {}", cfg.paths.dbn.display());
    Ok(())
}

fn cmd_finetune(cfg: &RunConfig) -> CliResult {
    let dbn = DbnModel::load(&cfg.paths.dbn)?;
    let docs = read_docs(&cfg.paths.train, Some(dbn.vocab_size()))?;
    let (_, ft) = cfg.seeded();
    info!(
        "fine-tuning {} on {} documents{}",
        arch(&dbn.layer_sizes()),
        docs.len(),
        if cfg.noise_enabled { " with code noise" } else { "" }
    );
    let model = finetune::finetune(&dbn, &docs, &ft, cfg.noise_enabled)?;
    model.save(&cfg.paths.model)?;
    info!("wrote {}", cfg.paths.model.display());
    Ok(())
}

enum AnyModel {
    Dbn(DbnModel),
    Autoencoder(AutoencoderModel),
}

/// Loads either model kind, told apart by the tensors it holds.
fn load_model(path: &Path) -> CliResult<AnyModel> {
    let c = Container::read(open(path)?)?;
    if c.get("layer_sizes").is_some() {
        Ok(AnyModel::Dbn(DbnModel::from_container(&c)?))
    } else {
        Ok(AnyModel::Autoencoder(AutoencoderModel::from_container(&c)?))
    }
}

fn cmd_encode(cfg: &RunConfig) -> CliResult {
    let model = load_model(&cfg.paths.model)?;
    let encoder: &dyn codes::Encoder = match &model {
        AnyModel::Dbn(m) => m,
        AnyModel::Autoencoder(m) => m,
    };
    let input = cfg.paths.corpus.as_ref().unwrap_or(&cfg.paths.test);
    let vocab_size = match &model {
        AnyModel::Dbn(m) => m.vocab_size(),
        AnyModel::Autoencoder(m) => m.vocab_size(),
    };
    let docs = read_docs(input, Some(vocab_size))?;

    let mut out = Vec::with_capacity(docs.len());
    let mut skipped = Vec::new();
    for d in &docs {
        if d.total() == 0 {
            skipped.push(d.doc_id().to_string());
            continue;
        }
        let code = codes::encode(encoder, d)?;
        out.push(if cfg.binarize { codes::binarize(&code, cfg.threshold)? } else { code });
    }
    let mut w = create(&cfg.paths.codes)?;
    codes::write_codes(&mut w, &out)?;
    info!("wrote {} codes to {}", out.len(), cfg.paths.codes.display());
    if !skipped.is_empty() {
        warn!("skipped degenerate document(s): {}", skipped.join(", "));
        return Err(CliError::Partial(format!(
            "{} of {} documents skipped as degenerate",
            skipped.len(),
            docs.len()
        )));
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> CliResult {
    let codes = codes::read_codes(open(&cfg.paths.codes)?)?;
    let curve = eval::accuracy_measurement(&codes, &cfg.ks)?;
    let (kind, dim) = codes
        .first()
        .map(|c| (if c.values.is_binary() { "binary/hamming" } else { "real/euclidean" }, c.dim()))
        .unwrap_or(("none", 0));
    let comments = vec![
        format!("codes: {}", cfg.paths.codes.display()),
        format!("code: {kind}, dimension {dim}"),
    ];
    with_output(cfg.paths.output.as_deref(), |w| Ok(eval::write_accuracy_csv(w, &curve, &comments)?))?;
    if cfg.paths.output.is_some() {
        for (k, a) in &curve.points {
            println!("k={k}\taccuracy={a:.4}");
        }
    }
    Ok(())
}

/// A codes file or a corpus file, told apart by `idx:count` entries.
fn read_vectors(path: &Path) -> CliResult<Vec<(String, String, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Core(dbnt::Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))))?;
    let is_corpus = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| l.split('\t').nth(2))
        .is_some_and(|v| v.is_empty() || v.contains(':'));
    if is_corpus {
        let docs = corpus::read_corpus(text.as_bytes(), None)?;
        let dim = docs.iter().map(BowDocument::min_vocab_size).max().unwrap_or(0);
        return Ok(docs
            .iter()
            .map(|d| (d.doc_id().to_string(), d.label().to_string(), d.to_dense(dim).to_vec()))
            .collect());
    }
    Ok(codes::read_codes(text.as_bytes())?
        .into_iter()
        .map(|c: LatentCode| {
            let v = match c.values {
                CodeValues::Real(v) => v,
                CodeValues::Binary(b) => b.into_iter().map(|x| f64::from(u8::from(x))).collect(),
            };
            (c.doc_id, c.label, v)
        })
        .collect())
}

fn cmd_pca(cfg: &RunConfig) -> CliResult {
    let input = cfg.paths.corpus.as_ref().unwrap_or(&cfg.paths.codes);
    let rows = read_vectors(input)?;
    let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.2.clone()).collect();
    let projection = eval::pca_project(&vectors, 2)?;
    info!(
        "explained variance: pc1 {:.4}, pc2 {:.4}",
        projection.explained_variance[0], projection.explained_variance[1]
    );
    let ids: Vec<(String, String)> = rows.into_iter().map(|r| (r.0, r.1)).collect();
    with_output(cfg.paths.output.as_deref(), |w| Ok(eval::write_pca_csv(w, &ids, &projection)?))
}

/// Every `--set` value in command-line order. Clap keeps only the last
/// group of a global list argument when it appears on both sides of the
/// subcommand, so the raw arguments are scanned instead.
fn set_overrides(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        } else if a == "--set" {
            out.extend(it.next().cloned());
        } else if let Some(v) = a.strip_prefix("--set=") {
            out.push(v.to_string());
        }
    }
    out
}

fn build_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::BuildCorpus { raw, vocab_size } => {
            if let Some(r) = raw {
                cfg.paths.raw = Some(r.clone());
            }
            if let Some(v) = vocab_size {
                cfg.vocab_size = *v;
            }
        }
        Command::Encode { input, binarize } => {
            if let Some(i) = input {
                cfg.paths.corpus = Some(i.clone());
            }
            cfg.binarize |= binarize;
        }
        Command::Eval { codes, ks, output } => {
            if let Some(c) = codes {
                cfg.paths.codes = c.clone();
            }
            if let Some(k) = ks {
                cfg.ks = config::parse_ks(k)?;
            }
            if let Some(o) = output {
                cfg.paths.output = Some(o.clone());
            }
        }
        Command::Pca { input, output } => {
            if let Some(i) = input {
                cfg.paths.corpus = Some(i.clone());
            }
            if let Some(o) = output {
                cfg.paths.output = Some(o.clone());
            }
        }
        Command::Pretrain | Command::Finetune => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult {
    let cfg = build_config(cli)?;
    match cli.command {
        Command::BuildCorpus { .. } => cmd_build_corpus(&cfg),
        Command::Pretrain => cmd_pretrain(&cfg),
        Command::Finetune => cmd_finetune(&cfg),
        Command::Encode { .. } => cmd_encode(&cfg),
        Command::Eval { .. } => cmd_eval(&cfg),
        Command::Pca { .. } => cmd_pca(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let mut cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let text: Vec<String> = args[1..].iter().map(|a| a.to_string_lossy().into_owned()).collect();
    cli.set = set_overrides(&text);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
