//! `scne` — segmentation-free compositional n-gram embeddings.
//!
//! Subcommands cover the whole pipeline: `count` builds a vocabulary,
//! `train` fits embeddings, `query`/`nn` inspect them, `pairs` dumps the
//! enumerated co-occurrences, `eval-sim`/`eval-clf` run the evaluation
//! protocols, and `info` prints a saved model's shape. Reports go to
//! standard output as JSON; progress and config echoes go to standard
//! error. Exit codes: 0 success, 1 usage error, 2 data or model error.

mod config;

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use scne::corpus::{BoundaryMode, BoundaryPolicy, Corpus};
use scne::eval::{
    eval_classification, eval_similarity, ClfProtocol, LabeledTextDataset, SimilarityDataset,
};
use scne::lattice;
use scne::model::{EmbeddingModel, ModelFormat};
use scne::trainer::{train, Mode, TrainConfig};
use scne::tsv::escape_field;
use scne::vocab::{build_vocab, count_ngrams, Vocab};

use config::{KvFile, Resolver};

/// How a command fails, which decides the exit code.
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Failure {
        Failure::Data(e.into())
    }
}

#[derive(Parser)]
#[command(name = "scne", version, about = "Segmentation-free compositional n-gram embeddings")]
struct Cli {
    /// Key-value config file (`key = value`, `#` comments); flags override
    /// its entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count character n-grams and write the top-M vocabulary as TSV.
    Count(CountArgs),
    /// Train embeddings on a raw corpus and save the model.
    Train(TrainArgs),
    /// Compose a vector for a string and print its components.
    Query(QueryArgs),
    /// Rank candidate strings by cosine similarity to a query.
    Nn(NnArgs),
    /// Dump enumerated target-context pairs as TSV (small corpora only).
    Pairs(PairsArgs),
    /// Word/sentence similarity evaluation (Spearman rank correlation).
    EvalSim(EvalSimArgs),
    /// Downstream classification evaluation (logistic regression).
    EvalClf(EvalClfArgs),
    /// Print a saved model's shape header.
    Info(InfoArgs),
}

#[derive(Args)]
struct CorpusOpts {
    /// UTF-8 corpus file, one document per line by default.
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    /// Document boundary policy: `newline`, `none`, or `char:<c>`.
    #[arg(long, value_name = "SPEC")]
    boundary: Option<String>,
    /// Drop space characters from the character stream.
    #[arg(long)]
    strip_spaces: bool,
}

impl CorpusOpts {
    fn resolve(self, r: &mut Resolver) -> Result<(PathBuf, BoundaryPolicy), Failure> {
        let path = r.require_path(self.corpus, "corpus")?;
        let spec = r.get(self.boundary, "boundary", "newline".to_string())?;
        let mode = parse_boundary(&spec).map_err(Failure::Usage)?;
        let strip_spaces = r.get_switch(self.strip_spaces, "strip-spaces")?;
        Ok((path, BoundaryPolicy { mode, strip_spaces }))
    }
}

fn parse_boundary(spec: &str) -> Result<BoundaryMode, String> {
    match spec {
        "newline" => Ok(BoundaryMode::Newline),
        "none" => Ok(BoundaryMode::None),
        other => {
            if let Some(rest) = other.strip_prefix("char:") {
                let mut chars = rest.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(BoundaryMode::Custom(c)),
                    _ => Err(format!("`char:` wants exactly one character, got `{rest}`")),
                }
            } else {
                Err(format!(
                    "bad boundary `{other}` (expected newline, none, or char:<c>)"
                ))
            }
        }
    }
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    corpus: CorpusOpts,
    /// Maximum n-gram length in characters.
    #[arg(long)]
    nmax: Option<usize>,
    /// Vocabulary capacity M.
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Output TSV path; standard output when absent.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusOpts,
    /// Training objective: `scne` or `sembei`.
    #[arg(long)]
    mode: Option<Mode>,
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Vocabulary capacity M.
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Maximum n-gram length.
    #[arg(long)]
    nmax: Option<usize>,
    /// Maximum target span length (defaults to nmax).
    #[arg(long)]
    ntarget: Option<usize>,
    /// Negative samples per pair.
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Negative-sampling distribution exponent.
    #[arg(long)]
    neg_exponent: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to save the binary model.
    #[arg(long, value_name = "FILE")]
    save: Option<PathBuf>,
    /// Also export the sub-n-gram matrix as text.
    #[arg(long, value_name = "FILE")]
    save_text: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// String to compose.
    #[arg(long)]
    text: Option<String>,
}

#[derive(Args)]
struct NnArgs {
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Query string.
    #[arg(long)]
    query: Option<String>,
    /// Candidate file, one string per line.
    #[arg(long, value_name = "FILE")]
    candidates: Option<PathBuf>,
    /// How many neighbours to print.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct PairsArgs {
    #[command(flatten)]
    corpus: CorpusOpts,
    /// Enumeration to dump: `scne` or `sembei`.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    ntarget: Option<usize>,
    /// Dump even when the target set exceeds the safety bound.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalSimArgs {
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// TSV: item1 <tab> item2 <tab> score.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct EvalClfArgs {
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// TSV: label <tab> text.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    train_frac: Option<f64>,
    /// Comma-separated grid for the regularization parameter C.
    #[arg(long)]
    c_grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let file = match KvFile::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            return 1;
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let result = match cli.command {
        Command::Count(args) => cmd_count(args, &file),
        Command::Train(args) => cmd_train(args, &file),
        Command::Query(args) => cmd_query(args, &file),
        Command::Nn(args) => cmd_nn(args, &file),
        Command::Pairs(args) => cmd_pairs(args, &file),
        Command::EvalSim(args) => cmd_eval_sim(args, &file),
        Command::EvalClf(args) => cmd_eval_clf(args, &file),
        Command::Info(args) => cmd_info(args, &file),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn load_corpus(path: &Path, policy: &BoundaryPolicy) -> Result<Corpus, Failure> {
    Ok(Corpus::from_file(path, policy)?)
}

fn build_vocab_for(corpus: &Corpus, n_max: usize, m: usize) -> Vocab {
    build_vocab(&count_ngrams(corpus, n_max), m, n_max)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let line = serde_json::to_string(value).context("serializing report")?;
    println!("{line}");
    Ok(())
}

fn cmd_count(args: CountArgs, file: &KvFile) -> Result<(), Failure> {
    let mut r = Resolver::new(file);
    let (path, policy) = args.corpus.resolve(&mut r)?;
    let n_max = r.get(args.nmax, "nmax", 8)?;
    let m = r.get(args.vocab_size, "vocab-size", 2_000_000)?;
    let output = r.optional_path(args.output, "output");
    if n_max < 1 || m < 1 {
        return Err(Failure::Usage("nmax and vocab-size must be >= 1".into()));
    }
    r.echo("count");

    let corpus = load_corpus(&path, &policy)?;
    let vocab = build_vocab_for(&corpus, n_max, m);
    match output {
        Some(out) => vocab.save_tsv(&out)?,
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            vocab.write_tsv(&mut w).context("writing vocabulary")?;
            w.flush().context("writing vocabulary")?;
        }
    }
    Ok(())
}

fn cmd_train(args: TrainArgs, file: &KvFile) -> Result<(), Failure> {
    let mut r = Resolver::new(file);
    let (path, policy) = args.corpus.resolve(&mut r)?;
    let mode = r.get(args.mode, "mode", Mode::Scne)?;
    let dim = r.get(args.dim, "dim", 200)?;
    let vocab_size = r.get(args.vocab_size, "vocab-size", 2_000_000)?;
    let n_max = r.get(args.nmax, "nmax", 8)?;
    let n_target = r.get(args.ntarget, "ntarget", n_max)?;
    let negatives = r.get(args.negatives, "negatives", 10)?;
    let epochs = r.get(args.epochs, "epochs", 10)?;
    let lr0 = r.get(args.lr, "lr", 0.01)?;
    let neg_exponent = r.get(args.neg_exponent, "neg-exponent", 1.0)?;
    let workers = r.get(args.workers, "workers", 1)?;
    let seed = r.get(args.seed, "seed", 42)?;
    let save = r.require_path(args.save, "save")?;
    let save_text = r.optional_path(args.save_text, "save-text");
    r.echo("train");

    let config = TrainConfig {
        dim,
        vocab_size,
        n_max,
        n_target,
        negatives,
        epochs,
        lr0,
        neg_exponent,
        mode,
        seed,
        workers,
    };
    config.validate()?;
    let corpus = load_corpus(&path, &policy)?;
    let vocab = build_vocab_for(&corpus, n_max, vocab_size);
    eprintln!(
        "[train] corpus: {} chars, {} documents; vocabulary: {} n-grams",
        corpus.n_chars(),
        corpus.n_docs(),
        vocab.len()
    );
    let (model, report) = train(&corpus, &vocab, &config)?;
    model.save(&save, ModelFormat::Binary)?;
    if let Some(text_path) = save_text {
        model.save(&text_path, ModelFormat::Text)?;
    }
    print_json(&report)
}

fn cmd_query(args: QueryArgs, file: &KvFile) -> Result<(), Failure> {
    let mut r = Resolver::new(file);
    let model_path = r.require_path(args.model, "model")?;
    let text = r.require(args.text, "text")?;
    r.echo("query");

    let model = EmbeddingModel::load(&model_path)?;
    let composed = model.compose(&text);
    if composed.is_empty() {
        eprintln!("[query] no in-vocabulary sub-n-grams; vector is null");
    }
    let rendered: Vec<String> = composed.vector.iter().map(|v| v.to_string()).collect();
    println!("{}", rendered.join(" "));
    Ok(())
}

fn cmd_nn(args: NnArgs, file: &KvFile) -> Result<(), Failure> {
    let mut r = Resolver::new(file);
    let model_path = r.require_path(args.model, "model")?;
    let query = r.require(args.query, "query")?;
    let candidates_path = r.require_path(args.candidates, "candidates")?;
    let k = r.get(args.k, "k", 10)?;
    r.echo("nn");

    let model = EmbeddingModel::load(&model_path)?;
    let raw = std::fs::read_to_string(&candidates_path)
        .with_context(|| format!("reading candidates {}", candidates_path.display()))?;
    let candidates: Vec<String> = raw
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .filter(|l| !l.is_empty())
        .collect();
    let neighbours = model.nearest_neighbors(&query, k, &candidates)?;
    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    for (candidate, similarity) in neighbours {
        writeln!(w, "{}\t{}", escape_field(&candidate), similarity)
            .context("writing neighbours")?;
    }
    w.flush().context("writing neighbours")?;
    Ok(())
}

/// Dumps refuse to enumerate more than this many targets without --force.
const PAIR_DUMP_LIMIT: u64 = 10_000_000;

fn cmd_pairs(args: PairsArgs, file: &KvFile) -> Result<(), Failure> {
    let mut r = Resolver::new(file);
    let (path, policy) = args.corpus.resolve(&mut r)?;
    let mode = r.get(args.mode, "mode", Mode::Scne)?;
    let n_max = r.get(args.nmax, "nmax", 8)?;
    let m = r.get(args.vocab_size, "vocab-size", 2_000_000)?;
    let n_target = r.get(args.ntarget, "ntarget", n_max)?;
    let force = r.get_switch(args.force, "force")?;
    r.echo("pairs");

    if n_max < 1 || m < 1 || n_target < 1 {
        return Err(Failure::Usage(
            "nmax, vocab-size and ntarget must be >= 1".into(),
        ));
    }
    let corpus = load_corpus(&path, &policy)?;
    let targets = lattice::target_count(&corpus, n_target);
    if targets > PAIR_DUMP_LIMIT && !force {
        return Err(Failure::Data(anyhow::anyhow!(
            "{targets} targets exceed the dump limit of {PAIR_DUMP_LIMIT}; pass --force to dump anyway"
        )));
    }
    let vocab = build_vocab_for(&corpus, n_max, m);
    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    match mode {
        Mode::Scne => {
            for span in lattice::stream_targets(&corpus, n_target) {
                let target = corpus.substring(span.start, span.end)?;
                for ctx in lattice::contexts(&corpus, span, &vocab, n_max)? {
                    writeln!(
                        w,
                        "{}\t{}",
                        escape_field(&target),
                        escape_field(vocab.ngram(ctx))
                    )
                    .context("writing pairs")?;
                }
            }
        }
        Mode::Sembei => {
            for (target, ctx) in lattice::sembei_pairs(&corpus, &vocab) {
                writeln!(
                    w,
                    "{}\t{}",
                    escape_field(vocab.ngram(target)),
                    escape_field(vocab.ngram(ctx))
                )
                .context("writing pairs")?;
            }
        }
    }
    w.flush().context("writing pairs")?;
    Ok(())
}

fn cmd_eval_sim(args: EvalSimArgs, file: &KvFile) -> Result<(), Failure> {
    let mut r = Resolver::new(file);
    let model_path = r.require_path(args.model, "model")?;
    let dataset_path = r.require_path(args.dataset, "dataset")?;
    r.echo("eval-sim");

    let model = EmbeddingModel::load(&model_path)?;
    let dataset = SimilarityDataset::from_file(&dataset_path)?;
    let report = eval_similarity(&model, &dataset)?;
    print_json(&report)
}

fn cmd_eval_clf(args: EvalClfArgs, file: &KvFile) -> Result<(), Failure> {
    let mut r = Resolver::new(file);
    let model_path = r.require_path(args.model, "model")?;
    let dataset_path = r.require_path(args.dataset, "dataset")?;
    let repeats = r.get(args.repeats, "repeats", 10)?;
    let train_frac = r.get(args.train_frac, "train-frac", 0.6)?;
    let c_grid_spec = r.get(args.c_grid, "c-grid", "0.1,0.5,1,5,10".to_string())?;
    let seed = r.get(args.seed, "seed", 42)?;

    let c_grid: Vec<f64> = c_grid_spec
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad c-grid entry `{tok}`")))
        })
        .collect::<Result<_, _>>()?;
    let protocol = ClfProtocol {
        repeats,
        train_frac,
        cv_folds: 3,
        c_grid,
        seed,
    };
    eprintln!("[eval-clf] cv-folds = {}", protocol.cv_folds);
    r.echo("eval-clf");
    protocol.validate()?;

    let model = EmbeddingModel::load(&model_path)?;
    let dataset = LabeledTextDataset::from_file(&dataset_path)?;
    let report = eval_classification(&model, &dataset, &protocol)?;
    print_json(&report)
}

fn cmd_info(args: InfoArgs, file: &KvFile) -> Result<(), Failure> {
    let mut r = Resolver::new(file);
    let model_path = r.require_path(args.model, "model")?;
    r.echo("info");
    let header = EmbeddingModel::read_header(&model_path)?;
    print_json(&header)
}
