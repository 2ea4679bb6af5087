//! Command-line frontend: learn subword dictionaries, train segmentation
//! models, segment and recombine text, measure coverage, and dump the
//! underlying transducers.
//!
//! Every command is deterministic: the same configuration and input bytes
//! produce byte-identical artifacts, independent of `--threads`.

use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use subseg::apply::{self, recombine_line};
use subseg::corpus::{
    build_vocabulary, count_char_ngrams_weighted, load_corpus, CharMode, Corpus, CountWeighting,
    WordVocabulary, DEFAULT_MAX_NGRAM,
};
use subseg::dictionary::{import_external, learn_bpe, learn_extended_bpe, SubwordDictionary};
use subseg::estimator::{train_ml, train_viterbi, TrainOptions, DEFAULT_ITERATIONS};
use subseg::graphs::{
    build_o_wfst, build_sd_wfst, build_sg_wfst, build_w_wfst, symbol_tables, ModelParams,
};

const DEFAULT_DICT_SIZE: usize = 20000;

#[derive(Parser)]
#[command(
    name = "subseg",
    version,
    about = "Subword dictionary learning and word segmentation",
    disable_help_subcommand = true
)]
struct Cli {
    /// Worker threads for parallel sections (0 = all cores). Results do
    /// not depend on this setting.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Bpe,
    Ebpe,
    Import,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ml,
    Viterbi,
}

#[derive(Clone, Copy, ValueEnum)]
enum CharModeArg {
    Codepoint,
    Grapheme,
}

impl From<CharModeArg> for CharMode {
    fn from(a: CharModeArg) -> CharMode {
        match a {
            CharModeArg::Codepoint => CharMode::Codepoint,
            CharModeArg::Grapheme => CharMode::Grapheme,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphArg {
    Sd,
    Sg,
    W,
    O,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a subword dictionary from a corpus, or import one.
    LearnDict(LearnDictArgs),
    /// Train unigram/bigram subword probabilities over a corpus.
    Train(TrainArgs),
    /// Segment the words of a text with a trained model.
    Segment(SegmentArgs),
    /// Undo context-marked segmentation, restoring words.
    Recombine(RecombineArgs),
    /// Out-of-vocabulary rates of a test text against a training corpus.
    Oov(OovArgs),
    /// Dump one of the segmentation transducers in text form.
    DumpFst(DumpFstArgs),
    /// Corpus statistics: vocabulary and character n-gram tables.
    Stats(StatsArgs),
}

#[derive(Args)]
struct LearnDictArgs {
    /// Training corpus (UTF-8 text). Required for bpe/ebpe.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Dictionary output file.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "bpe")]
    method: MethodArg,
    /// Dictionary size for bpe; with ebpe, cross-checks the cap sum.
    #[arg(long)]
    size: Option<usize>,
    /// Per-length addition caps for ebpe, e.g. 48,1000,4000,6000,4000,3000,1952.
    #[arg(long, value_delimiter = ',')]
    caps: Option<Vec<usize>>,
    /// Subword list to import (one `subword` or `subword<TAB>count` per line).
    #[arg(long)]
    import_file: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_NGRAM)]
    max_ngram: usize,
    #[arg(long, value_enum, default_value = "codepoint")]
    char_mode: CharModeArg,
    /// Count each word type once instead of weighting by frequency.
    #[arg(long)]
    type_weighted: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Training corpus (UTF-8 text).
    #[arg(long)]
    input: PathBuf,
    /// Dictionary learned by learn-dict.
    #[arg(long)]
    dict: PathBuf,
    /// Output directory: dictionary.tsv, bigram.tsv, report.txt,
    /// segmentations.tsv.
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long, value_enum, default_value = "ml")]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iters: usize,
    /// Disable the probability floor (bare update equations).
    #[arg(long)]
    no_floor: bool,
    /// Weight each word by its corpus frequency.
    #[arg(long)]
    freq_weighted: bool,
    /// Stop when the log-likelihood gain drops below this threshold
    /// (default 1e-6 when the flag is given without a value).
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-6")]
    early_stop: Option<f64>,
    #[arg(long, value_enum, default_value = "codepoint")]
    char_mode: CharModeArg,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output path, or `-` for stdout.
    #[arg(long, default_value = "-")]
    output: String,
    /// Model directory produced by train.
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Bare dictionary (uniform bigram) instead of a trained model.
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Attach context markers to the subwords.
    #[arg(long)]
    mark: bool,
    #[arg(long, value_enum, default_value = "codepoint")]
    char_mode: CharModeArg,
}

#[derive(Args)]
struct RecombineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "-")]
    output: String,
}

#[derive(Args)]
struct OovArgs {
    /// Training corpus defining the known vocabulary.
    #[arg(long)]
    train: PathBuf,
    /// Test corpus to score.
    #[arg(long)]
    test: PathBuf,
    /// Also report the share of test tokens with no segmentation under
    /// this dictionary.
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "codepoint")]
    char_mode: CharModeArg,
}

#[derive(Args)]
struct DumpFstArgs {
    #[arg(long, value_enum)]
    graph: GraphArg,
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Word for the w and o graphs.
    #[arg(long)]
    word: Option<String>,
    #[arg(long, default_value = "-")]
    output: String,
    #[arg(long, value_enum, default_value = "codepoint")]
    char_mode: CharModeArg,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Write the vocabulary as `word<TAB>count`, most frequent first.
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    /// Write n-gram tables as `length<TAB>ngram<TAB>count`.
    #[arg(long)]
    ngrams_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_NGRAM)]
    max_ngram: usize,
    #[arg(long, value_enum, default_value = "codepoint")]
    char_mode: CharModeArg,
    #[arg(long)]
    type_weighted: bool,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<subseg::Error> for CliError {
    fn from(e: subseg::Error) -> CliError {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn read_corpus(path: &Path, mode: CharMode) -> CliResult<Corpus> {
    let file = File::open(path).map_err(|e| data_err(path, e))?;
    load_corpus(BufReader::new(file), mode).map_err(|e| data_err(path, e))
}

fn read_dictionary(path: &Path) -> CliResult<SubwordDictionary> {
    let file = File::open(path).map_err(|e| data_err(path, e))?;
    SubwordDictionary::read_tsv(BufReader::new(file)).map_err(|e| data_err(path, e))
}

fn write_output(target: &str, bytes: &[u8]) -> CliResult<()> {
    if target == "-" {
        io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Data(e.to_string()))
    } else {
        fs::write(target, bytes).map_err(|e| CliError::Data(format!("{target}: {e}")))
    }
}

fn weighting(type_weighted: bool) -> CountWeighting {
    if type_weighted {
        CountWeighting::WordType
    } else {
        CountWeighting::TokenFrequency
    }
}

fn run_learn_dict(args: &LearnDictArgs) -> CliResult<()> {
    let dict = match args.method {
        MethodArg::Import => {
            let path = args
                .import_file
                .as_ref()
                .ok_or_else(|| usage("--method import requires --import-file"))?;
            if args.caps.is_some() || args.size.is_some() {
                return Err(usage("--size/--caps do not apply to --method import"));
            }
            let file = File::open(path).map_err(|e| data_err(path, e))?;
            import_external(BufReader::new(file)).map_err(|e| data_err(path, e))?
        }
        MethodArg::Bpe => {
            if args.caps.is_some() {
                return Err(usage("--caps requires --method ebpe"));
            }
            let input = args
                .input
                .as_ref()
                .ok_or_else(|| usage("--method bpe requires --input"))?;
            let corpus = read_corpus(input, args.char_mode.into())?;
            let psi =
                count_char_ngrams_weighted(&corpus, args.max_ngram, weighting(args.type_weighted));
            learn_bpe(&psi, args.size.unwrap_or(DEFAULT_DICT_SIZE))?
        }
        MethodArg::Ebpe => {
            let caps = args
                .caps
                .as_ref()
                .ok_or_else(|| usage("--method ebpe requires --caps"))?;
            if caps.len() != args.max_ngram {
                return Err(usage(format!(
                    "--caps must list {} values (one per n-gram length)",
                    args.max_ngram
                )));
            }
            if let Some(size) = args.size {
                let sum: usize = caps.iter().sum();
                if sum != size {
                    return Err(usage(format!("--caps sum to {sum}, but --size is {size}")));
                }
            }
            let input = args
                .input
                .as_ref()
                .ok_or_else(|| usage("--method ebpe requires --input"))?;
            let corpus = read_corpus(input, args.char_mode.into())?;
            let psi =
                count_char_ngrams_weighted(&corpus, args.max_ngram, weighting(args.type_weighted));
            learn_extended_bpe(&psi, caps)?
        }
    };
    let mut buf = Vec::new();
    dict.write_tsv(&mut buf)?;
    fs::write(&args.output, buf).map_err(|e| data_err(&args.output, e))?;
    eprintln!("wrote {} entries to {}", dict.len(), args.output.display());
    Ok(())
}

fn run_train(args: &TrainArgs) -> CliResult<()> {
    if let Some(tol) = args.early_stop {
        if !tol.is_finite() || tol < 0.0 {
            return Err(usage("--early-stop must be a non-negative number"));
        }
    }
    let corpus = read_corpus(&args.input, args.char_mode.into())?;
    let vocab = build_vocabulary(&corpus);
    let dict = read_dictionary(&args.dict)?;
    let opts = TrainOptions {
        iterations: args.iters,
        floor: if args.no_floor {
            None
        } else {
            Some(subseg::estimator::DEFAULT_PROB_FLOOR)
        },
        frequency_weighted: args.freq_weighted,
        early_stop_tol: args.early_stop,
        char_mode: args.char_mode.into(),
    };
    let (theta, report) = match args.mode {
        ModeArg::Ml => train_ml(&vocab, &dict, &opts)?,
        ModeArg::Viterbi => train_viterbi(&vocab, &dict, &opts)?,
    };

    theta
        .save_dir(&args.model_dir)
        .map_err(|e| data_err(&args.model_dir, e))?;
    let mut report_buf = String::new();
    for (i, ll) in report.log_likelihoods.iter().enumerate() {
        report_buf.push_str(&format!("{}\t{}\n", i + 1, ll));
    }
    fs::write(args.model_dir.join("report.txt"), report_buf)
        .map_err(|e| data_err(&args.model_dir, e))?;
    let mut seg_buf = String::new();
    for (word, pieces) in &report.segmentations {
        seg_buf.push_str(&format!("{word}\t{}\n", pieces.join(" ")));
    }
    fs::write(args.model_dir.join("segmentations.tsv"), seg_buf)
        .map_err(|e| data_err(&args.model_dir, e))?;

    if !report.excluded.is_empty() {
        eprintln!(
            "warning: {} of {} words have no dictionary segmentation and were excluded",
            report.excluded.len(),
            vocab.len()
        );
    }
    eprintln!(
        "trained {} iterations on {} words; model written to {}",
        report.iterations_run,
        report.segmentations.len(),
        args.model_dir.display()
    );
    Ok(())
}

fn load_model(model_dir: Option<&PathBuf>, dict: Option<&PathBuf>) -> CliResult<ModelParams> {
    match (model_dir, dict) {
        (Some(dir), None) => {
            let theta = ModelParams::load_dir(dir).map_err(|e| data_err(dir, e))?;
            theta.validate().map_err(|e| data_err(dir, e))?;
            Ok(theta)
        }
        (None, Some(path)) => Ok(ModelParams::uniform_init(read_dictionary(path)?)),
        (Some(_), Some(_)) => Err(usage("give either --model-dir or --dict, not both")),
        (None, None) => Err(usage("one of --model-dir or --dict is required")),
    }
}

fn run_segment(args: &SegmentArgs) -> CliResult<()> {
    let theta = load_model(args.model_dir.as_ref(), args.dict.as_ref())?;
    let corpus = read_corpus(&args.input, args.char_mode.into())?;
    let (lines, stats) = apply::segment_text(&corpus, &theta, args.mark)?;
    let mut buf = String::new();
    for line in &lines {
        buf.push_str(line);
        buf.push('\n');
    }
    write_output(&args.output, buf.as_bytes())?;
    if stats.unsegmentable > 0 {
        eprintln!(
            "warning: {} of {} tokens passed through unsegmented ({} distinct)",
            stats.unsegmentable,
            stats.tokens,
            stats.flagged.len()
        );
    }
    Ok(())
}

fn run_recombine(args: &RecombineArgs) -> CliResult<()> {
    let file = File::open(&args.input).map_err(|e| data_err(&args.input, e))?;
    let mut text = String::new();
    BufReader::new(file)
        .read_to_string(&mut text)
        .map_err(|e| data_err(&args.input, e))?;
    let mut buf = String::new();
    let mut malformed = 0;
    let mut dangling = 0;
    for line in text.lines() {
        let outcome = recombine_line(line);
        malformed += outcome.malformed;
        dangling += outcome.dangling;
        buf.push_str(&outcome.words.join(" "));
        buf.push('\n');
    }
    write_output(&args.output, buf.as_bytes())?;
    if malformed + dangling > 0 {
        eprintln!("warning: {malformed} malformed and {dangling} dangling marker sequences");
    }
    Ok(())
}

fn run_oov(args: &OovArgs) -> CliResult<()> {
    let mode: CharMode = args.char_mode.into();
    let train = read_corpus(&args.train, mode)?;
    let test = read_corpus(&args.test, mode)?;
    let vocab: WordVocabulary = build_vocabulary(&train);
    let dict = match &args.dict {
        Some(p) => Some(read_dictionary(p)?),
        None => None,
    };
    let report = apply::oov_report(&vocab, &test, dict.as_ref())?;
    let mut out = String::new();
    out.push_str(&format!("oov_rate: {}\n", report.oov_rate));
    if let Some(r) = report.unsegmentable_rate {
        out.push_str(&format!("unsegmentable_rate: {r}\n"));
    }
    out.push_str(&format!("test_tokens: {}\n", report.test_tokens));
    out.push_str(&format!("oov_tokens: {}\n", report.oov_tokens));
    if let Some(n) = report.unsegmentable_tokens {
        out.push_str(&format!("unsegmentable_tokens: {n}\n"));
    }
    io::stdout()
        .write_all(out.as_bytes())
        .map_err(|e| CliError::Data(e.to_string()))
}

fn run_dump_fst(args: &DumpFstArgs) -> CliResult<()> {
    let theta = load_model(args.model_dir.as_ref(), args.dict.as_ref())?;
    let mode: CharMode = args.char_mode.into();
    let (chars, subwords) = symbol_tables(&theta.dict, mode);
    let need_word = || {
        args.word
            .clone()
            .ok_or_else(|| usage("--graph w and --graph o require --word"))
    };
    let machine = match args.graph {
        GraphArg::Sd => build_sd_wfst(&theta.dict, mode, &chars, &subwords),
        GraphArg::Sg => build_sg_wfst(&theta, &subwords),
        GraphArg::W => build_w_wfst(&need_word()?, mode, &chars)?,
        GraphArg::O => {
            let sd = build_sd_wfst(&theta.dict, mode, &chars, &subwords);
            let sg = build_sg_wfst(&theta, &subwords);
            build_o_wfst(&need_word()?, &sd, &sg, mode)?
        }
    };
    write_output(&args.output, machine.to_text_string().as_bytes())
}

fn run_stats(args: &StatsArgs) -> CliResult<()> {
    let corpus = read_corpus(&args.input, args.char_mode.into())?;
    let vocab = build_vocabulary(&corpus);
    let psi = count_char_ngrams_weighted(&corpus, args.max_ngram, weighting(args.type_weighted));
    if let Some(path) = &args.vocab_out {
        let mut buf = Vec::new();
        vocab.write_tsv(&mut buf)?;
        fs::write(path, buf).map_err(|e| data_err(path, e))?;
    }
    if let Some(path) = &args.ngrams_out {
        let mut buf = Vec::new();
        psi.write_tsv(&mut buf)?;
        fs::write(path, buf).map_err(|e| data_err(path, e))?;
    }
    let mut out = String::new();
    out.push_str(&format!("lines: {}\n", corpus.n_lines()));
    out.push_str(&format!("tokens: {}\n", corpus.n_tokens()));
    out.push_str(&format!("word_types: {}\n", vocab.len()));
    out.push_str(&format!("characters: {}\n", psi.alphabet_size()));
    for l in 1..=args.max_ngram {
        out.push_str(&format!("ngrams_{l}: {}\n", psi.table(l).len()));
    }
    io::stdout()
        .write_all(out.as_bytes())
        .map_err(|e| CliError::Data(e.to_string()))
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::LearnDict(args) => run_learn_dict(args),
        Command::Train(args) => run_train(args),
        Command::Segment(args) => run_segment(args),
        Command::Recombine(args) => run_recombine(args),
        Command::Oov(args) => run_oov(args),
        Command::DumpFst(args) => run_dump_fst(args),
        Command::Stats(args) => run_stats(args),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: usize) -> CliResult<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: usize) -> CliResult<()> {
    if threads > 1 {
        eprintln!("warning: built without the parallel feature; --threads has no effect");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error: {first} (try --help)");
            return ExitCode::from(1);
        }
    };
    let outcome = configure_threads(cli.threads).and_then(|()| run(&cli));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
