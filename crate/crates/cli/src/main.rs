//! `simvec`: corpus-to-AUC document similarity experiments.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use simvec_cli::{
    at, averaged_rows, evaluate_vectors, parse_config, run_experiment, serialize_config, tune_run,
    CliError, CliResult, MethodConfig, RunConfig, WeightKind,
};
use simvec_core::corpus::{ingest, Field};
use simvec_core::d2v::{self, TrainParams};
use simvec_core::eval::{NegativeStrategy, VectorSet};
use simvec_core::lsi::{train_lsi, LsiParams, Weighting};
use simvec_core::phrases::{phrases_for_tokens, top_k_terms, DEFAULT_MAX_LEN};
use simvec_core::preprocess::{preprocess_doc, prune_rare, raw_tokens, Stopwords, TokenStream};
use simvec_core::store::{self, VectorMeta};
use simvec_core::tfidf::{
    augment_with_phrases, build_df_timeline, build_vocabulary, incremental_tfidf_vector,
    tfidf_vector,
};
use simvec_core::tune::{self, SearchSpace};
use simvec_core::vectors::SparseVector;
use simvec_core::{exec, SimvecError};

#[derive(Parser)]
#[command(name = "simvec", version, about = "Document similarity experiments: ingest, vectorize, evaluate, tune.")]
struct Cli {
    /// Cap worker threads for parallel stages (0 keeps the default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a corpus JSONL file and optionally write a canonical copy.
    Ingest(IngestArgs),
    /// Clean, stem, and filter one corpus field into a token store.
    Preprocess(PreprocessArgs),
    /// Extract noun phrases from a raw token store.
    Phrases(PhrasesArgs),
    /// Factor a token store into a topic space.
    TrainLsi(TrainLsiArgs),
    /// Train document embeddings on a token store.
    TrainD2v(TrainD2vArgs),
    /// Write per-document vectors for a counting method.
    Vectorize(VectorizeArgs),
    /// Score a pair benchmark against stored vectors.
    Evaluate(EvaluateArgs),
    /// Search method hyper-parameters against benchmark AUC.
    Tune(TuneArgs),
    /// Run the full pipeline from a manifest.
    Run(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Corpus file, one JSON record per line.
    #[arg(long)]
    input: PathBuf,
    /// Field checked for emptiness during validation.
    #[arg(long, default_value = "all")]
    field: Field,
    /// Where to write the validated, canonicalized corpus.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Corpus file to read.
    #[arg(long)]
    corpus: PathBuf,
    /// Which document field to tokenize.
    #[arg(long)]
    field: Field,
    /// Extra stopword file, one term per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Drop terms appearing in fewer than this many documents.
    #[arg(long = "min-df", default_value_t = 1)]
    min_df: u32,
    /// Keep raw lowercased tokens: no stopwords, stemming, or pruning.
    #[arg(long)]
    raw: bool,
    /// Token store to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PhrasesArgs {
    /// Raw token store (from `preprocess --raw`).
    #[arg(long)]
    tokens: PathBuf,
    /// Longest phrase, in tokens.
    #[arg(long = "max-len", default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Keep only the k most frequent phrases corpus-wide.
    #[arg(long = "top-k")]
    top_k: Option<usize>,
    /// Phrase store to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainLsiArgs {
    /// Preprocessed token store.
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long, default_value_t = 200)]
    topics: usize,
    #[arg(long, default_value_t = 20_000)]
    chunksize: usize,
    #[arg(long, default_value_t = 1.0)]
    decay: f64,
    /// Cell weighting: tfidf, raw-count, or binary.
    #[arg(long, default_value = "tfidf")]
    weighting: Weighting,
    /// Where to write the model.
    #[arg(long = "model-out")]
    model_out: PathBuf,
    /// Optionally write the training documents' topic vectors.
    #[arg(long = "vectors-out")]
    vectors_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainD2vArgs {
    /// Preprocessed token store.
    #[arg(long)]
    tokens: PathBuf,
    /// 1 = distributed memory, 0 = distributed bag of words.
    #[arg(long, default_value_t = 1)]
    dm: u8,
    /// 1 = hierarchical softmax, 0 = negative sampling.
    #[arg(long, default_value_t = 0)]
    hs: u8,
    /// Embedding dimension.
    #[arg(long, default_value_t = 100)]
    size: usize,
    /// Maximum context distance.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Subsampling threshold.
    #[arg(long, default_value_t = 1e-3)]
    sample: f64,
    /// Training epochs.
    #[arg(long, default_value_t = 5)]
    iter: usize,
    /// Noise words per target under negative sampling.
    #[arg(long, default_value_t = 5)]
    negative: usize,
    /// Initial learning rate.
    #[arg(long, default_value_t = 0.025)]
    alpha0: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Where to write the model.
    #[arg(long = "model-out")]
    model_out: PathBuf,
    /// Optionally write the trained document vectors.
    #[arg(long = "vectors-out")]
    vectors_out: Option<PathBuf>,
    /// Optionally write averaged word vectors per document (w2v-avg).
    #[arg(long = "avg-vectors-out")]
    avg_vectors_out: Option<PathBuf>,
    /// Averaging weights for --avg-vectors-out: uniform or tfidf.
    #[arg(long = "average-weights", default_value = "uniform")]
    average_weights: WeightKindArg,
}

/// clap-facing wrapper so the flag parses through FromStr.
#[derive(Clone, Copy)]
struct WeightKindArg(WeightKind);

impl std::str::FromStr for WeightKindArg {
    type Err = SimvecError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(WeightKindArg)
    }
}

#[derive(Args)]
struct VectorizeArgs {
    /// Counting method: tfidf, tfidf-inc, or tfidf-phrase.
    #[arg(long)]
    method: String,
    /// Preprocessed token store.
    #[arg(long)]
    tokens: PathBuf,
    /// Corpus file; required by tfidf-inc for document dates.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Phrase store; required by tfidf-phrase.
    #[arg(long)]
    phrases: Option<PathBuf>,
    /// Sparse vector store to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Vector store produced by vectorize or a trainer.
    #[arg(long)]
    vectors: PathBuf,
    /// Corpus file (for classes and dates).
    #[arg(long)]
    corpus: PathBuf,
    /// Token store; required when the vector store's method is tfidf-inc.
    #[arg(long)]
    tokens: Option<PathBuf>,
    /// Positive pairs, one `id TAB id` per line.
    #[arg(long)]
    positives: PathBuf,
    /// Negative sampling strategy: random, same-class, or same-subclass.
    #[arg(long = "negative-strategy", default_value = "random")]
    strategy: NegativeStrategy,
    /// How many negative pairs to draw.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Where to write the ROC curve CSV.
    #[arg(long = "roc-out")]
    roc_out: Option<PathBuf>,
    /// Summary CSV to append the result record to.
    #[arg(long = "summary-out")]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    /// Experiment manifest supplying corpus, benchmark, and base method.
    #[arg(long)]
    config: PathBuf,
    /// Override the manifest's method (lsi or d2v).
    #[arg(long)]
    method: Option<String>,
    /// Search space file; defaults to the method's standard space.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Total trials, including initialization.
    #[arg(long)]
    budget: usize,
    /// Initial space-filling trials (default: twice the dimension count).
    #[arg(long)]
    init: Option<usize>,
    /// Override the manifest's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial log CSV to write.
    #[arg(long)]
    log: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment manifest.
    #[arg(long)]
    config: PathBuf,
    /// Override the manifest's method.
    #[arg(long)]
    method: Option<String>,
    /// Override the corpus field.
    #[arg(long)]
    field: Option<Field>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the negative pair count.
    #[arg(long)]
    n: Option<usize>,
    /// Override the negative sampling strategy.
    #[arg(long = "negative-strategy")]
    strategy: Option<NegativeStrategy>,
    /// Override the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the fully resolved manifest and exit without running.
    #[arg(long = "dry-run")]
    dry_run: bool,
}

fn main() {
    let cli = Cli::parse();
    exec::configure_threads(cli.threads);
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Ingest(a) => cmd_ingest(a),
        Cmd::Preprocess(a) => cmd_preprocess(a),
        Cmd::Phrases(a) => cmd_phrases(a),
        Cmd::TrainLsi(a) => cmd_train_lsi(a),
        Cmd::TrainD2v(a) => cmd_train_d2v(a),
        Cmd::Vectorize(a) => cmd_vectorize(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Tune(a) => cmd_tune(a),
        Cmd::Run(a) => cmd_run(a),
    }
}

fn require_exists(stage: &'static str, what: &str, path: &Path) -> CliResult<()> {
    if !path.exists() {
        return Err(CliError::new(stage, format!("{what} file {} does not exist", path.display())));
    }
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> CliResult<()> {
    require_exists("ingest", "corpus", &a.input)?;
    let (corpus, report) = at("ingest", ingest(&a.input, a.field))?;
    for (line, why) in &report.skipped {
        eprintln!("skipped line {line}: {why}");
    }
    if let Some(out) = &a.out {
        let file = fs::File::create(out)
            .map_err(|e| CliError::new("ingest", format!("cannot write {}: {e}", out.display())))?;
        at("ingest", corpus.write_jsonl(file))?;
    }
    println!(
        "ingested {} documents ({} skipped, {} with empty {})",
        corpus.len(),
        report.skipped.len(),
        report.empty_field,
        a.field
    );
    Ok(())
}

fn cmd_preprocess(a: PreprocessArgs) -> CliResult<()> {
    require_exists("preprocess", "corpus", &a.corpus)?;
    let (corpus, _) = at("ingest", ingest(&a.corpus, a.field))?;
    let (streams, pruned) = if a.raw {
        let streams = exec::map(corpus.docs(), |d| TokenStream {
            doc_id: d.id.clone(),
            field: a.field,
            tokens: raw_tokens(&d.text(a.field)),
        });
        (streams, 0)
    } else {
        let mut stop = Stopwords::standard();
        if let Some(path) = &a.stopwords {
            at("preprocess", stop.extend_from_file(path))?;
        }
        let streams = exec::map(corpus.docs(), |d| preprocess_doc(d, a.field, &stop));
        let (streams, report) = prune_rare(streams, a.min_df);
        (streams, report.removed_terms.len())
    };
    at("preprocess", store::write_token_streams(&a.out, a.field, &streams))?;
    println!(
        "wrote {} token streams to {} ({} rare terms pruned)",
        streams.len(),
        a.out.display(),
        pruned
    );
    Ok(())
}

fn cmd_phrases(a: PhrasesArgs) -> CliResult<()> {
    require_exists("phrases", "token", &a.tokens)?;
    if a.max_len < 2 {
        return Err(CliError::new("phrases", "--max-len must be at least 2"));
    }
    let (field, streams) = at("phrases", store::read_token_streams(&a.tokens))?;
    let mut rows: Vec<(String, BTreeMap<String, u32>)> =
        exec::map(&streams, |s| (s.doc_id.clone(), phrases_for_tokens(&s.tokens, a.max_len)));
    if let Some(k) = a.top_k {
        let keep = top_k_terms(rows.iter().map(|(_, m)| m), k);
        for (_, counts) in &mut rows {
            counts.retain(|p, _| keep.contains(p));
        }
    }
    let distinct: std::collections::BTreeSet<&str> =
        rows.iter().flat_map(|(_, m)| m.keys().map(|s| s.as_str())).collect();
    at("phrases", store::write_phrase_counts(&a.out, field, &rows))?;
    println!(
        "wrote phrase counts for {} documents ({} distinct phrases) to {}",
        rows.len(),
        distinct.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train_lsi(a: TrainLsiArgs) -> CliResult<()> {
    require_exists("train-lsi", "token", &a.tokens)?;
    let (field, streams) = at("train-lsi", store::read_token_streams(&a.tokens))?;
    let vocab = at("train-lsi", build_vocabulary(&streams))?;
    let params =
        LsiParams { topics: a.topics, chunksize: a.chunksize, decay: a.decay, weighting: a.weighting };
    let model = at("train-lsi", train_lsi(&streams, &vocab, &params))?;
    at("train-lsi", model.save_to(&a.model_out))?;
    if let Some(out) = &a.vectors_out {
        let rows: Vec<(String, Vec<f64>)> = streams
            .iter()
            .zip(model.doc_vectors())
            .map(|(s, v)| (s.doc_id.clone(), v))
            .collect();
        let meta = VectorMeta { method: "lsi".into(), field, dim: model.k() as u32 };
        at("train-lsi", store::write_dense_vectors(out, &meta, &rows))?;
    }
    println!(
        "trained {} topics on {} documents ({} terms), model at {}",
        model.k(),
        model.n_docs(),
        model.n_terms(),
        a.model_out.display()
    );
    Ok(())
}

fn flag01(stage: &'static str, name: &str, v: u8) -> CliResult<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(CliError::new(stage, format!("--{name} must be 0 or 1, got {other}"))),
    }
}

fn cmd_train_d2v(a: TrainD2vArgs) -> CliResult<()> {
    require_exists("train-d2v", "token", &a.tokens)?;
    let (field, streams) = at("train-d2v", store::read_token_streams(&a.tokens))?;
    let params = TrainParams {
        dm: flag01("train-d2v", "dm", a.dm)?,
        hs: flag01("train-d2v", "hs", a.hs)?,
        size: a.size,
        window: a.window,
        sample: a.sample,
        iter: a.iter,
        negative: a.negative,
        alpha0: a.alpha0,
        seed: a.seed,
    };
    let model = at("train-d2v", d2v::train(&streams, &params))?;
    at("train-d2v", model.save(&a.model_out))?;
    if let Some(out) = &a.vectors_out {
        let rows: Vec<(String, Vec<f64>)> = model
            .doc_ids()
            .iter()
            .zip(model.doc_vectors())
            .map(|(id, v)| (id.clone(), v.clone()))
            .collect();
        let meta = VectorMeta { method: "d2v".into(), field, dim: model.size() as u32 };
        at("train-d2v", store::write_dense_vectors(out, &meta, &rows))?;
    }
    if let Some(out) = &a.avg_vectors_out {
        let rows = at("train-d2v", averaged_rows(&model, &streams, a.average_weights.0))?;
        let meta = VectorMeta { method: "w2v-avg".into(), field, dim: model.size() as u32 };
        at("train-d2v", store::write_dense_vectors(out, &meta, &rows))?;
    }
    println!(
        "trained {}/{} embeddings (size {}) on {} documents ({} terms), model at {}",
        if params.dm { "dm" } else { "dbow" },
        if params.hs { "hs" } else { "ns" },
        params.size,
        model.doc_ids().len(),
        model.vocab().len(),
        a.model_out.display()
    );
    Ok(())
}

fn cmd_vectorize(a: VectorizeArgs) -> CliResult<()> {
    require_exists("vectorize", "token", &a.tokens)?;
    let (field, streams) = at("vectorize", store::read_token_streams(&a.tokens))?;
    let (rows, dim): (Vec<(String, SparseVector)>, usize) = match a.method.as_str() {
        "tfidf" => {
            let vocab = at("vectorize", build_vocabulary(&streams))?;
            let rows = exec::map(&streams, |s| (s.doc_id.clone(), tfidf_vector(s, &vocab)));
            (rows, vocab.len())
        }
        "tfidf-phrase" => {
            let phrases_path = a.phrases.as_ref().ok_or_else(|| {
                CliError::new("vectorize", "method tfidf-phrase needs --phrases")
            })?;
            require_exists("vectorize", "phrase", phrases_path)?;
            let (_, phrase_rows) = at("vectorize", store::read_phrase_counts(phrases_path))?;
            let by_id: BTreeMap<&str, &BTreeMap<String, u32>> =
                phrase_rows.iter().map(|(id, m)| (id.as_str(), m)).collect();
            let empty = BTreeMap::new();
            let augmented: Vec<TokenStream> = exec::map(&streams, |s| {
                let counts = by_id.get(s.doc_id.as_str()).copied().unwrap_or(&empty);
                augment_with_phrases(s, counts)
            });
            let vocab = at("vectorize", build_vocabulary(&augmented))?;
            let rows = exec::map(&augmented, |s| (s.doc_id.clone(), tfidf_vector(s, &vocab)));
            (rows, vocab.len())
        }
        "tfidf-inc" => {
            let corpus_path = a.corpus.as_ref().ok_or_else(|| {
                CliError::new("vectorize", "method tfidf-inc needs --corpus for document dates")
            })?;
            require_exists("vectorize", "corpus", corpus_path)?;
            let (corpus, _) = at("ingest", ingest(corpus_path, field))?;
            let timeline = at("vectorize", build_df_timeline(&corpus, &streams))?;
            let rows: simvec_core::Result<Vec<(String, SparseVector)>> = streams
                .iter()
                .map(|s| {
                    let doc = corpus
                        .lookup(&s.doc_id)
                        .ok_or_else(|| SimvecError::UnknownDoc(s.doc_id.clone()))?;
                    incremental_tfidf_vector(s, &timeline, doc.month())
                        .map(|v| (s.doc_id.clone(), v))
                })
                .collect();
            let dim = timeline.vocab().len();
            (at("vectorize", rows)?, dim)
        }
        other => {
            return Err(CliError::new(
                "vectorize",
                format!("unknown method {other:?}, expected tfidf, tfidf-inc, or tfidf-phrase"),
            ))
        }
    };
    let meta = VectorMeta { method: a.method.clone(), field, dim: dim as u32 };
    at("vectorize", store::write_sparse_vectors(&a.out, &meta, &rows))?;
    println!("wrote {} {} vectors (dim {}) to {}", rows.len(), a.method, dim, a.out.display());
    Ok(())
}

/// Peek at a store header to decide between sparse and dense readers.
fn read_vector_store(path: &Path) -> CliResult<(VectorMeta, VectorSet)> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::new("evaluate", format!("cannot open {}: {e}", path.display())))?;
    let first = BufReader::new(file)
        .lines()
        .next()
        .transpose()
        .map_err(|e| CliError::new("evaluate", e.to_string()))?
        .unwrap_or_default();
    let kind = first.strip_prefix("#simvec ").and_then(|r| r.split_whitespace().next());
    match kind {
        Some("sparse") => {
            let (meta, rows) = at("evaluate", store::read_sparse_vectors(path))?;
            Ok((meta, VectorSet::Sparse(rows.into_iter().collect())))
        }
        Some("dense") => {
            let (meta, rows) = at("evaluate", store::read_dense_vectors(path))?;
            Ok((meta, VectorSet::Dense(rows.into_iter().collect())))
        }
        _ => Err(CliError::new(
            "evaluate",
            format!("{} is not a vector store", path.display()),
        )),
    }
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult<()> {
    require_exists("evaluate", "vector", &a.vectors)?;
    require_exists("evaluate", "corpus", &a.corpus)?;
    require_exists("evaluate", "positives", &a.positives)?;
    let (meta, vectors) = read_vector_store(&a.vectors)?;
    let (corpus, _) = at("ingest", ingest(&a.corpus, meta.field))?;
    let positives = at("benchmark", store::read_pairs(&a.positives))?;

    let (roc, report, n_pos, n_neg) = if meta.method == "tfidf-inc" {
        let tokens = a.tokens.as_ref().ok_or_else(|| {
            CliError::new(
                "evaluate",
                "a tfidf-inc store holds own-month snapshots; pass --tokens to rescore pairs",
            )
        })?;
        require_exists("evaluate", "token", tokens)?;
        let (_, streams) = at("evaluate", store::read_token_streams(tokens))?;
        let timeline = at("evaluate", build_df_timeline(&corpus, &streams))?;
        let bench = at(
            "benchmark",
            simvec_core::eval::assemble_benchmark(&corpus, &positives, a.n, a.strategy, a.seed),
        )?;
        let report = at(
            "score",
            simvec_core::eval::score_pairs_incremental(&corpus, &streams, &timeline, &bench.pairs),
        )?;
        let roc = at("evaluate", simvec_core::eval::roc_auc(&bench.labels(), &report.scores))?;
        (roc, report, bench.n_positive(), bench.n_negative())
    } else {
        evaluate_vectors(&corpus, &vectors, &positives, a.strategy, a.n, a.seed)?
    };

    let line = store::summary_line(&meta.method, meta.field, a.strategy.name(), roc.auc);
    if let Some(out) = &a.roc_out {
        at("evaluate", store::write_roc_csv(out, &roc))?;
    }
    if let Some(out) = &a.summary_out {
        at("evaluate", store::append_summary(out, &line))?;
    }
    println!("{line}");
    println!(
        "auc = {:.6} over {} positives and {} negatives ({} zero-vector pairs)",
        roc.auc, n_pos, n_neg, report.zero_vectors
    );
    Ok(())
}

/// Swap the manifest's method for `name`, keeping parameters when the
/// method family stays the same and falling back to defaults otherwise.
fn method_with_name(current: &MethodConfig, name: &str) -> CliResult<MethodConfig> {
    let swapped = match (name, current) {
        ("tfidf", _) => MethodConfig::Tfidf,
        ("tfidf-inc", _) => MethodConfig::TfidfInc,
        ("tfidf-phrase", _) => MethodConfig::TfidfPhrase,
        ("lsi", MethodConfig::Lsi(p)) => MethodConfig::Lsi(p.clone()),
        ("lsi", _) => MethodConfig::Lsi(LsiParams::default()),
        ("d2v", MethodConfig::D2v(p)) => MethodConfig::D2v(p.clone()),
        ("d2v", MethodConfig::W2vAvg { params, .. }) => MethodConfig::D2v(params.clone()),
        ("d2v", _) => MethodConfig::D2v(TrainParams { seed: 0, ..TrainParams::default() }),
        ("w2v-avg", MethodConfig::W2vAvg { params, weights }) => {
            MethodConfig::W2vAvg { params: params.clone(), weights: *weights }
        }
        ("w2v-avg", MethodConfig::D2v(p)) => {
            MethodConfig::W2vAvg { params: p.clone(), weights: WeightKind::Uniform }
        }
        ("w2v-avg", _) => MethodConfig::W2vAvg {
            params: TrainParams { seed: 0, ..TrainParams::default() },
            weights: WeightKind::Uniform,
        },
        (other, _) => {
            return Err(CliError::new(
                "config",
                format!("unknown method {other:?}, expected tfidf, tfidf-inc, tfidf-phrase, lsi, d2v, or w2v-avg"),
            ))
        }
    };
    Ok(swapped)
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    require_exists("config", "manifest", path)?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new("config", format!("cannot read {}: {e}", path.display())))?;
    at("config", parse_config(&text))
}

fn cmd_tune(a: TuneArgs) -> CliResult<()> {
    let mut config = load_config(&a.config)?;
    if let Some(name) = &a.method {
        config.method = method_with_name(&config.method, name)?;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let space = match &a.space {
        Some(path) => {
            require_exists("tune", "space", path)?;
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::new("tune", format!("cannot read {}: {e}", path.display())))?;
            at("tune", tune::parse_space(&text))?
        }
        None => match &config.method {
            MethodConfig::Lsi(_) => SearchSpace::lsi_default(),
            MethodConfig::D2v(_) | MethodConfig::W2vAvg { .. } => SearchSpace::d2v_default(),
            other => {
                return Err(CliError::new(
                    "tune",
                    format!("method {} has no tunable parameters", other.name()),
                ))
            }
        },
    };
    let init = a.init.unwrap_or(2 * space.dims.len()).max(2);
    let outcome = tune_run(&config, &space, a.budget, init)?;
    fs::write(&a.log, tune::trial_log_csv(&outcome.log, &space))
        .map_err(|e| CliError::new("tune", format!("cannot write {}: {e}", a.log.display())))?;
    let best = outcome.log.best().expect("tune_run produced trials");
    let settings: Vec<String> = tune::named(&best.x, &space)
        .iter()
        .map(|(k, v)| format!("{k} = {v}"))
        .collect();
    println!(
        "{} trials, best auc = {:.6} with {}",
        outcome.log.len(),
        outcome.best_auc,
        settings.join(", ")
    );
    println!("trial log at {}", a.log.display());
    Ok(())
}

fn cmd_run(a: RunArgs) -> CliResult<()> {
    let mut config = load_config(&a.config)?;
    if let Some(name) = &a.method {
        config.method = method_with_name(&config.method, name)?;
    }
    if let Some(field) = a.field {
        config.field = field;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(n) = a.n {
        config.n_negatives = n;
    }
    if let Some(strategy) = a.strategy {
        config.strategy = strategy;
    }
    if let Some(output) = a.output {
        config.output = output;
    }
    if a.dry_run {
        print!("{}", serialize_config(&config));
        return Ok(());
    }
    let summary = run_experiment(&config)?;
    println!("{}", summary.line());
    println!(
        "{} documents, {} positives, {} negatives, {} zero-vector pairs, {:.2?} wall time",
        summary.n_docs,
        summary.n_positive,
        summary.n_negative,
        summary.zero_vector_pairs,
        summary.wall_time
    );
    Ok(())
}
