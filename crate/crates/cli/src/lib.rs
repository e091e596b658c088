//! Pipeline orchestration for the `simvec` binary: manifest parsing, the
//! end-to-end experiment runner, and hyper-parameter search plumbing.

pub mod config;

pub use config::{parse_config, serialize_config, MethodConfig, RunConfig, WeightKind};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use simvec_core::corpus::{ingest, Corpus, Field};
use simvec_core::d2v::{self, AverageWeights, TrainParams};
use simvec_core::eval::{
    assemble_benchmark, roc_auc, score_pairs, score_pairs_incremental, LabeledPair, RocResult,
    ScoreReport, VectorSet,
};
use simvec_core::lsi::train_lsi;
use simvec_core::phrases::{phrases_for_tokens, top_k_terms};
use simvec_core::preprocess::{preprocess_doc, prune_rare, raw_tokens, Stopwords, TokenStream};
use simvec_core::seeding::stage_seed;
use simvec_core::store::{self, VectorMeta};
use simvec_core::tfidf::{
    augment_with_phrases, build_df_timeline, build_vocabulary, incremental_tfidf_vector,
    tfidf_vector, DfTimeline,
};
use simvec_core::tune::{self, ParamValue, Point, SearchSpace, TrialLog};
use simvec_core::vectors::{DenseVector, SparseVector};
use simvec_core::{exec, Result as CoreResult, SimvecError};

/// A pipeline failure, tagged with the stage that produced it.
#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(stage: &'static str, message: impl Into<String>) -> Self {
        CliError { stage, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Tag a core result with the pipeline stage it belongs to.
pub fn at<T>(stage: &'static str, r: CoreResult<T>) -> CliResult<T> {
    r.map_err(|e| CliError::new(stage, e.to_string()))
}

/// Ingested and preprocessed pipeline state, reusable across method runs.
pub struct Prepared {
    pub corpus: Corpus,
    pub field: Field,
    pub streams: Vec<TokenStream>,
    pub pruned_terms: usize,
}

/// Fail early, naming the missing file, before any compute happens.
pub fn check_paths(config: &RunConfig) -> CliResult<()> {
    let mut required = vec![("corpus", &config.input), ("positives", &config.positives)];
    if let Some(sw) = &config.stopwords {
        required.push(("stopwords", sw));
    }
    for (what, path) in required {
        if !path.exists() {
            return Err(CliError::new(
                "config",
                format!("{what} file {} does not exist", path.display()),
            ));
        }
    }
    Ok(())
}

/// Ingest the corpus and produce cleaned, pruned token streams.
pub fn prepare(config: &RunConfig) -> CliResult<Prepared> {
    if !config.input.exists() {
        return Err(CliError::new(
            "config",
            format!("corpus file {} does not exist", config.input.display()),
        ));
    }
    let (corpus, _report) = at("ingest", ingest(&config.input, config.field))?;
    let mut stop = Stopwords::standard();
    if let Some(path) = &config.stopwords {
        at("preprocess", stop.extend_from_file(path))?;
    }
    let streams = exec::map(corpus.docs(), |d| preprocess_doc(d, config.field, &stop));
    let (streams, prune) = prune_rare(streams, config.min_df);
    Ok(Prepared { corpus, field: config.field, streams, pruned_terms: prune.removed_terms.len() })
}

/// Per-document phrase counts plus phrase-augmented token streams.
pub struct PhraseArtifacts {
    pub rows: Vec<(String, BTreeMap<String, u32>)>,
    pub augmented: Vec<TokenStream>,
}

/// Extract noun phrases from the raw field text, keep the `top_k` most
/// frequent corpus-wide, and append the survivors to each document's stream.
pub fn phrase_stage(prep: &Prepared, max_len: usize, top_k: usize) -> PhraseArtifacts {
    let rows: Vec<(String, BTreeMap<String, u32>)> = exec::map(prep.corpus.docs(), |d| {
        (d.id.clone(), phrases_for_tokens(&raw_tokens(&d.text(prep.field)), max_len))
    });
    let keep = top_k_terms(rows.iter().map(|(_, m)| m), top_k);
    let augmented = exec::map_range(prep.streams.len(), |i| {
        debug_assert_eq!(rows[i].0, prep.streams[i].doc_id);
        let kept: BTreeMap<String, u32> = rows[i]
            .1
            .iter()
            .filter(|(p, _)| keep.contains(*p))
            .map(|(p, c)| (p.clone(), *c))
            .collect();
        augment_with_phrases(&prep.streams[i], &kept)
    });
    PhraseArtifacts { rows, augmented }
}

/// Vector form a method produces: a concrete id-to-vector set, or a DF
/// timeline for pairwise IDF-replacement scoring.
pub enum MethodVectors {
    Set(VectorSet),
    Incremental(DfTimeline),
}

/// Stage label under which a method's vector construction runs.
pub fn vector_stage_name(method: &MethodConfig) -> &'static str {
    match method {
        MethodConfig::Lsi(_) => "train-lsi",
        MethodConfig::D2v(_) | MethodConfig::W2vAvg { .. } => "train-d2v",
        _ => "vectorize",
    }
}

fn meta(method: &str, field: Field, dim: usize) -> VectorMeta {
    VectorMeta { method: method.into(), field, dim: dim as u32 }
}

fn sparse_rows(streams: &[TokenStream], vocab: &simvec_core::tfidf::Vocabulary) -> Vec<(String, SparseVector)> {
    exec::map(streams, |s| (s.doc_id.clone(), tfidf_vector(s, vocab)))
}

fn to_sparse_set(rows: Vec<(String, SparseVector)>) -> MethodVectors {
    MethodVectors::Set(VectorSet::Sparse(rows.into_iter().collect()))
}

fn to_dense_set(rows: Vec<(String, DenseVector)>) -> MethodVectors {
    MethodVectors::Set(VectorSet::Dense(rows.into_iter().collect()))
}

/// Train or count vectors for `method` over the prepared corpus. With a
/// `persist_dir`, intermediate stores and models land there; without one the
/// computation is side-effect free (hyper-parameter search uses that path).
pub fn compute_vectors(
    prep: &Prepared,
    config: &RunConfig,
    method: &MethodConfig,
    persist_dir: Option<&Path>,
) -> CoreResult<MethodVectors> {
    let field = prep.field;
    match method {
        MethodConfig::Tfidf => {
            let vocab = build_vocabulary(&prep.streams)?;
            let rows = sparse_rows(&prep.streams, &vocab);
            if let Some(dir) = persist_dir {
                let path = dir.join(format!("vectors-tfidf-{field}.tsv"));
                store::write_sparse_vectors(&path, &meta("tfidf", field, vocab.len()), &rows)?;
            }
            Ok(to_sparse_set(rows))
        }
        MethodConfig::TfidfPhrase => {
            let art = phrase_stage(prep, config.phrase_max_len, config.phrase_top_k);
            let vocab = build_vocabulary(&art.augmented)?;
            let rows = sparse_rows(&art.augmented, &vocab);
            if let Some(dir) = persist_dir {
                store::write_phrase_counts(&dir.join(format!("phrases-{field}.tsv")), field, &art.rows)?;
                let path = dir.join(format!("vectors-tfidf-phrase-{field}.tsv"));
                store::write_sparse_vectors(&path, &meta("tfidf-phrase", field, vocab.len()), &rows)?;
            }
            Ok(to_sparse_set(rows))
        }
        MethodConfig::TfidfInc => {
            let timeline = build_df_timeline(&prep.corpus, &prep.streams)?;
            if let Some(dir) = persist_dir {
                // own-month snapshot per document, for inspection; pair
                // scoring recomputes with the earlier document's snapshot
                let rows: CoreResult<Vec<(String, SparseVector)>> = prep
                    .streams
                    .iter()
                    .map(|s| {
                        let doc = prep.corpus.lookup(&s.doc_id).expect("streams come from this corpus");
                        incremental_tfidf_vector(s, &timeline, doc.month())
                            .map(|v| (s.doc_id.clone(), v))
                    })
                    .collect();
                let path = dir.join(format!("vectors-tfidf-inc-{field}.tsv"));
                let dim = timeline.vocab().len();
                store::write_sparse_vectors(&path, &meta("tfidf-inc", field, dim), &rows?)?;
            }
            Ok(MethodVectors::Incremental(timeline))
        }
        MethodConfig::Lsi(params) => {
            let vocab = build_vocabulary(&prep.streams)?;
            let model = train_lsi(&prep.streams, &vocab, params)?;
            let rows: Vec<(String, DenseVector)> = prep
                .streams
                .iter()
                .zip(model.doc_vectors())
                .map(|(s, v)| (s.doc_id.clone(), v))
                .collect();
            if let Some(dir) = persist_dir {
                model.save_to(dir.join("model-lsi.bin"))?;
                let path = dir.join(format!("vectors-lsi-{field}.tsv"));
                store::write_dense_vectors(&path, &meta("lsi", field, model.k()), &rows)?;
            }
            Ok(to_dense_set(rows))
        }
        MethodConfig::D2v(params) => {
            let mut params = params.clone();
            params.seed = stage_seed(config.seed, "train-d2v");
            let model = d2v::train(&prep.streams, &params)?;
            let rows: Vec<(String, DenseVector)> = model
                .doc_ids()
                .iter()
                .zip(model.doc_vectors())
                .map(|(id, v)| (id.clone(), v.clone()))
                .collect();
            if let Some(dir) = persist_dir {
                model.save(&dir.join("model-d2v.bin"))?;
                let path = dir.join(format!("vectors-d2v-{field}.tsv"));
                store::write_dense_vectors(&path, &meta("d2v", field, model.size()), &rows)?;
            }
            Ok(to_dense_set(rows))
        }
        MethodConfig::W2vAvg { params, weights } => {
            let mut params = params.clone();
            params.seed = stage_seed(config.seed, "train-w2v");
            let model = d2v::train(&prep.streams, &params)?;
            let rows = averaged_rows(&model, &prep.streams, *weights)?;
            if let Some(dir) = persist_dir {
                model.save(&dir.join("model-w2v.bin"))?;
                let path = dir.join(format!("vectors-w2v-avg-{field}.tsv"));
                store::write_dense_vectors(&path, &meta("w2v-avg", field, model.size()), &rows)?;
            }
            Ok(to_dense_set(rows))
        }
    }
}

/// Average each stream's word vectors. Streams with no usable tokens (or an
/// all-zero weight mass under TFIDF weighting) fall back to the zero vector,
/// which pair scoring tallies rather than failing on.
pub fn averaged_rows(
    model: &d2v::EmbeddingModel,
    streams: &[TokenStream],
    weights: WeightKind,
) -> CoreResult<Vec<(String, DenseVector)>> {
    let size = model.size();
    let rows = match weights {
        WeightKind::Uniform => exec::map(streams, |s| {
            let v = d2v::average_word_vectors(model, s, AverageWeights::Uniform)
                .unwrap_or_else(|_| vec![0.0; size]);
            (s.doc_id.clone(), v)
        }),
        WeightKind::Tfidf => {
            let vocab = build_vocabulary(streams)?;
            exec::map(streams, |s| {
                let v = d2v::average_word_vectors(model, s, AverageWeights::Tfidf(&vocab))
                    .unwrap_or_else(|_| vec![0.0; size]);
                (s.doc_id.clone(), v)
            })
        }
    };
    Ok(rows)
}

/// Cosine-score the benchmark pairs under whichever vector form the method
/// produced.
pub fn score_benchmark(
    prep: &Prepared,
    vectors: &MethodVectors,
    pairs: &[LabeledPair],
) -> CoreResult<ScoreReport> {
    match vectors {
        MethodVectors::Set(set) => score_pairs(set, pairs),
        MethodVectors::Incremental(timeline) => {
            score_pairs_incremental(&prep.corpus, &prep.streams, timeline, pairs)
        }
    }
}

/// One finished experiment.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub method: String,
    pub field: Field,
    pub strategy: String,
    pub auc: f64,
    pub wall_time: Duration,
    pub n_docs: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub zero_vector_pairs: usize,
}

impl RunSummary {
    /// The `method,field,strategy,auc` record appended to summary.csv.
    pub fn line(&self) -> String {
        store::summary_line(&self.method, self.field, &self.strategy, self.auc)
    }
}

/// Run the full pipeline: ingest, preprocess, vectorize or train, sample
/// negatives, score, and write the ROC curve plus a summary record.
pub fn run_experiment(config: &RunConfig) -> CliResult<RunSummary> {
    let t0 = Instant::now();
    check_paths(config)?;
    if let Err(e) = fs::create_dir_all(&config.output) {
        return Err(CliError::new(
            "config",
            format!("cannot create output directory {}: {e}", config.output.display()),
        ));
    }

    let prep = prepare(config)?;
    let tokens_path = config.output.join(format!("tokens-{}.tsv", prep.field));
    at("preprocess", store::write_token_streams(&tokens_path, prep.field, &prep.streams))?;

    let vectors = at(
        vector_stage_name(&config.method),
        compute_vectors(&prep, config, &config.method, Some(&config.output)),
    )?;

    let positives = at("benchmark", store::read_pairs(&config.positives))?;
    let bench = at(
        "benchmark",
        assemble_benchmark(&prep.corpus, &positives, config.n_negatives, config.strategy, config.seed),
    )?;

    let report = at("score", score_benchmark(&prep, &vectors, &bench.pairs))?;
    let roc = at("evaluate", roc_auc(&bench.labels(), &report.scores))?;

    let summary = RunSummary {
        method: config.method.name().into(),
        field: prep.field,
        strategy: config.strategy.name().into(),
        auc: roc.auc,
        wall_time: t0.elapsed().max(Duration::from_nanos(1)),
        n_docs: prep.corpus.len(),
        n_positive: bench.n_positive(),
        n_negative: bench.n_negative(),
        zero_vector_pairs: report.zero_vectors,
    };

    let roc_path = config.output.join(format!(
        "roc-{}-{}-{}.csv",
        summary.method, summary.field, summary.strategy
    ));
    at("evaluate", store::write_roc_csv(&roc_path, &roc))?;
    at("evaluate", store::append_summary(&config.output.join("summary.csv"), &summary.line()))?;
    Ok(summary)
}

/// Evaluate already-built vectors against a benchmark; shared by the
/// `evaluate` subcommand and kept separate from the pipeline so stored
/// vectors from any source can be scored.
pub fn evaluate_vectors(
    corpus: &Corpus,
    vectors: &VectorSet,
    positives: &[(String, String)],
    strategy: simvec_core::eval::NegativeStrategy,
    n: usize,
    seed: u64,
) -> CliResult<(RocResult, ScoreReport, usize, usize)> {
    let bench = at("benchmark", assemble_benchmark(corpus, positives, n, strategy, seed))?;
    let report = at("score", score_pairs(vectors, &bench.pairs))?;
    let roc = at("evaluate", roc_auc(&bench.labels(), &report.scores))?;
    Ok((roc, report, bench.n_positive(), bench.n_negative()))
}

fn int_of(name: &str, v: &ParamValue) -> CoreResult<usize> {
    match v.as_i64() {
        Some(i) if i >= 0 => Ok(i as usize),
        _ => Err(SimvecError::Param(format!("{name} needs a nonnegative integer, got {v}"))),
    }
}

fn real_of(name: &str, v: &ParamValue) -> CoreResult<f64> {
    v.as_f64()
        .ok_or_else(|| SimvecError::Param(format!("{name} needs a numeric value, got {v}")))
}

fn bool_of(name: &str, v: &ParamValue) -> CoreResult<bool> {
    match v {
        ParamValue::Cat(s) if s == "0" => Ok(false),
        ParamValue::Cat(s) if s == "1" => Ok(true),
        ParamValue::Int(0) => Ok(false),
        ParamValue::Int(1) => Ok(true),
        other => Err(SimvecError::Param(format!("{name} must be 0 or 1, got {other}"))),
    }
}

fn patch_train(base: &TrainParams, named: &BTreeMap<String, ParamValue>) -> CoreResult<TrainParams> {
    let mut p = base.clone();
    for (key, value) in named {
        match key.as_str() {
            "dm" => p.dm = bool_of(key, value)?,
            "hs" => p.hs = bool_of(key, value)?,
            "size" => p.size = int_of(key, value)?,
            "window" => p.window = int_of(key, value)?,
            "sample" => p.sample = real_of(key, value)?,
            "iter" => p.iter = int_of(key, value)?,
            "negative" => p.negative = int_of(key, value)?,
            "alpha0" => p.alpha0 = real_of(key, value)?,
            other => {
                return Err(SimvecError::Param(format!("{other} is not a d2v parameter")))
            }
        }
    }
    p.validate()?;
    Ok(p)
}

/// Overlay a search point onto the base method configuration. Dimension
/// names must belong to the method's parameter set.
pub fn patch_method(
    base: &MethodConfig,
    point: &Point,
    space: &SearchSpace,
) -> CoreResult<MethodConfig> {
    let named = tune::named(point, space);
    match base {
        MethodConfig::Lsi(params) => {
            let mut p = params.clone();
            for (key, value) in &named {
                match key.as_str() {
                    "num-topics" | "topics" => p.topics = int_of(key, value)?,
                    "chunksize" => p.chunksize = int_of(key, value)?,
                    "decay" => p.decay = real_of(key, value)?,
                    other => {
                        return Err(SimvecError::Param(format!("{other} is not an lsi parameter")))
                    }
                }
            }
            p.validate()?;
            Ok(MethodConfig::Lsi(p))
        }
        MethodConfig::D2v(params) => Ok(MethodConfig::D2v(patch_train(params, &named)?)),
        MethodConfig::W2vAvg { params, weights } => Ok(MethodConfig::W2vAvg {
            params: patch_train(params, &named)?,
            weights: *weights,
        }),
        other => Err(SimvecError::Param(format!(
            "method {} has no tunable parameters",
            other.name()
        ))),
    }
}

/// Search outcome: the trial log plus the best method configuration found.
pub struct TuneOutcome {
    pub log: TrialLog,
    pub best_method: MethodConfig,
    pub best_auc: f64,
}

/// Optimize the configured method's hyper-parameters against benchmark AUC.
/// The corpus is ingested and the benchmark drawn once; each trial trains
/// and scores with the candidate parameters. The objective is negated AUC,
/// so lower is better and `best_auc` undoes the sign.
pub fn tune_run(
    config: &RunConfig,
    space: &SearchSpace,
    budget: usize,
    init: usize,
) -> CliResult<TuneOutcome> {
    check_paths(config)?;
    let prep = prepare(config)?;
    let positives = at("benchmark", store::read_pairs(&config.positives))?;
    let bench = at(
        "benchmark",
        assemble_benchmark(&prep.corpus, &positives, config.n_negatives, config.strategy, config.seed),
    )?;
    let labels = bench.labels();

    let objective = |point: &Point| -> CoreResult<f64> {
        let method = patch_method(&config.method, point, space)?;
        let vectors = compute_vectors(&prep, config, &method, None)?;
        let report = score_benchmark(&prep, &vectors, &bench.pairs)?;
        let roc = roc_auc(&labels, &report.scores)?;
        Ok(-roc.auc)
    };
    let log = at("tune", tune::optimize(objective, space, budget, init, config.seed))?;
    let best = log.best().expect("a positive budget yields at least one trial");
    let best_method = at("tune", patch_method(&config.method, &best.x, space))?;
    let best_auc = -best.y;
    Ok(TuneOutcome { log, best_method, best_auc })
}
