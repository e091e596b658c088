//! Labeled pair benchmarks, similarity scoring, and ROC/AUC.
//!
//! Positive pairs come from an external file; negatives are sampled from the
//! corpus under a strategy (unconstrained, same main class, or same
//! subclass). Scoring takes cosines of stored vectors, or recomputes
//! incremental TFIDF vectors for both documents at the earlier document's
//! month so that the later document is judged with the earlier one's IDF
//! state. ROC sweeps the distinct score values; ties walk the diagonal.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::corpus::{Corpus, Document};
use crate::exec;
use crate::preprocess::TokenStream;
use crate::tfidf::{incremental_tfidf_vector, DfTimeline};
use crate::vectors::{cosine_dense, cosine_sparse, DenseVector, SparseVector};
use crate::{seeding, Result, SimvecError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

/// How negative pairs are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeStrategy {
    /// Any two distinct documents.
    Random,
    /// Both documents share a main class.
    SameClass,
    /// Both documents share a main class and subclass.
    SameSubclass,
}

impl NegativeStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            NegativeStrategy::Random => "random",
            NegativeStrategy::SameClass => "same-class",
            NegativeStrategy::SameSubclass => "same-subclass",
        }
    }
}

impl FromStr for NegativeStrategy {
    type Err = SimvecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(NegativeStrategy::Random),
            "same-class" => Ok(NegativeStrategy::SameClass),
            "same-subclass" => Ok(NegativeStrategy::SameSubclass),
            other => Err(SimvecError::Param(format!(
                "unknown negative strategy {other:?}, expected random, same-class, or same-subclass"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledPair {
    pub id_a: String,
    pub id_b: String,
    pub label: Label,
}

/// Positives plus sampled negatives, ready to score.
#[derive(Clone, Debug)]
pub struct PairBenchmark {
    pub pairs: Vec<LabeledPair>,
    pub negative_strategy: NegativeStrategy,
}

impl PairBenchmark {
    pub fn labels(&self) -> Vec<Label> {
        self.pairs.iter().map(|p| p.label).collect()
    }

    pub fn n_positive(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == Label::Positive).count()
    }

    pub fn n_negative(&self) -> usize {
        self.pairs.len() - self.n_positive()
    }
}

/// Validate externally supplied positives and append `n` sampled negatives.
pub fn assemble_benchmark(
    corpus: &Corpus,
    positives: &[(String, String)],
    n_negatives: usize,
    strategy: NegativeStrategy,
    seed: u64,
) -> Result<PairBenchmark> {
    let mut pairs = Vec::with_capacity(positives.len() + n_negatives);
    for (a, b) in positives {
        if corpus.lookup(a).is_none() {
            return Err(SimvecError::UnknownDoc(a.clone()));
        }
        if corpus.lookup(b).is_none() {
            return Err(SimvecError::UnknownDoc(b.clone()));
        }
        if a == b {
            return Err(SimvecError::Eval(format!("positive pair of {a:?} with itself")));
        }
        pairs.push(LabeledPair { id_a: a.clone(), id_b: b.clone(), label: Label::Positive });
    }
    for (a, b) in build_negatives(corpus, n_negatives, strategy, seed)? {
        pairs.push(LabeledPair { id_a: a, id_b: b, label: Label::Negative });
    }
    Ok(PairBenchmark { pairs, negative_strategy: strategy })
}

/// Sample `n` document pairs with replacement, uniformly over the ordered
/// pairs that satisfy the strategy. Never pairs a document with itself.
/// Documents with an empty class field are skipped under class strategies.
pub fn build_negatives(
    corpus: &Corpus,
    n: usize,
    strategy: NegativeStrategy,
    seed: u64,
) -> Result<Vec<(String, String)>> {
    let mut groups: BTreeMap<(&str, &str), Vec<&Document>> = BTreeMap::new();
    for doc in corpus.docs() {
        let key = match strategy {
            NegativeStrategy::Random => ("", ""),
            NegativeStrategy::SameClass => {
                if doc.main_class.is_empty() {
                    continue;
                }
                (doc.main_class.as_str(), "")
            }
            NegativeStrategy::SameSubclass => {
                if doc.main_class.is_empty() || doc.subclass.is_empty() {
                    continue;
                }
                (doc.main_class.as_str(), doc.subclass.as_str())
            }
        };
        groups.entry(key).or_default().push(doc);
    }
    let eligible: Vec<&Vec<&Document>> = groups.values().filter(|g| g.len() >= 2).collect();
    if eligible.is_empty() {
        return Err(SimvecError::Eval(format!(
            "no group with at least 2 documents under the {} strategy",
            strategy.name()
        )));
    }
    // weight each group by its ordered-pair count so every eligible pair is
    // equally likely regardless of group
    let mut cumulative: Vec<u128> = Vec::with_capacity(eligible.len());
    let mut total: u128 = 0;
    for g in &eligible {
        let m = g.len() as u128;
        total += m * (m - 1);
        cumulative.push(total);
    }
    let mut rng = seeding::stage_rng(seed, "negative-pairs");
    use rand::Rng;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random_range(0..total);
        let gi = cumulative.partition_point(|&c| c <= r);
        let group = eligible[gi];
        let i = rng.random_range(0..group.len());
        let mut j = rng.random_range(0..group.len() - 1);
        if j >= i {
            j += 1;
        }
        out.push((group[i].id.clone(), group[j].id.clone()));
    }
    Ok(out)
}

/// Per-document vectors under one method, keyed by document id.
#[derive(Clone, Debug)]
pub enum VectorSet {
    Sparse(BTreeMap<String, SparseVector>),
    Dense(BTreeMap<String, DenseVector>),
}

impl VectorSet {
    fn cosine(&self, a: &str, b: &str) -> Result<(f64, bool)> {
        match self {
            VectorSet::Sparse(map) => {
                let va = map.get(a).ok_or_else(|| SimvecError::UnknownDoc(a.into()))?;
                let vb = map.get(b).ok_or_else(|| SimvecError::UnknownDoc(b.into()))?;
                if va.is_zero() || vb.is_zero() {
                    return Ok((0.0, true));
                }
                Ok((cosine_sparse(va, vb)?, false))
            }
            VectorSet::Dense(map) => {
                let va = map.get(a).ok_or_else(|| SimvecError::UnknownDoc(a.into()))?;
                let vb = map.get(b).ok_or_else(|| SimvecError::UnknownDoc(b.into()))?;
                if va.iter().all(|x| *x == 0.0) || vb.iter().all(|x| *x == 0.0) {
                    return Ok((0.0, true));
                }
                Ok((cosine_dense(va, vb)?, false))
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VectorSet::Sparse(m) => m.len(),
            VectorSet::Dense(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pair scores in benchmark order. Pairs touching a zero vector score 0 and
/// are tallied instead of failing the run.
#[derive(Clone, Debug)]
pub struct ScoreReport {
    pub scores: Vec<f64>,
    pub zero_vectors: usize,
}

/// Cosine of stored vectors for every pair.
pub fn score_pairs(vectors: &VectorSet, pairs: &[LabeledPair]) -> Result<ScoreReport> {
    let results = exec::map(pairs, |p| vectors.cosine(&p.id_a, &p.id_b));
    collect_scores(results)
}

/// IDF-replacement scoring: both documents of a pair are vectorized with the
/// timeline snapshot at the earlier document's month, earlier meaning lowest
/// (date, id). The later document's terms are thus weighted by document
/// frequencies as of the earlier filing.
pub fn score_pairs_incremental(
    corpus: &Corpus,
    streams: &[TokenStream],
    timeline: &DfTimeline,
    pairs: &[LabeledPair],
) -> Result<ScoreReport> {
    let by_id: BTreeMap<&str, &TokenStream> =
        streams.iter().map(|s| (s.doc_id.as_str(), s)).collect();
    let results = exec::map(pairs, |p| -> Result<(f64, bool)> {
        let doc_a = corpus.lookup(&p.id_a).ok_or_else(|| SimvecError::UnknownDoc(p.id_a.clone()))?;
        let doc_b = corpus.lookup(&p.id_b).ok_or_else(|| SimvecError::UnknownDoc(p.id_b.clone()))?;
        let sa = by_id.get(p.id_a.as_str()).ok_or_else(|| SimvecError::UnknownDoc(p.id_a.clone()))?;
        let sb = by_id.get(p.id_b.as_str()).ok_or_else(|| SimvecError::UnknownDoc(p.id_b.clone()))?;
        let earlier = if (doc_a.date, &doc_a.id) <= (doc_b.date, &doc_b.id) { doc_a } else { doc_b };
        let t = earlier.month();
        let va = incremental_tfidf_vector(sa, timeline, t)?;
        let vb = incremental_tfidf_vector(sb, timeline, t)?;
        if va.is_zero() || vb.is_zero() {
            return Ok((0.0, true));
        }
        Ok((cosine_sparse(&va, &vb)?, false))
    });
    collect_scores(results)
}

fn collect_scores(results: Vec<Result<(f64, bool)>>) -> Result<ScoreReport> {
    let mut scores = Vec::with_capacity(results.len());
    let mut zero_vectors = 0;
    for r in results {
        let (s, zero) = r?;
        scores.push(s);
        if zero {
            zero_vectors += 1;
        }
    }
    Ok(ScoreReport { scores, zero_vectors })
}

/// ROC curve points and the area under them.
#[derive(Clone, Debug)]
pub struct RocResult {
    /// (false-positive rate, true-positive rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over the distinct score values, highest first. All pairs
/// sharing a score enter together, so positive-negative ties trace a
/// diagonal segment and contribute half weight to the area.
pub fn roc_auc(labels: &[Label], scores: &[f64]) -> Result<RocResult> {
    if labels.len() != scores.len() {
        return Err(SimvecError::Eval(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(SimvecError::Eval("scores contain NaN".into()));
    }
    let p = labels.iter().filter(|l| **l == Label::Positive).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(SimvecError::Eval(
            "ROC needs at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("NaN rejected above"));
    let mut points = Vec::with_capacity(labels.len() + 1);
    points.push((0.0, 0.0));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            match labels[order[j]] {
                Label::Positive => tp += 1,
                Label::Negative => fp += 1,
            }
            j += 1;
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
        i = j;
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(RocResult { points, auc })
}
