//! Vocabulary, document-frequency statistics, and the TFIDF family of
//! vectorizers: plain, phrase-augmented, and time-aware (incremental).
//!
//! Weights follow `TF(t,d) * ln((|D|+1) / (DF(t,D)+1))` with raw counts and
//! natural log. The incremental variant evaluates the same formula against a
//! monthly snapshot of cumulative document frequencies, so a document can be
//! scored as the corpus looked at any month `T`. Snapshots are derived from
//! the full-corpus counts by subtracting future months, which costs one pass
//! regardless of how many months are queried.

use std::collections::BTreeMap;

use crate::corpus::{Corpus, Month};
use crate::preprocess::TokenStream;
use crate::vectors::SparseVector;
use crate::{Result, SimvecError};

/// Term ↔ index mapping with per-term document frequencies. Indices are
/// assigned in lexicographic term order, so equal corpora always produce
/// identical vocabularies.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    terms: BTreeMap<String, u32>,
    df: Vec<u32>,
    n_docs: u32,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.terms.get(term).copied()
    }

    pub fn df(&self, index: u32) -> u32 {
        self.df[index as usize]
    }

    pub fn df_slice(&self) -> &[u32] {
        &self.df
    }

    /// Terms with their indices, in index (= lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.terms.iter().map(|(t, &i)| (t.as_str(), i))
    }

    pub fn idf(&self, index: u32) -> f64 {
        idf_value(self.n_docs, self.df[index as usize])
    }
}

fn idf_value(n_docs: u32, df: u32) -> f64 {
    ((f64::from(n_docs) + 1.0) / (f64::from(df) + 1.0)).ln()
}

/// Count terms and document frequencies over a set of token streams. Every
/// stream counts toward `|D|`, empty ones included.
pub fn build_vocabulary(streams: &[TokenStream]) -> Result<Vocabulary> {
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    for s in streams {
        let mut seen = std::collections::HashSet::new();
        for t in &s.tokens {
            if seen.insert(t.as_str()) {
                *df.entry(t.as_str()).or_insert(0) += 1;
            }
        }
    }
    if df.is_empty() {
        return Err(SimvecError::Param("empty vocabulary".into()));
    }
    let mut terms = BTreeMap::new();
    let mut df_vec = Vec::with_capacity(df.len());
    for (i, (term, count)) in df.into_iter().enumerate() {
        terms.insert(term.to_string(), i as u32);
        df_vec.push(count);
    }
    Ok(Vocabulary { terms, df: df_vec, n_docs: streams.len() as u32 })
}

pub(crate) fn term_frequencies(stream: &TokenStream, vocab: &Vocabulary) -> BTreeMap<u32, u32> {
    let mut tf = BTreeMap::new();
    for t in &stream.tokens {
        if let Some(idx) = vocab.index_of(t) {
            *tf.entry(idx).or_insert(0) += 1;
        }
    }
    tf
}

fn assemble(entries: Vec<(u32, f64)>, dim: u32) -> SparseVector {
    SparseVector::new(entries, dim).expect("tf map yields sorted unique in-range indices")
}

/// Plain TFIDF vector of one stream against a built vocabulary. Terms the
/// vocabulary does not know are ignored; exact-zero weights are omitted.
pub fn tfidf_vector(stream: &TokenStream, vocab: &Vocabulary) -> SparseVector {
    let entries = term_frequencies(stream, vocab)
        .into_iter()
        .map(|(idx, tf)| (idx, f64::from(tf) * vocab.idf(idx)))
        .collect();
    assemble(entries, vocab.len() as u32)
}

/// Monthly cumulative document-frequency snapshots over a corpus, with the
/// full-corpus [`Vocabulary`] embedded. Month `m`'s snapshot covers every
/// document dated in or before `m`.
#[derive(Clone, Debug)]
pub struct DfTimeline {
    vocab: Vocabulary,
    months: Vec<Month>,
    cumulative_df: Vec<Vec<u32>>,
    cumulative_n: Vec<u32>,
}

impl DfTimeline {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn months(&self) -> &[Month] {
        &self.months
    }

    /// Index of the snapshot in effect at month `T`: the latest corpus month
    /// not after `T`. `None` when `T` precedes the whole corpus.
    pub fn snapshot_at(&self, t: Month) -> Option<usize> {
        let pos = self.months.partition_point(|m| *m <= t);
        pos.checked_sub(1)
    }

    pub fn n_at(&self, snapshot: usize) -> u32 {
        self.cumulative_n[snapshot]
    }

    pub fn df_at(&self, snapshot: usize, term_index: u32) -> u32 {
        self.cumulative_df[snapshot][term_index as usize]
    }
}

/// Build the timeline for the given streams, dating each by its document's
/// corpus entry. Snapshots are computed from the full-corpus counts by
/// subtracting each later month's contribution.
pub fn build_df_timeline(corpus: &Corpus, streams: &[TokenStream]) -> Result<DfTimeline> {
    let vocab = build_vocabulary(streams)?;
    let mut by_month: BTreeMap<Month, Vec<&TokenStream>> = BTreeMap::new();
    for s in streams {
        let doc = corpus
            .lookup(&s.doc_id)
            .ok_or_else(|| SimvecError::UnknownDoc(s.doc_id.clone()))?;
        by_month.entry(doc.month()).or_default().push(s);
    }
    let months: Vec<Month> = by_month.keys().copied().collect();
    let n_terms = vocab.len();

    // per-month DF and doc-count contributions
    let mut month_df: Vec<Vec<u32>> = Vec::with_capacity(months.len());
    let mut month_n: Vec<u32> = Vec::with_capacity(months.len());
    for streams_in_month in by_month.values() {
        let mut df = vec![0u32; n_terms];
        for s in streams_in_month {
            let mut seen = std::collections::HashSet::new();
            for t in &s.tokens {
                if seen.insert(t.as_str()) {
                    df[vocab.index_of(t).expect("vocab built from these streams") as usize] += 1;
                }
            }
        }
        month_df.push(df);
        month_n.push(streams_in_month.len() as u32);
    }

    // walk backward from the full-corpus totals
    let last = months.len() - 1;
    let mut cumulative_df = vec![Vec::new(); months.len()];
    let mut cumulative_n = vec![0u32; months.len()];
    cumulative_df[last] = vocab.df.clone();
    cumulative_n[last] = vocab.n_docs;
    for i in (0..last).rev() {
        let mut df = cumulative_df[i + 1].clone();
        for (d, m) in df.iter_mut().zip(&month_df[i + 1]) {
            *d -= m;
        }
        cumulative_df[i] = df;
        cumulative_n[i] = cumulative_n[i + 1] - month_n[i + 1];
    }

    Ok(DfTimeline { vocab, months, cumulative_df, cumulative_n })
}

/// TFIDF against the corpus as it looked at month `T`. The caller must pick
/// `T` no earlier than the stream's own document month if it wants the
/// document counted in its own snapshot; a term unseen by the snapshot is
/// treated as `df = 0` (maximal IDF).
pub fn incremental_tfidf_vector(
    stream: &TokenStream,
    timeline: &DfTimeline,
    t: Month,
) -> Result<SparseVector> {
    let snap = timeline.snapshot_at(t).ok_or_else(|| {
        SimvecError::Param(format!("month {t} precedes the first corpus month"))
    })?;
    let n = timeline.n_at(snap);
    let entries = term_frequencies(stream, &timeline.vocab)
        .into_iter()
        .map(|(idx, tf)| (idx, f64::from(tf) * idf_value(n, timeline.df_at(snap, idx))))
        .collect();
    Ok(assemble(entries, timeline.vocab.len() as u32))
}

/// Append each phrase's joined form `count` times so downstream TF counting
/// sees phrases as ordinary terms. Original tokens are untouched.
pub fn augment_with_phrases(stream: &TokenStream, phrases: &BTreeMap<String, u32>) -> TokenStream {
    let mut tokens = stream.tokens.clone();
    for (joined, &count) in phrases {
        for _ in 0..count {
            tokens.push(joined.clone());
        }
    }
    TokenStream { doc_id: stream.doc_id.clone(), field: stream.field, tokens }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document, Field};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn stream(id: &str, tokens: &[&str]) -> TokenStream {
        TokenStream {
            doc_id: id.into(),
            field: Field::Title,
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn dated_doc(id: &str, date: &str) -> Document {
        let line = format!(r#"{{"id":"{id}","date":"{date}","title":"t"}}"#);
        serde_json::from_str(&line).unwrap()
    }

    #[test]
    fn vocabulary_counts_df_and_docs() {
        let v = build_vocabulary(&[stream("1", &["a", "a", "b"]), stream("2", &["a"])]).unwrap();
        assert_eq!(v.n_docs(), 2);
        assert_eq!(v.df(v.index_of("a").unwrap()), 2);
        assert_eq!(v.df(v.index_of("b").unwrap()), 1);
    }

    #[test]
    fn vocabulary_single_stream() {
        let v = build_vocabulary(&[stream("1", &["x"])]).unwrap();
        assert_eq!(v.n_docs(), 1);
        assert_eq!(v.len(), 1);
        assert_eq!(v.df(0), 1);
    }

    #[test]
    fn empty_stream_counts_toward_n_docs() {
        let v = build_vocabulary(&[stream("1", &["a"]), stream("2", &[])]).unwrap();
        assert_eq!(v.n_docs(), 2);
        assert_eq!(v.df(v.index_of("a").unwrap()), 1);
    }

    #[test]
    fn all_empty_is_an_error() {
        let err = build_vocabulary(&[stream("1", &[]), stream("2", &[])]).unwrap_err();
        assert!(err.to_string().contains("empty vocabulary"), "{err}");
    }

    #[test]
    fn indices_are_lexicographic() {
        let v = build_vocabulary(&[stream("1", &["b", "a", "c"])]).unwrap();
        assert_eq!(v.index_of("a"), Some(0));
        assert_eq!(v.index_of("b"), Some(1));
        assert_eq!(v.index_of("c"), Some(2));
    }

    #[test]
    fn weight_matches_hand_evaluation() {
        // |D|=3, focal has t twice, df[t]=1: 2 * ln(4/2)
        let streams =
            vec![stream("1", &["t", "t", "u"]), stream("2", &["u"]), stream("3", &["u"])];
        let v = build_vocabulary(&streams).unwrap();
        let vec0 = tfidf_vector(&streams[0], &v);
        let idx = v.index_of("t").unwrap();
        let w = vec0.entries.iter().find(|(i, _)| *i == idx).unwrap().1;
        assert_relative_eq!(w, 1.3863, epsilon = 1e-4);
        assert_relative_eq!(w, 2.0 * (4.0f64 / 2.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn ubiquitous_term_omitted() {
        let streams = vec![stream("1", &["t"]), stream("2", &["t"])];
        let v = build_vocabulary(&streams).unwrap();
        let vec0 = tfidf_vector(&streams[0], &v);
        assert!(vec0.is_zero(), "df == n_docs term must vanish");
    }

    #[test]
    fn empty_stream_empty_vector_full_dim() {
        let streams = vec![stream("1", &["a", "b"]), stream("2", &[])];
        let v = build_vocabulary(&streams).unwrap();
        let vec1 = tfidf_vector(&streams[1], &v);
        assert_eq!(vec1.nnz(), 0);
        assert_eq!(vec1.dim, 2);
    }

    #[test]
    fn unknown_terms_ignored() {
        let streams = vec![stream("1", &["a"]), stream("2", &["b"])];
        let v = build_vocabulary(&streams).unwrap();
        let out = tfidf_vector(&stream("x", &["zzz", "a"]), &v);
        assert_eq!(out.nnz(), 1, "zzz is out of vocabulary, a is kept");
    }

    #[test]
    fn weight_monotone_nonincreasing_in_df() {
        let mut prev = f64::INFINITY;
        for df in 1..=40u32 {
            let w = 3.0 * idf_value(40, df);
            assert!(w <= prev, "df={df}");
            prev = w;
        }
    }

    fn month(y: i32, m: u32) -> Month {
        Month { year: y, month: m }
    }

    fn two_month_fixture() -> (Corpus, Vec<TokenStream>) {
        let corpus = Corpus::from_documents(vec![
            dated_doc("jan", "2000-01-10"),
            dated_doc("mar", "2000-03-05"),
        ])
        .unwrap();
        let streams = vec![stream("jan", &["a"]), stream("mar", &["a", "b"])];
        (corpus, streams)
    }

    #[test]
    fn timeline_cumulative_counts() {
        let (corpus, streams) = two_month_fixture();
        let tl = build_df_timeline(&corpus, &streams).unwrap();
        assert_eq!(tl.months(), &[month(2000, 1), month(2000, 3)]);
        let jan = tl.snapshot_at(month(2000, 1)).unwrap();
        assert_eq!(tl.n_at(jan), 1);
        assert_eq!(tl.df_at(jan, tl.vocab().index_of("a").unwrap()), 1);
        assert_eq!(tl.df_at(jan, tl.vocab().index_of("b").unwrap()), 0);
        let mar = tl.snapshot_at(month(2000, 3)).unwrap();
        assert_eq!(tl.n_at(mar), 2);
        assert_eq!(tl.df_at(mar, tl.vocab().index_of("a").unwrap()), 2);
        assert_eq!(tl.df_at(mar, tl.vocab().index_of("b").unwrap()), 1);
    }

    #[test]
    fn timeline_gap_month_uses_latest_earlier_snapshot() {
        let (corpus, streams) = two_month_fixture();
        let tl = build_df_timeline(&corpus, &streams).unwrap();
        assert_eq!(tl.snapshot_at(month(2000, 2)), tl.snapshot_at(month(2000, 1)));
        assert_eq!(tl.snapshot_at(month(2005, 1)), tl.snapshot_at(month(2000, 3)));
        assert_eq!(tl.snapshot_at(month(1999, 12)), None);
    }

    #[test]
    fn single_month_timeline_equals_vocabulary() {
        let corpus = Corpus::from_documents(vec![
            dated_doc("x", "2010-06-01"),
            dated_doc("y", "2010-06-30"),
        ])
        .unwrap();
        let streams = vec![stream("x", &["p", "q"]), stream("y", &["q"])];
        let tl = build_df_timeline(&corpus, &streams).unwrap();
        assert_eq!(tl.months().len(), 1);
        let s = tl.snapshot_at(month(2010, 6)).unwrap();
        assert_eq!(tl.n_at(s), tl.vocab().n_docs());
        for (_, idx) in tl.vocab().iter() {
            assert_eq!(tl.df_at(s, idx), tl.vocab().df(idx));
        }
    }

    #[test]
    fn degenerate_first_document_scores_zero() {
        let (corpus, streams) = two_month_fixture();
        let tl = build_df_timeline(&corpus, &streams).unwrap();
        let v = incremental_tfidf_vector(&streams[0], &tl, month(2000, 1)).unwrap();
        assert!(v.is_zero(), "only doc in snapshot: ln(2/2) = 0 everywhere");
    }

    #[test]
    fn new_term_in_large_corpus_gets_high_idf() {
        let mut docs = Vec::new();
        let mut streams = Vec::new();
        for i in 0..999 {
            let id = format!("d{i}");
            docs.push(dated_doc(&id, "2000-01-15"));
            streams.push(stream(&id, &["common"]));
        }
        docs.push(dated_doc("focal", "2000-02-01"));
        streams.push(stream("focal", &["fresh"]));
        let corpus = Corpus::from_documents(docs).unwrap();
        let tl = build_df_timeline(&corpus, &streams).unwrap();
        let v = incremental_tfidf_vector(&streams[999], &tl, month(2000, 2)).unwrap();
        let idx = tl.vocab().index_of("fresh").unwrap();
        let w = v.entries.iter().find(|(i, _)| *i == idx).unwrap().1;
        assert_relative_eq!(w, 6.2156, epsilon = 1e-4);
        assert_relative_eq!(w, (1001.0f64 / 2.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn terminal_month_equals_plain_tfidf() {
        let (corpus, streams) = two_month_fixture();
        let tl = build_df_timeline(&corpus, &streams).unwrap();
        let vocab = build_vocabulary(&streams).unwrap();
        for s in &streams {
            let inc = incremental_tfidf_vector(s, &tl, month(2000, 3)).unwrap();
            let plain = tfidf_vector(s, &vocab);
            assert_eq!(inc, plain);
        }
    }

    #[test]
    fn before_first_month_errors() {
        let (corpus, streams) = two_month_fixture();
        let tl = build_df_timeline(&corpus, &streams).unwrap();
        assert!(incremental_tfidf_vector(&streams[0], &tl, month(1999, 6)).is_err());
    }

    #[test]
    fn unseen_term_gets_maximal_idf() {
        let (corpus, streams) = two_month_fixture();
        let tl = build_df_timeline(&corpus, &streams).unwrap();
        // "b" exists only from March; scoring a stream containing it at the
        // January snapshot must use df = 0
        let v = incremental_tfidf_vector(&stream("jan", &["b"]), &tl, month(2000, 1)).unwrap();
        let idx = tl.vocab().index_of("b").unwrap();
        let w = v.entries.iter().find(|(i, _)| *i == idx).unwrap().1;
        assert_relative_eq!(w, (2.0f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn augment_appends_phrases() {
        let s = stream("1", &["neural", "network"]);
        let phrases: BTreeMap<String, u32> = [("neural_network".to_string(), 1)].into();
        let got = augment_with_phrases(&s, &phrases);
        assert_eq!(got.tokens, vec!["neural", "network", "neural_network"]);
    }

    #[test]
    fn augment_empty_set_is_identity() {
        let s = stream("1", &["a"]);
        assert_eq!(augment_with_phrases(&s, &BTreeMap::new()), s);
    }

    #[test]
    fn augment_count_three_appends_three() {
        let s = stream("1", &[]);
        let phrases: BTreeMap<String, u32> = [("x_y".to_string(), 3)].into();
        let got = augment_with_phrases(&s, &phrases);
        assert_eq!(got.tokens, vec!["x_y", "x_y", "x_y"]);
        let vocab = build_vocabulary(std::slice::from_ref(&got)).unwrap();
        let v = tfidf_vector(&got, &vocab);
        assert_eq!(v.nnz(), 0, "single doc: idf ln(2/2) = 0");
    }

    proptest! {
        #[test]
        fn matches_brute_force_oracle(
            docs in prop::collection::vec(prop::collection::vec("[a-j]{1}", 0..30), 1..50)
        ) {
            let streams: Vec<TokenStream> = docs.iter().enumerate()
                .map(|(i, toks)| {
                    let refs: Vec<&str> = toks.iter().map(|s| s.as_str()).collect();
                    stream(&format!("d{i}"), &refs)
                })
                .collect();
            prop_assume!(streams.iter().any(|s| !s.tokens.is_empty()));
            let vocab = build_vocabulary(&streams).unwrap();
            let n = streams.len() as f64;
            for s in &streams {
                let got = tfidf_vector(s, &vocab);
                // independent recount straight from the token lists
                for (term, idx) in vocab.iter() {
                    let tf = s.tokens.iter().filter(|t| *t == term).count() as f64;
                    let df = streams.iter()
                        .filter(|o| o.tokens.iter().any(|t| t == term))
                        .count() as f64;
                    let expect = tf * ((n + 1.0) / (df + 1.0)).ln();
                    let stored = got.entries.iter()
                        .find(|(i, _)| *i == idx).map_or(0.0, |(_, w)| *w);
                    if expect == 0.0 {
                        prop_assert_eq!(stored, 0.0);
                    } else {
                        prop_assert!(((stored - expect) / expect).abs() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn forward_timeline_agrees_with_subtraction(
            spec in prop::collection::vec((1u32..5, prop::collection::vec("[a-f]{1}", 0..8)), 1..20)
        ) {
            let mut docs = Vec::new();
            let mut streams = Vec::new();
            for (i, (m, toks)) in spec.iter().enumerate() {
                let id = format!("d{i}");
                docs.push(dated_doc(&id, &format!("2001-{m:02}-15")));
                let refs: Vec<&str> = toks.iter().map(|s| s.as_str()).collect();
                streams.push(stream(&id, &refs));
            }
            prop_assume!(streams.iter().any(|s| !s.tokens.is_empty()));
            let corpus = Corpus::from_documents(docs).unwrap();
            let tl = build_df_timeline(&corpus, &streams).unwrap();
            // forward oracle: recount from scratch at every month
            for (mi, m) in tl.months().iter().enumerate() {
                let in_scope: Vec<&TokenStream> = streams.iter()
                    .filter(|s| corpus.lookup(&s.doc_id).unwrap().month() <= *m)
                    .collect();
                prop_assert_eq!(tl.n_at(mi) as usize, in_scope.len());
                for (term, idx) in tl.vocab().iter() {
                    let df = in_scope.iter()
                        .filter(|s| s.tokens.iter().any(|t| t == term))
                        .count() as u32;
                    prop_assert_eq!(tl.df_at(mi, idx), df, "term {} month {}", term, m);
                }
                if mi > 0 {
                    prop_assert!(tl.n_at(mi) >= tl.n_at(mi - 1));
                    for (_, idx) in tl.vocab().iter() {
                        prop_assert!(tl.df_at(mi, idx) >= tl.df_at(mi - 1, idx));
                    }
                }
            }
        }
    }
}
