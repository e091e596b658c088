//! Text preprocessing: raw field text → cleaned, stemmed, stopword-free
//! token streams, plus global rare-term pruning.
//!
//! The cleaning pipeline applies, in order: markup stripping (`<...>` spans,
//! then the three basic entities), internet-address removal, removal of long
//! nucleotide-like runs (≥ 10 consecutive a/c/g/t characters), splitting on
//! non-alphanumeric boundaries, filtering (digits, length < 3, non-ASCII),
//! lowercasing, Porter stemming, and stopword removal. Stemming runs to a
//! fixpoint so cleaning is idempotent (classic Porter alone is not: e.g.
//! "universities" → "univers" → "univ"), and the length filter re-applies
//! after stemming so the ≥ 3 token invariant survives stems like "ti".

mod porter;
pub mod stopwords;

pub use porter::stem;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use crate::corpus::{Document, Field};
use crate::Result;

static MARKUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").unwrap());
static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?|ftp)://\S+|\bwww\.\S+").unwrap());
static NUCLEOTIDE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[acgtACGT]{10,}").unwrap());

/// Cleaned, stemmed token sequence for one document field.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenStream {
    pub doc_id: String,
    pub field: Field,
    pub tokens: Vec<String>,
}

/// Active stopword set, stored stemmed (matching happens post-stemming).
#[derive(Clone, Debug, Default)]
pub struct Stopwords {
    stems: HashSet<String>,
}

impl Stopwords {
    /// No stopwords at all.
    pub fn empty() -> Self {
        Self::default()
    }

    /// The bundled general-English list.
    pub fn standard() -> Self {
        Self::from_terms(stopwords::GENERAL_ENGLISH.iter().copied())
    }

    /// Build from raw terms; each is lowercased and stemmed to fixpoint.
    pub fn from_terms<'a, I: IntoIterator<Item = &'a str>>(terms: I) -> Self {
        let stems = terms
            .into_iter()
            .map(|t| stem_fixpoint(&t.to_ascii_lowercase()))
            .collect();
        Self { stems }
    }

    /// Merge in a user-supplied domain list (one term per line, `#` comments).
    pub fn extend_from_file<P: AsRef<Path>>(&mut self, path: P) -> Result<()> {
        let f = std::fs::File::open(path.as_ref())?;
        for line in std::io::BufReader::new(f).lines() {
            let line = line?;
            let term = line.trim();
            if term.is_empty() || term.starts_with('#') {
                continue;
            }
            self.stems.insert(stem_fixpoint(&term.to_ascii_lowercase()));
        }
        Ok(())
    }

    pub fn contains_stem(&self, s: &str) -> bool {
        self.stems.contains(s)
    }

    pub fn len(&self) -> usize {
        self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }
}

/// Apply [`stem`] until stable. Porter rewrites have no cycles and strictly
/// simplify, so this terminates in a couple of passes; the bound is a guard.
pub fn stem_fixpoint(word: &str) -> String {
    let mut cur = word.to_string();
    for _ in 0..8 {
        let next = stem(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
    cur
}

/// Strip markup, addresses, and nucleotide runs; used by both the cleaning
/// pipeline and the raw tokenization feeding phrase extraction.
fn strip_noise(raw: &str) -> String {
    let s = MARKUP.replace_all(raw, " ");
    let s = s.replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">");
    let s = URL.replace_all(&s, " ");
    NUCLEOTIDE.replace_all(&s, " ").into_owned()
}

/// Full cleaning pipeline; total function, empty input allowed.
pub fn clean_text(raw: &str, stop: &Stopwords) -> Vec<String> {
    let stripped = strip_noise(raw);
    let mut out = Vec::new();
    for tok in stripped.split(|c: char| !c.is_alphanumeric()) {
        if tok.is_empty()
            || tok.chars().any(|c| c.is_numeric())
            || tok.chars().count() < 3
            || !tok.is_ascii()
        {
            continue;
        }
        let stemmed = stem_fixpoint(&tok.to_ascii_lowercase());
        if stemmed.len() < 3 || stop.contains_stem(&stemmed) {
            continue;
        }
        out.push(stemmed);
    }
    out
}

/// Lowercased surface tokens with markup/addresses/nucleotides stripped but
/// no stemming, stopword, or length filtering: phrase extraction needs the
/// function words ("of", "the") and sees junk tokens as phrase boundaries.
pub fn raw_tokens(raw: &str) -> Vec<String> {
    strip_noise(raw)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Clean one document field into a TokenStream.
pub fn preprocess_doc(doc: &Document, field: Field, stop: &Stopwords) -> TokenStream {
    TokenStream {
        doc_id: doc.id.clone(),
        field,
        tokens: clean_text(&doc.text(field), stop),
    }
}

/// Terms removed by [`prune_rare`] and the threshold that removed them.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneReport {
    pub removed_terms: BTreeSet<String>,
    pub min_df: u32,
}

/// Remove every term whose document frequency (number of streams containing
/// it) is below `min_df`. Token order within streams is preserved.
pub fn prune_rare(streams: Vec<TokenStream>, min_df: u32) -> (Vec<TokenStream>, PruneReport) {
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    for s in &streams {
        let mut seen = HashSet::new();
        for t in &s.tokens {
            if seen.insert(t.as_str()) {
                *df.entry(t.as_str()).or_insert(0) += 1;
            }
        }
    }
    let removed: BTreeSet<String> = df
        .iter()
        .filter(|&(_, &c)| c < min_df)
        .map(|(t, _)| t.to_string())
        .collect();
    let pruned = streams
        .into_iter()
        .map(|mut s| {
            s.tokens.retain(|t| !removed.contains(t));
            s
        })
        .collect();
    (pruned, PruneReport { removed_terms: removed, min_df })
}
