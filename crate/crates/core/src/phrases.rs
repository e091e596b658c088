//! Noun-phrase extraction over POS-tagged tokens.
//!
//! Phrases are contiguous token spans whose tag sequence matches
//!
//! ```text
//! (Adj|Noun)* Noun ( Prep Det* (Adj|Noun)* Noun )*
//! ```
//!
//! so plain compounds ("neural network"), adjective chains, and
//! preposition-linked forms ("state of the art") are all accepted. Matching
//! runs a Thompson-constructed NFA from every start position and reports all
//! accepting spans of length 2 through `max_len`, nested and overlapping
//! spans included. Tagging is a deterministic rule tagger: closed-class
//! lexicon, a small open-class seed list, suffix heuristics, fallback Noun.
//! Callers with better tags can build [`TaggedToken`]s themselves.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::LazyLock;

/// Part-of-speech alphabet of the phrase grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Adj,
    Noun,
    Prep,
    Det,
    Other,
}

/// A token paired with its tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedToken {
    pub token: String,
    pub tag: Tag,
}

pub const DEFAULT_MAX_LEN: usize = 4;

const DETERMINERS: &[&str] = &[
    "a", "all", "an", "another", "any", "both", "each", "either", "every", "her", "his", "its",
    "my", "neither", "no", "our", "some", "such", "that", "the", "their", "these", "this",
    "those", "your",
];

const PREPOSITIONS: &[&str] = &[
    "about", "above", "across", "after", "against", "along", "among", "around", "at", "before",
    "behind", "below", "beneath", "beside", "between", "beyond", "by", "despite", "during",
    "except", "for", "from", "in", "inside", "into", "near", "of", "off", "on", "onto", "over",
    "per", "since", "through", "throughout", "to", "toward", "towards", "under", "until", "upon",
    "via", "with", "within", "without",
];

// Auxiliaries, conjunctions, and pronouns; they never belong inside a phrase.
const FUNCTION_OTHER: &[&str] = &[
    "am", "and", "are", "as", "be", "been", "being", "but", "can", "could", "did", "do", "does",
    "had", "has", "have", "he", "if", "is", "it", "may", "might", "must", "nor", "not", "or",
    "shall", "she", "should", "so", "than", "they", "was", "we", "were", "which", "while", "who",
    "will", "would", "yet", "you",
];

const ADJ_SEEDS: &[&str] = &[
    "bad", "big", "complex", "different", "early", "effective", "efficient", "fast", "few",
    "first", "good", "great", "high", "large", "last", "late", "long", "low", "main", "major",
    "many", "minor", "new", "novel", "old", "other", "same", "second", "several", "short",
    "simple", "slow", "small", "strong", "weak", "wide",
];

// Open-class words the suffix rules would otherwise mis-tag as adjectives.
const NOUN_SEEDS: &[&str] = &[
    "additive", "adhesive", "alternative", "animal", "approval", "arrival", "crystal",
    "initiative", "interval", "journal", "material", "metal", "mineral", "objective", "proposal",
    "removal", "representative", "signal", "terminal", "trial",
];

/// Token → tag dictionary backing the rule tagger.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    map: HashMap<String, Tag>,
}

impl Lexicon {
    /// The bundled lexicon: closed-class words plus open-class seeds.
    pub fn builtin() -> Self {
        let mut map = HashMap::new();
        for (words, tag) in [
            (DETERMINERS, Tag::Det),
            (PREPOSITIONS, Tag::Prep),
            (FUNCTION_OTHER, Tag::Other),
            (ADJ_SEEDS, Tag::Adj),
            (NOUN_SEEDS, Tag::Noun),
        ] {
            for w in words {
                map.insert((*w).to_string(), tag);
            }
        }
        Self { map }
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Tag)>,
        S: Into<String>,
    {
        Self { map: pairs.into_iter().map(|(s, t)| (s.into(), t)).collect() }
    }

    /// Tag one token: lexicon lookup, then suffix rules, then fallback Noun.
    /// Tokens carrying digits or non-ASCII bytes tag Other so they can never
    /// sit inside a phrase.
    pub fn tag(&self, token: &str) -> Tag {
        if token.is_empty() || !token.is_ascii() || token.chars().any(|c| c.is_numeric()) {
            return Tag::Other;
        }
        let lower = token.to_ascii_lowercase();
        if let Some(&t) = self.map.get(&lower) {
            return t;
        }
        for suf in ["al", "ous", "ive"] {
            if lower.len() > suf.len() && lower.ends_with(suf) {
                return Tag::Adj;
            }
        }
        for suf in ["ment", "tion", "ness", "ity"] {
            if lower.len() > suf.len() && lower.ends_with(suf) {
                return Tag::Noun;
            }
        }
        Tag::Noun
    }
}

/// Tag a token sequence with the given lexicon.
pub fn tag_tokens(tokens: &[String], lexicon: &Lexicon) -> Vec<TaggedToken> {
    tokens
        .iter()
        .map(|t| TaggedToken { token: t.clone(), tag: lexicon.tag(t) })
        .collect()
}

// --- Thompson NFA ----------------------------------------------------------

enum Re {
    Class(&'static [Tag]),
    Cat(Vec<Re>),
    Star(Box<Re>),
}

/// Epsilon-NFA built by Thompson construction; small enough for a u64 state
/// bitset.
struct Nfa {
    eps: Vec<Vec<usize>>,
    sym: Vec<Vec<(Tag, usize)>>,
    start: u64,
    accept_bit: u64,
}

impl Nfa {
    fn compile(re: &Re) -> Self {
        let mut eps: Vec<Vec<usize>> = Vec::new();
        let mut sym: Vec<Vec<(Tag, usize)>> = Vec::new();
        let (start, accept) = build(re, &mut eps, &mut sym);
        assert!(eps.len() <= 64, "NFA too large for bitset simulation");
        let mut nfa = Nfa { eps, sym, start: 0, accept_bit: 1u64 << accept };
        nfa.start = nfa.closure(1u64 << start);
        return nfa;

        fn build(
            re: &Re,
            eps: &mut Vec<Vec<usize>>,
            sym: &mut Vec<Vec<(Tag, usize)>>,
        ) -> (usize, usize) {
            fn state(eps: &mut Vec<Vec<usize>>, sym: &mut Vec<Vec<(Tag, usize)>>) -> usize {
                eps.push(Vec::new());
                sym.push(Vec::new());
                eps.len() - 1
            }
            match re {
                Re::Class(tags) => {
                    let s = state(eps, sym);
                    let a = state(eps, sym);
                    for &t in *tags {
                        sym[s].push((t, a));
                    }
                    (s, a)
                }
                Re::Cat(parts) => {
                    assert!(!parts.is_empty());
                    let (s, mut last) = build(&parts[0], eps, sym);
                    for p in &parts[1..] {
                        let (ns, na) = build(p, eps, sym);
                        eps[last].push(ns);
                        last = na;
                    }
                    (s, last)
                }
                Re::Star(inner) => {
                    let s = state(eps, sym);
                    let a = state(eps, sym);
                    let (is, ia) = build(inner, eps, sym);
                    eps[s].push(is);
                    eps[s].push(a);
                    eps[ia].push(is);
                    eps[ia].push(a);
                    (s, a)
                }
            }
        }
    }

    fn closure(&self, mut set: u64) -> u64 {
        let mut work = set;
        while work != 0 {
            let s = work.trailing_zeros() as usize;
            work &= work - 1;
            for &e in &self.eps[s] {
                let bit = 1u64 << e;
                if set & bit == 0 {
                    set |= bit;
                    work |= bit;
                }
            }
        }
        set
    }

    fn step(&self, set: u64, tag: Tag) -> u64 {
        let mut next = 0u64;
        let mut rest = set;
        while rest != 0 {
            let s = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            for &(t, to) in &self.sym[s] {
                if t == tag {
                    next |= 1u64 << to;
                }
            }
        }
        self.closure(next)
    }

    fn accepting(&self, set: u64) -> bool {
        set & self.accept_bit != 0
    }
}

fn phrase_grammar() -> Re {
    let adj_noun = || Re::Star(Box::new(Re::Class(&[Tag::Adj, Tag::Noun])));
    Re::Cat(vec![
        adj_noun(),
        Re::Class(&[Tag::Noun]),
        Re::Star(Box::new(Re::Cat(vec![
            Re::Class(&[Tag::Prep]),
            Re::Star(Box::new(Re::Class(&[Tag::Det]))),
            adj_noun(),
            Re::Class(&[Tag::Noun]),
        ]))),
    ])
}

static MATCHER: LazyLock<Nfa> = LazyLock::new(|| Nfa::compile(&phrase_grammar()));

/// Whether a whole tag sequence is a well-formed phrase shape.
pub fn accepts(tags: &[Tag]) -> bool {
    let nfa = &*MATCHER;
    let mut set = nfa.start;
    for &t in tags {
        set = nfa.step(set, t);
        if set == 0 {
            return false;
        }
    }
    nfa.accepting(set)
}

/// All accepting spans as (start, len), len in 2..=max_len.
pub fn extract_spans(tags: &[Tag], max_len: usize) -> Vec<(usize, usize)> {
    assert!(max_len >= 2, "max_len must be at least 2");
    let nfa = &*MATCHER;
    let mut spans = Vec::new();
    for start in 0..tags.len() {
        let mut set = nfa.start;
        for (off, &t) in tags[start..].iter().take(max_len).enumerate() {
            set = nfa.step(set, t);
            if set == 0 {
                break;
            }
            if off >= 1 && nfa.accepting(set) {
                spans.push((start, off + 1));
            }
        }
    }
    spans
}

/// Extract the phrase multiset of one document: joined lowercased form →
/// occurrence count, ordered deterministically.
pub fn extract_phrases(tagged: &[TaggedToken], max_len: usize) -> BTreeMap<String, u32> {
    let tags: Vec<Tag> = tagged.iter().map(|t| t.tag).collect();
    let mut counts = BTreeMap::new();
    for (start, len) in extract_spans(&tags, max_len) {
        let joined = tagged[start..start + len]
            .iter()
            .map(|t| t.token.to_lowercase())
            .collect::<Vec<_>>()
            .join("_");
        *counts.entry(joined).or_insert(0) += 1;
    }
    counts
}

/// Tag with the builtin lexicon and extract in one step.
pub fn phrases_for_tokens(tokens: &[String], max_len: usize) -> BTreeMap<String, u32> {
    static LEX: LazyLock<Lexicon> = LazyLock::new(Lexicon::builtin);
    extract_phrases(&tag_tokens(tokens, &LEX), max_len)
}

/// Corpus-level selection: the k most frequent phrases, ties broken
/// lexicographically.
pub fn top_k_terms<'a, I>(doc_counts: I, k: usize) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a BTreeMap<String, u32>>,
{
    let mut total: BTreeMap<&str, u64> = BTreeMap::new();
    for counts in doc_counts {
        for (p, c) in counts {
            *total.entry(p).or_insert(0) += u64::from(*c);
        }
    }
    let mut ranked: Vec<(&str, u64)> = total.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    ranked.into_iter().map(|(p, _)| p.to_string()).collect()
}
