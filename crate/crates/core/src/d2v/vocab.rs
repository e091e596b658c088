//! Embedding vocabulary: frequency table, Huffman coding for hierarchical
//! softmax, and the unigram^0.75 noise distribution for negative sampling.

use std::collections::{HashMap, VecDeque};

use rand_chacha::ChaCha8Rng;

use crate::preprocess::TokenStream;
use crate::{Result, SimvecError};

/// Huffman code of one term: `bits` from root to leaf, `path` the inner-node
/// row visited before each bit. Lengths always match.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanCode {
    pub bits: Vec<bool>,
    pub path: Vec<u32>,
}

/// Term table ordered by corpus frequency (descending, ties by term), with
/// the derived structures both output layers need.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVocab {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    counts: Vec<u64>,
    total: u64,
    huffman: Vec<HuffmanCode>,
    noise_cdf: Vec<f64>,
}

impl EmbeddingVocab {
    pub fn from_streams(streams: &[TokenStream]) -> Result<Self> {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for s in streams {
            for t in &s.tokens {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        Self::from_counts(counts.into_iter())
    }

    /// Build from explicit (term, count) pairs; counts must be positive.
    pub fn from_counts<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let mut items: Vec<(String, u64)> = pairs
            .into_iter()
            .map(|(t, c)| (t.to_string(), c))
            .collect();
        if items.iter().any(|(_, c)| *c == 0) {
            return Err(SimvecError::Param("term counts must be positive".into()));
        }
        if items.len() < 2 {
            return Err(SimvecError::Param(
                "embedding vocabulary needs at least 2 distinct terms".into(),
            ));
        }
        items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let terms: Vec<String> = items.iter().map(|(t, _)| t.clone()).collect();
        let counts: Vec<u64> = items.iter().map(|(_, c)| *c).collect();
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let total = counts.iter().sum();
        let huffman = build_huffman(&counts);
        let noise_cdf = build_noise_cdf(&counts);
        Ok(Self { terms, index, counts, total, huffman, noise_cdf })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: u32) -> &str {
        &self.terms[index as usize]
    }

    pub fn count(&self, index: u32) -> u64 {
        self.counts[index as usize]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Relative corpus frequency of a term.
    pub fn frequency(&self, index: u32) -> f64 {
        self.counts[index as usize] as f64 / self.total as f64
    }

    pub fn huffman_code(&self, index: u32) -> &HuffmanCode {
        &self.huffman[index as usize]
    }

    /// Number of inner nodes in the Huffman tree (= hierarchical-softmax
    /// output rows).
    pub fn inner_nodes(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn noise_cdf(&self) -> &[f64] {
        &self.noise_cdf
    }

    /// Draw one term index from the counts^0.75 noise distribution.
    pub fn draw_noise(&self, rng: &mut ChaCha8Rng) -> u32 {
        use rand::Rng;
        let u: f64 = rng.random();
        self.noise_cdf.partition_point(|&c| c <= u) as u32
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32, u64)> {
        self.terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as u32, self.counts[i]))
    }
}

/// Probability of dropping an occurrence of a word with relative frequency
/// `f` under subsampling threshold `t`: `max(0, 1 - sqrt(t/f))`.
pub fn subsample_discard_prob(f: f64, t: f64) -> f64 {
    debug_assert!(f > 0.0 && f <= 1.0 && t > 0.0);
    (1.0 - (t / f).sqrt()).max(0.0)
}

/// Two-queue Huffman construction over the count-descending vocabulary.
/// Returns one code per term, inner nodes numbered in creation order (the
/// root is the last, `n - 2`).
fn build_huffman(counts: &[u64]) -> Vec<HuffmanCode> {
    let n = counts.len();
    // leaves in ascending weight order; vocab order is descending, so walk it
    // backward
    let mut leaves: VecDeque<(u64, usize)> = counts
        .iter()
        .enumerate()
        .rev()
        .map(|(i, &c)| (c, i))
        .collect();
    let mut merged: VecDeque<(u64, usize)> = VecDeque::new();
    // per node: (parent inner id, bit); leaves 0..n, inner n..2n-1
    let mut parent = vec![(0usize, false); 2 * n - 1];
    let pop_min = |leaves: &mut VecDeque<(u64, usize)>, merged: &mut VecDeque<(u64, usize)>| {
        match (leaves.front(), merged.front()) {
            (Some(&(lw, _)), Some(&(mw, _))) if lw <= mw => leaves.pop_front().unwrap(),
            (Some(_), None) => leaves.pop_front().unwrap(),
            (_, Some(_)) => merged.pop_front().unwrap(),
            (None, None) => unreachable!("queues exhausted early"),
        }
    };
    for inner in 0..n - 1 {
        let (w1, a) = pop_min(&mut leaves, &mut merged);
        let (w2, b) = pop_min(&mut leaves, &mut merged);
        let id = n + inner;
        parent[a] = (inner, false);
        parent[b] = (inner, true);
        merged.push_back((w1 + w2, id));
    }
    let root = n + (n - 2);
    (0..n)
        .map(|leaf| {
            let mut bits = Vec::new();
            let mut path = Vec::new();
            let mut node = leaf;
            while node != root {
                let (p, bit) = parent[node];
                bits.push(bit);
                path.push(p as u32);
                node = n + p;
            }
            bits.reverse();
            path.reverse();
            HuffmanCode { bits, path }
        })
        .collect()
}

/// Cumulative counts^0.75 distribution; the last entry is pinned to 1.
fn build_noise_cdf(counts: &[u64]) -> Vec<f64> {
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let z: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w / z;
            acc
        })
        .collect();
    *cdf.last_mut().unwrap() = 1.0;
    cdf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use approx::assert_relative_eq;

    fn vocab(pairs: &[(&str, u64)]) -> EmbeddingVocab {
        EmbeddingVocab::from_counts(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn ordering_is_count_desc_then_term() {
        let v = vocab(&[("b", 3), ("a", 3), ("c", 9)]);
        assert_eq!(v.term(0), "c");
        assert_eq!(v.term(1), "a");
        assert_eq!(v.term(2), "b");
        assert_eq!(v.total(), 15);
    }

    #[test]
    fn tiny_vocab_rejected() {
        assert!(EmbeddingVocab::from_counts([("x", 5u64)]).is_err());
        assert!(EmbeddingVocab::from_counts([("x", 5u64), ("y", 0)]).is_err());
    }

    #[test]
    fn subsample_formula_points() {
        assert_eq!(subsample_discard_prob(1e-3, 1e-3), 0.0);
        assert_relative_eq!(subsample_discard_prob(4e-3, 1e-3), 0.5, epsilon = 1e-12);
        assert_eq!(subsample_discard_prob(1e-5, 1e-3), 0.0, "rare words never dropped");
    }

    #[test]
    fn subsample_empirical_rate_matches() {
        use rand::Rng;
        let mut rng = seeding::stage_rng(11, "subsample-trials");
        let (f, t) = (4e-3, 1e-3);
        let p = subsample_discard_prob(f, t);
        let n = 1_000_000;
        let dropped = (0..n).filter(|_| rng.random::<f64>() < p).count();
        let rate = dropped as f64 / n as f64;
        assert!((rate - p).abs() < 0.01, "rate {rate} vs p {p}");
    }

    fn code_lengths(v: &EmbeddingVocab) -> Vec<usize> {
        (0..v.len() as u32).map(|i| v.huffman_code(i).bits.len()).collect()
    }

    #[test]
    fn huffman_path_and_code_lengths_match() {
        let v = vocab(&[("a", 40), ("b", 30), ("c", 20), ("d", 10)]);
        for i in 0..v.len() as u32 {
            let code = v.huffman_code(i);
            assert_eq!(code.bits.len(), code.path.len());
            assert!(!code.bits.is_empty());
            assert!((code.path[0] as usize) == v.inner_nodes() - 1, "starts at root");
        }
    }

    #[test]
    fn huffman_codes_prefix_free() {
        let v = vocab(&[("a", 13), ("b", 7), ("c", 7), ("d", 2), ("e", 1), ("f", 1)]);
        let codes: Vec<&Vec<bool>> =
            (0..v.len() as u32).map(|i| &v.huffman_code(i).bits).collect();
        for (i, a) in codes.iter().enumerate() {
            for (j, b) in codes.iter().enumerate() {
                if i != j {
                    let prefix = a.len() <= b.len() && b[..a.len()] == a[..];
                    assert!(!prefix, "code {i} prefixes code {j}");
                }
            }
        }
    }

    #[test]
    fn huffman_kraft_equality() {
        let v = vocab(&[("a", 5), ("b", 4), ("c", 3), ("d", 2), ("e", 1)]);
        let lens = code_lengths(&v);
        let max = *lens.iter().max().unwrap() as u32;
        let sum: u64 = lens.iter().map(|&l| 1u64 << (max - l as u32)).sum();
        assert_eq!(sum, 1u64 << max, "complete binary code has Kraft sum 1");
    }

    /// Independent optimality oracle: enumerate all admissible code-length
    /// assignments (nondecreasing against descending weights, Kraft sum ≤ 1)
    /// and take the cheapest.
    fn oracle_min_weighted_length(counts_desc: &[u64]) -> u64 {
        let n = counts_desc.len();
        let max_len = (n - 1) as u32;
        let mut best = u64::MAX;
        let mut lens = vec![1u32; n];
        fn rec(
            counts: &[u64],
            lens: &mut Vec<u32>,
            pos: usize,
            max_len: u32,
            best: &mut u64,
        ) {
            let n = counts.len();
            if pos == n {
                let max = *lens.iter().max().unwrap();
                let kraft: u64 = lens.iter().map(|&l| 1u64 << (max - l)).sum();
                if kraft <= 1u64 << max {
                    let cost: u64 = counts.iter().zip(lens.iter()).map(|(&c, &l)| c * l as u64).sum();
                    *best = (*best).min(cost);
                }
                return;
            }
            let lo = if pos == 0 { 1 } else { lens[pos - 1] };
            for l in lo..=max_len {
                lens[pos] = l;
                rec(counts, lens, pos + 1, max_len, best);
            }
        }
        rec(counts_desc, &mut lens, 0, max_len, &mut best);
        best
    }

    #[test]
    fn huffman_total_length_is_optimal() {
        let cases: Vec<Vec<u64>> = vec![
            vec![10, 1],
            vec![5, 4, 3],
            vec![8, 8, 8, 8],
            vec![40, 30, 20, 10],
            vec![21, 13, 8, 5, 3, 2, 1, 1],
        ];
        for counts in cases {
            let pairs: Vec<(String, u64)> = counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (format!("w{i:02}"), c))
                .collect();
            let v = EmbeddingVocab::from_counts(pairs.iter().map(|(t, c)| (t.as_str(), *c)))
                .unwrap();
            let got: u64 = v
                .iter()
                .map(|(_, i, c)| c * v.huffman_code(i).bits.len() as u64)
                .sum();
            let want = oracle_min_weighted_length(&counts);
            assert_eq!(got, want, "counts {counts:?}");
        }
    }

    #[test]
    fn noise_cdf_is_valid() {
        let v = vocab(&[("a", 100), ("b", 10), ("c", 1)]);
        let cdf = v.noise_cdf();
        assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
        assert!((cdf.last().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noise_draws_match_powered_counts() {
        let v = vocab(&[("a", 1000), ("b", 200), ("c", 30), ("d", 4)]);
        let mut rng = seeding::stage_rng(13, "noise-trials");
        let n = 1_000_000;
        let mut hits = vec![0u64; v.len()];
        for _ in 0..n {
            hits[v.draw_noise(&mut rng) as usize] += 1;
        }
        let z: f64 = (0..v.len() as u32).map(|i| (v.count(i) as f64).powf(0.75)).sum();
        for i in 0..v.len() as u32 {
            let want = (v.count(i) as f64).powf(0.75) / z;
            let got = hits[i as usize] as f64 / n as f64;
            assert!((got - want).abs() < 0.01, "term {i}: {got} vs {want}");
        }
    }

    #[test]
    fn two_term_vocab_has_one_bit_codes() {
        let v = vocab(&[("hi", 9), ("lo", 1)]);
        assert_eq!(code_lengths(&v), vec![1, 1]);
        assert_eq!(v.inner_nodes(), 1);
        assert_ne!(v.huffman_code(0).bits, v.huffman_code(1).bits);
    }
}
