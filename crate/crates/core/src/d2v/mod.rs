//! Word and document embeddings.
//!
//! One model covers the four training modes: distributed memory (DM) or
//! distributed bag of words (DBOW) on the input side, hierarchical softmax
//! or negative sampling on the output side. Document vectors come from
//! training, from post-hoc inference on frozen matrices, or from weighted
//! averages of word vectors.

mod train;
pub mod vocab;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub use train::{infer_vector, train, train_with_history, InputSlot, TrainExample};
pub use vocab::{subsample_discard_prob, EmbeddingVocab, HuffmanCode};

use crate::preprocess::TokenStream;
use crate::tfidf::Vocabulary;
use crate::vectors::DenseVector;
use crate::{Result, SimvecError};

/// Knobs for [`train`] and [`infer_vector`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainParams {
    /// Distributed memory when true, distributed bag of words otherwise.
    pub dm: bool,
    /// Hierarchical softmax when true, negative sampling otherwise.
    pub hs: bool,
    /// Embedding dimension.
    pub size: usize,
    /// Maximum context distance; the effective window per target is drawn
    /// uniformly from 1..=window.
    pub window: usize,
    /// Subsampling threshold t; tokens with relative frequency f are dropped
    /// with probability max(0, 1 - sqrt(t/f)).
    pub sample: f64,
    /// Training epochs.
    pub iter: usize,
    /// Noise words per target under negative sampling.
    pub negative: usize,
    /// Initial learning rate, decayed linearly to alpha0/10000.
    pub alpha0: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            dm: true,
            hs: false,
            size: 100,
            window: 5,
            sample: 1e-3,
            iter: 5,
            negative: 5,
            alpha0: 0.025,
            seed: 1,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.size < 1 {
            return Err(SimvecError::Param("size must be at least 1".into()));
        }
        if self.window < 1 {
            return Err(SimvecError::Param("window must be at least 1".into()));
        }
        if !(self.sample > 0.0 && self.sample <= 1.0) {
            return Err(SimvecError::Param("sample must lie in (0, 1]".into()));
        }
        if self.iter < 1 {
            return Err(SimvecError::Param("iter must be at least 1".into()));
        }
        if !self.hs && self.negative < 1 {
            return Err(SimvecError::Param(
                "negative sampling needs at least 1 noise word".into(),
            ));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(SimvecError::Param("alpha0 must be positive and finite".into()));
        }
        Ok(())
    }
}

/// A trained embedding model: input vectors per word, output rows (context
/// words under negative sampling, Huffman inner nodes under hierarchical
/// softmax), and one vector per training document.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    pub(crate) vocab: EmbeddingVocab,
    pub(crate) params: TrainParams,
    pub(crate) word_in: Vec<f64>,
    pub(crate) word_out: Vec<f64>,
    pub(crate) doc_ids: Vec<String>,
    pub(crate) doc_vectors: Vec<DenseVector>,
}

impl EmbeddingModel {
    /// Assemble a model from raw matrices, checking shapes and finiteness.
    pub fn from_parts(
        vocab: EmbeddingVocab,
        params: TrainParams,
        word_in: Vec<f64>,
        word_out: Vec<f64>,
        doc_ids: Vec<String>,
        doc_vectors: Vec<DenseVector>,
    ) -> Result<Self> {
        params.validate()?;
        let size = params.size;
        if word_in.len() != vocab.len() * size {
            return Err(SimvecError::Dimension(format!(
                "word_in holds {} values, expected {} terms x {} dims",
                word_in.len(),
                vocab.len(),
                size
            )));
        }
        let out_rows = if params.hs { vocab.inner_nodes() } else { vocab.len() };
        if word_out.len() != out_rows * size {
            return Err(SimvecError::Dimension(format!(
                "word_out holds {} values, expected {} rows x {} dims",
                word_out.len(),
                out_rows,
                size
            )));
        }
        if doc_ids.len() != doc_vectors.len() {
            return Err(SimvecError::Dimension(format!(
                "{} doc ids but {} doc vectors",
                doc_ids.len(),
                doc_vectors.len()
            )));
        }
        if let Some(bad) = doc_vectors.iter().find(|v| v.len() != size) {
            return Err(SimvecError::Dimension(format!(
                "doc vector of dim {} in a size-{size} model",
                bad.len()
            )));
        }
        let finite = word_in.iter().all(|v| v.is_finite())
            && word_out.iter().all(|v| v.is_finite())
            && doc_vectors.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(SimvecError::Model("non-finite value in embedding matrices".into()));
        }
        Ok(EmbeddingModel { vocab, params, word_in, word_out, doc_ids, doc_vectors })
    }

    pub fn vocab(&self) -> &EmbeddingVocab {
        &self.vocab
    }

    pub fn params(&self) -> &TrainParams {
        &self.params
    }

    pub fn size(&self) -> usize {
        self.params.size
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_vectors(&self) -> &[DenseVector] {
        &self.doc_vectors
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == id)
    }

    pub fn doc_vector(&self, index: usize) -> &[f64] {
        &self.doc_vectors[index]
    }

    /// Input vector of a term, if it is in the vocabulary.
    pub fn word_vector(&self, term: &str) -> Option<&[f64]> {
        self.vocab.index_of(term).map(|w| self.word_in_row(w))
    }

    /// Full-softmax probability of `context` given `target`, computed with a
    /// max shift. Output rows score the contexts under negative sampling;
    /// hierarchical-softmax models have no per-word output rows, so input
    /// vectors stand in and the result remains a proper distribution.
    pub fn softmax_prob(&self, target: &str, context: &str) -> Result<f64> {
        let t = self
            .vocab
            .index_of(target)
            .ok_or_else(|| SimvecError::Param(format!("unknown target word {target:?}")))?;
        let c = self
            .vocab
            .index_of(context)
            .ok_or_else(|| SimvecError::Param(format!("unknown context word {context:?}")))?;
        let u = self.word_in_row(t);
        let score = |w: u32| -> f64 {
            let row = if self.params.hs { self.word_in_row(w) } else { self.word_out_row(w) };
            row.iter().zip(u).map(|(a, b)| a * b).sum()
        };
        let n = self.vocab.len() as u32;
        let max = (0..n).map(score).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..n).map(|w| (score(w) - max).exp()).sum();
        Ok((score(c) - max).exp() / denom)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.save_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn save_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&[MODEL_VERSION, self.params.dm as u8, self.params.hs as u8])?;
        for dim in [
            self.params.size as u64,
            self.vocab.len() as u64,
            self.doc_ids.len() as u64,
            self.params.window as u64,
            self.params.iter as u64,
            self.params.negative as u64,
        ] {
            w.write_all(&dim.to_le_bytes())?;
        }
        w.write_all(&self.params.sample.to_le_bytes())?;
        w.write_all(&self.params.alpha0.to_le_bytes())?;
        w.write_all(&self.params.seed.to_le_bytes())?;
        for (term, _, count) in self.vocab.iter() {
            write_str(w, term)?;
            w.write_all(&count.to_le_bytes())?;
        }
        for id in &self.doc_ids {
            write_str(w, id)?;
        }
        for value in
            self.word_in.iter().chain(&self.word_out).chain(self.doc_vectors.iter().flatten())
        {
            w.write_all(&value.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn load_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut head = [0u8; 3];
        r.read_exact(&mut head)?;
        if head[0] != MODEL_VERSION {
            return Err(SimvecError::Model(format!(
                "unsupported embedding model version {}",
                head[0]
            )));
        }
        let size = read_u64(r)? as usize;
        let n_terms = read_u64(r)? as usize;
        let n_docs = read_u64(r)? as usize;
        let params = TrainParams {
            dm: head[1] != 0,
            hs: head[2] != 0,
            size,
            window: read_u64(r)? as usize,
            iter: read_u64(r)? as usize,
            negative: read_u64(r)? as usize,
            sample: read_f64(r)?,
            alpha0: read_f64(r)?,
            seed: read_u64(r)?,
        };
        let mut pairs = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            let term = read_str(r)?;
            let count = read_u64(r)?;
            pairs.push((term, count));
        }
        let vocab = EmbeddingVocab::from_counts(pairs.iter().map(|(t, c)| (t.as_str(), *c)))?;
        // rebuilding must reproduce the stored index order exactly
        for (i, (term, _)) in pairs.iter().enumerate() {
            if vocab.index_of(term) != Some(i as u32) {
                return Err(SimvecError::Model(format!(
                    "vocabulary table is not in canonical order at entry {i}"
                )));
            }
        }
        let mut doc_ids = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            doc_ids.push(read_str(r)?);
        }
        let word_in = read_f64_vec(r, n_terms * size)?;
        let out_rows = if params.hs { vocab.inner_nodes() } else { vocab.len() };
        let word_out = read_f64_vec(r, out_rows * size)?;
        let mut doc_vectors = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            doc_vectors.push(read_f64_vec(r, size)?);
        }
        EmbeddingModel::from_parts(vocab, params, word_in, word_out, doc_ids, doc_vectors)
    }
}

const MODEL_VERSION: u8 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf)
        .map_err(|_| SimvecError::Model("invalid utf-8 in model string table".into()))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_f64_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

/// Weighting scheme for [`average_word_vectors`].
#[derive(Clone, Copy)]
pub enum AverageWeights<'a> {
    /// Every token occurrence counts once.
    Uniform,
    /// Each distinct term is weighted by its TFIDF weight in the stream,
    /// taken from an independently built corpus vocabulary.
    Tfidf(&'a Vocabulary),
}

/// Weighted mean of the input word vectors of a token stream. Tokens outside
/// the model vocabulary are dropped; zero-weight terms are excluded.
pub fn average_word_vectors(
    model: &EmbeddingModel,
    stream: &TokenStream,
    weights: AverageWeights,
) -> Result<DenseVector> {
    let size = model.params.size;
    let mut acc = vec![0.0; size];
    let mut weight_sum = 0.0;
    let mut known = 0usize;
    match weights {
        AverageWeights::Uniform => {
            for token in &stream.tokens {
                if let Some(w) = model.vocab.index_of(token) {
                    known += 1;
                    weight_sum += 1.0;
                    for (a, v) in acc.iter_mut().zip(model.word_in_row(w)) {
                        *a += v;
                    }
                }
            }
        }
        AverageWeights::Tfidf(vocab) => {
            let mut tf = std::collections::BTreeMap::new();
            for token in &stream.tokens {
                if model.vocab.index_of(token).is_some() {
                    known += 1;
                    *tf.entry(token.as_str()).or_insert(0u32) += 1;
                }
            }
            for (term, count) in tf {
                let w = model.vocab.index_of(term).expect("filtered above");
                let weight = match vocab.index_of(term) {
                    Some(idx) => f64::from(count) * vocab.idf(idx),
                    None => 0.0,
                };
                weight_sum += weight;
                for (a, v) in acc.iter_mut().zip(model.word_in_row(w)) {
                    *a += weight * v;
                }
            }
        }
    }
    if known == 0 {
        return Err(SimvecError::Param("no tokens are known to the model".into()));
    }
    if weight_sum <= 0.0 {
        return Err(SimvecError::Param("token weights sum to zero, nothing to average".into()));
    }
    for a in &mut acc {
        *a /= weight_sum;
    }
    Ok(acc)
}
