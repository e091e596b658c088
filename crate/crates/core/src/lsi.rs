//! Latent semantic indexing: document-term matrix construction, truncated
//! SVD, per-document topic vectors, and fold-in of unseen documents.
//!
//! The matrix holds documents as rows. A model factors `X ≈ V Σ Uᵀ` with
//! orthonormal term-topic columns `U` (terms × k) and doc-topic columns `V`
//! (docs × k); document vectors are `σ ⊙ V[i]`, which equals the fold-in
//! projection `xᵢ · U` for training rows. Small matrices get an exact dense
//! SVD; anything wider or taller than 500 runs a seeded randomized
//! range-finder (oversampling 10, two power iterations), so results are
//! deterministic either way. Training can stream the corpus in chunks,
//! multiplying accumulated statistics by a decay factor before each merge.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::preprocess::TokenStream;
use crate::tfidf::{term_frequencies, tfidf_vector, Vocabulary};
use crate::vectors::{DenseVector, SparseVector};
use crate::{exec, seeding, Result, SimvecError};

const DENSE_LIMIT: usize = 500;
const OVERSAMPLE: usize = 10;
const POWER_ITERS: usize = 2;
const MODEL_VERSION: u8 = 1;

/// Cell weighting for [`build_matrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    RawCount,
    Binary,
    Tfidf,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::RawCount => "raw-count",
            Weighting::Binary => "binary",
            Weighting::Tfidf => "tfidf",
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = SimvecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw-count" | "raw" => Ok(Weighting::RawCount),
            "binary" => Ok(Weighting::Binary),
            "tfidf" => Ok(Weighting::Tfidf),
            other => Err(SimvecError::Param(format!("unknown weighting {other:?}"))),
        }
    }
}

/// Sparse document-term matrix in row (document) major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct TermDocMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl TermDocMatrix {
    /// Assemble from per-document entry lists. Entries must carry strictly
    /// increasing in-range indices and finite weights; zeros are dropped.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>, cols: usize) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.iter().enumerate() {
            let mut prev: Option<u32> = None;
            for &(idx, w) in row {
                if idx as usize >= cols {
                    return Err(SimvecError::Dimension(format!(
                        "row {i}: term index {idx} outside 0..{cols}"
                    )));
                }
                if prev.is_some_and(|p| p >= idx) {
                    return Err(SimvecError::Param(format!(
                        "row {i}: term indices must be strictly increasing"
                    )));
                }
                prev = Some(idx);
                if !w.is_finite() {
                    return Err(SimvecError::Param(format!("row {i}: non-finite weight")));
                }
                if w != 0.0 {
                    col_idx.push(idx);
                    values.push(w);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { rows: rows.len(), cols, row_ptr, col_idx, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, w) in self.row(i) {
                m[(i, j as usize)] = w;
            }
        }
        m
    }
}

/// Minimal multiply surface shared by the sparse matrix and dense blocks, so
/// one solver serves both.
trait MatOps {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// self · b
    fn mul_right(&self, b: &DMatrix<f64>) -> DMatrix<f64>;
    /// selfᵀ · b
    fn mul_trans(&self, b: &DMatrix<f64>) -> DMatrix<f64>;
    fn dense(&self) -> DMatrix<f64>;
}

impl MatOps for TermDocMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols
    }

    fn mul_right(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let r = b.ncols();
        let rows = exec::map_range(self.rows, |i| {
            let mut out = vec![0.0; r];
            for (t, w) in self.row(i) {
                let t = t as usize;
                for (j, o) in out.iter_mut().enumerate() {
                    *o += w * b[(t, j)];
                }
            }
            out
        });
        DMatrix::from_fn(self.rows, r, |i, j| rows[i][j])
    }

    fn mul_trans(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let r = b.ncols();
        let mut out = DMatrix::zeros(self.cols, r);
        for i in 0..self.rows {
            for (t, w) in self.row(i) {
                let t = t as usize;
                for j in 0..r {
                    out[(t, j)] += w * b[(i, j)];
                }
            }
        }
        out
    }

    fn dense(&self) -> DMatrix<f64> {
        self.to_dense()
    }
}

impl MatOps for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn mul_right(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self * b
    }

    fn mul_trans(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.transpose() * b
    }

    fn dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// Trained LSI model.
#[derive(Clone, Debug, PartialEq)]
pub struct LsiModel {
    k: usize,
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

/// Training hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LsiParams {
    pub topics: usize,
    pub chunksize: usize,
    pub decay: f64,
    pub weighting: Weighting,
}

impl Default for LsiParams {
    fn default() -> Self {
        Self { topics: 200, chunksize: 20_000, decay: 1.0, weighting: Weighting::Tfidf }
    }
}

impl LsiParams {
    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(SimvecError::Param("topics must be at least 1".into()));
        }
        if self.chunksize == 0 {
            return Err(SimvecError::Param("chunksize must be at least 1".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(SimvecError::Param(format!(
                "decay must lie in (0, 1], got {}",
                self.decay
            )));
        }
        Ok(())
    }
}

/// Weight one stream according to the chosen scheme.
fn weighted_row(stream: &TokenStream, vocab: &Vocabulary, weighting: Weighting) -> Vec<(u32, f64)> {
    match weighting {
        Weighting::Tfidf => tfidf_vector(stream, vocab).entries,
        Weighting::RawCount => term_frequencies(stream, vocab)
            .into_iter()
            .map(|(i, tf)| (i, f64::from(tf)))
            .collect(),
        Weighting::Binary => {
            term_frequencies(stream, vocab).into_keys().map(|i| (i, 1.0)).collect()
        }
    }
}

/// Build the document-term matrix, one row per stream, in stream order.
pub fn build_matrix(
    streams: &[TokenStream],
    vocab: &Vocabulary,
    weighting: Weighting,
) -> TermDocMatrix {
    let rows = exec::map(streams, |s| weighted_row(s, vocab, weighting));
    TermDocMatrix::from_rows(rows, vocab.len())
        .expect("weighting functions emit sorted in-range finite entries")
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

/// Exact dense top-k: returns (P, σ, Q) with `m ≈ P diag(σ) Qᵀ`, σ positive
/// descending, possibly fewer than k entries when rank falls short.
fn dense_topk(m: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let tol = s[order[0]] * 1e-12;
    let kept: Vec<usize> = order.into_iter().take(k).filter(|&i| s[i] > tol).collect();
    let p = DMatrix::from_fn(m.nrows(), kept.len(), |r, c| u[(r, kept[c])]);
    let q = DMatrix::from_fn(m.ncols(), kept.len(), |r, c| vt[(kept[c], r)]);
    let sigma = kept.iter().map(|&i| s[i]).collect();
    (p, sigma, q)
}

/// Randomized range-finder top-k with the same return contract.
fn randomized_topk(m: &impl MatOps, k: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let mut rng = seeding::stage_rng(0, "lsi-range-finder");
    let r = (k + OVERSAMPLE).min(m.nrows()).min(m.ncols());
    let omega = DMatrix::from_fn(m.ncols(), r, |_, _| gaussian(&mut rng));
    let mut q = m.mul_right(&omega).qr().q();
    for _ in 0..POWER_ITERS {
        let z = m.mul_trans(&q).qr().q();
        q = m.mul_right(&z).qr().q();
    }
    // Bᵀ = mᵀQ, so B = QᵀM ≈ q1 σ p1ᵀ gives m ≈ (Q q1) σ p1ᵀ
    let bt = m.mul_trans(&q);
    let (p1, sigma, q1) = dense_topk(&bt, k);
    (q * q1, sigma, p1)
}

/// Best-effort top-k factorization `m ≈ P diag(σ) Qᵀ`.
fn topk(m: &impl MatOps, k: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    if m.nrows() <= DENSE_LIMIT && m.ncols() <= DENSE_LIMIT {
        dense_topk(&m.dense(), k)
    } else {
        randomized_topk(m, k)
    }
}

/// Flip singular-vector pairs so each U column's largest-magnitude entry is
/// positive, making factorizations reproducible.
fn fix_signs(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    for c in 0..u.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..u.nrows() {
            let a = u[(r, c)].abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        if u[(best, c)] < 0.0 {
            u.column_mut(c).neg_mut();
            v.column_mut(c).neg_mut();
        }
    }
}

fn check_rank(k: usize, sigma: &[f64]) -> Result<()> {
    if sigma.len() < k {
        return Err(SimvecError::Param(format!(
            "requested {k} topics but the matrix rank is only about {}",
            sigma.len()
        )));
    }
    Ok(())
}

/// Top-k factorization of a document-term matrix.
pub fn truncated_svd(x: &TermDocMatrix, k: usize) -> Result<LsiModel> {
    if k == 0 {
        return Err(SimvecError::Param("k must be at least 1".into()));
    }
    if k > x.rows().min(x.cols()) {
        return Err(SimvecError::Param(format!(
            "k = {k} exceeds min(docs, terms) = {}",
            x.rows().min(x.cols())
        )));
    }
    if x.frobenius_norm() == 0.0 {
        return Err(SimvecError::Param("cannot factor an all-zero matrix".into()));
    }
    let (mut v, sigma, mut u) = topk(x, k);
    check_rank(k, &sigma)?;
    fix_signs(&mut u, &mut v);
    Ok(LsiModel { k, u, sigma, v })
}

/// Train a model, streaming the corpus in `chunksize`-document blocks. Each
/// merge scales the accumulated factorization by `decay` first, so older
/// blocks can be down-weighted. One block is equivalent to [`truncated_svd`].
pub fn train_lsi(
    streams: &[TokenStream],
    vocab: &Vocabulary,
    params: &LsiParams,
) -> Result<LsiModel> {
    params.validate()?;
    let x = build_matrix(streams, vocab, params.weighting);
    let k = params.topics;
    if k > x.rows().min(x.cols()) {
        return Err(SimvecError::Param(format!(
            "{k} topics exceed min(docs, terms) = {}",
            x.rows().min(x.cols())
        )));
    }
    if x.frobenius_norm() == 0.0 {
        return Err(SimvecError::Param("cannot factor an all-zero matrix".into()));
    }
    if params.chunksize >= x.rows() {
        return truncated_svd(&x, k);
    }

    // accumulate a term-side basis chunk by chunk: factor [decay·UΣ | Cᵀ]
    let mut basis: Option<(DMatrix<f64>, Vec<f64>)> = None;
    for start in (0..x.rows()).step_by(params.chunksize) {
        let end = (start + params.chunksize).min(x.rows());
        let chunk_t = {
            let mut m = DMatrix::zeros(x.cols(), end - start);
            for i in start..end {
                for (t, w) in x.row(i) {
                    m[(t as usize, i - start)] = w;
                }
            }
            m
        };
        let merged = match basis {
            None => chunk_t,
            Some((u, sigma)) => {
                let mut scaled = u;
                for (c, s) in sigma.iter().enumerate() {
                    scaled.column_mut(c).scale_mut(s * params.decay);
                }
                let mut m = DMatrix::zeros(x.cols(), scaled.ncols() + chunk_t.ncols());
                m.view_mut((0, 0), (x.cols(), scaled.ncols())).copy_from(&scaled);
                m.view_mut((0, scaled.ncols()), (x.cols(), chunk_t.ncols())).copy_from(&chunk_t);
                m
            }
        };
        let (u, sigma, _) = topk(&merged, k);
        basis = Some((u, sigma));
    }

    // project every document onto the final basis and re-orthogonalize, so
    // model invariants hold exactly: X·U = V'Σ'W'ᵀ, final U ← U·W'
    let (u, _) = basis.expect("at least one chunk");
    let p = x.mul_right(&u);
    let (mut v, sigma, w) = dense_topk(&p, k);
    check_rank(k, &sigma)?;
    let mut u = u * w;
    fix_signs(&mut u, &mut v);
    Ok(LsiModel { k, u, sigma, v })
}

impl LsiModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_terms(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_docs(&self) -> usize {
        self.v.nrows()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Topic vector of training document `i`: `σ ⊙ V[i]`.
    pub fn doc_vector(&self, i: usize) -> Result<DenseVector> {
        if i >= self.v.nrows() {
            return Err(SimvecError::Param(format!(
                "document index {i} outside 0..{}",
                self.v.nrows()
            )));
        }
        Ok((0..self.k).map(|c| self.sigma[c] * self.v[(i, c)]).collect())
    }

    /// All training document vectors, in row order.
    pub fn doc_vectors(&self) -> Vec<DenseVector> {
        (0..self.n_docs()).map(|i| self.doc_vector(i).expect("index in range")).collect()
    }

    /// Project an unseen term-space document into topic space: `dᵀU`.
    pub fn fold_in(&self, doc: &SparseVector) -> Result<DenseVector> {
        if doc.dim as usize != self.n_terms() {
            return Err(SimvecError::Dimension(format!(
                "document has {} terms, model expects {}",
                doc.dim,
                self.n_terms()
            )));
        }
        let mut out = vec![0.0; self.k];
        for &(t, w) in &doc.entries {
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * self.u[(t as usize, c)];
            }
        }
        Ok(out)
    }

    /// Reconstruct `V Σ Uᵀ` densely (small models only; used by tests).
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut vs = self.v.clone();
        for (c, s) in self.sigma.iter().enumerate() {
            vs.column_mut(c).scale_mut(*s);
        }
        vs * self.u.transpose()
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(&[MODEL_VERSION])?;
        for dim in [self.k as u64, self.u.nrows() as u64, self.v.nrows() as u64] {
            w.write_all(&dim.to_le_bytes())?;
        }
        let write_matrix = |w: &mut BufWriter<W>, m: &DMatrix<f64>| -> Result<()> {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    w.write_all(&m[(r, c)].to_le_bytes())?;
                }
            }
            Ok(())
        };
        write_matrix(&mut w, &self.u)?;
        for s in &self.sigma {
            w.write_all(&s.to_le_bytes())?;
        }
        write_matrix(&mut w, &self.v)?;
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        if byte[0] != MODEL_VERSION {
            return Err(SimvecError::Model(format!(
                "unsupported model format version {}",
                byte[0]
            )));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut BufReader<R>| -> Result<u64> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let k = read_u64(&mut r)? as usize;
        let terms = read_u64(&mut r)? as usize;
        let docs = read_u64(&mut r)? as usize;
        if k == 0 || k > terms.min(docs) {
            return Err(SimvecError::Model(format!(
                "inconsistent dimensions k={k}, terms={terms}, docs={docs}"
            )));
        }
        let read_matrix = |r: &mut BufReader<R>, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let mut buf = [0u8; 8];
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            Ok(DMatrix::from_row_slice(rows, cols, &data))
        };
        let u = read_matrix(&mut r, terms, k)?;
        let mut sigma = Vec::with_capacity(k);
        let mut buf = [0u8; 8];
        for _ in 0..k {
            r.read_exact(&mut buf)?;
            sigma.push(f64::from_le_bytes(buf));
        }
        let v = read_matrix(&mut r, docs, k)?;
        if sigma.iter().any(|s| !(*s > 0.0)) || sigma.windows(2).any(|w| w[0] < w[1]) {
            return Err(SimvecError::Model(
                "singular values must be positive and descending".into(),
            ));
        }
        Ok(Self { k, u, sigma, v })
    }

    pub fn save_to<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.save(std::fs::File::create(path)?)
    }

    pub fn load_from<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::load(std::fs::File::open(path)?)
    }
}
