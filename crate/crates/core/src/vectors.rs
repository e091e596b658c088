//! Vector arithmetic shared by all similarity methods: sparse and dense dot
//! products, norms, and cosine similarity. Accumulation is always f64.
//!
//! Zero-norm vectors (empty documents survive preprocessing legitimately)
//! yield similarity 0 rather than an error, so one blank document cannot
//! abort a large pair evaluation; callers that care count them via
//! [`crate::eval::score_pairs`]'s diagnostic.

use crate::{Result, SimvecError};

/// Fixed-dimension dense vector. Producers guarantee finite entries.
pub type DenseVector = Vec<f64>;

/// Sparse vector over a vocabulary index space: entries sorted by strictly
/// increasing index, zero weights never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector {
    pub entries: Vec<(u32, f64)>,
    pub dim: u32,
}

impl SparseVector {
    /// Build from (index, weight) pairs, validating the invariants.
    pub fn new(mut entries: Vec<(u32, f64)>, dim: u32) -> Result<Self> {
        entries.retain(|&(_, w)| w != 0.0);
        entries.sort_unstable_by_key(|&(i, _)| i);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(SimvecError::Param(format!(
                    "duplicate sparse index {}",
                    pair[0].0
                )));
            }
        }
        if let Some(&(last, _)) = entries.last() {
            if last >= dim {
                return Err(SimvecError::Dimension(format!(
                    "sparse index {last} out of range for dim {dim}"
                )));
            }
        }
        Ok(Self { entries, dim })
    }

    pub fn empty(dim: u32) -> Self {
        Self { entries: Vec::new(), dim }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dot product by sorted-merge.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Dense copy (test/debug helper; dim bounded by vocabulary size).
    pub fn densify(&self) -> DenseVector {
        let mut v = vec![0.0; self.dim as usize];
        for &(i, w) in &self.entries {
            v[i as usize] = w;
        }
        v
    }
}

pub fn dot_dense(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SimvecError::Dimension(format!(
            "dense dot: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

pub fn norm_dense(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity of dense vectors; 0.0 if either norm is zero.
pub fn cosine_dense(a: &[f64], b: &[f64]) -> Result<f64> {
    let d = dot_dense(a, b)?;
    Ok(finish_cosine(d, norm_dense(a), norm_dense(b)))
}

/// Cosine similarity of sparse vectors over a shared vocabulary; 0.0 if
/// either norm is zero. Index spaces must match.
pub fn cosine_sparse(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    if a.dim != b.dim {
        return Err(SimvecError::Dimension(format!(
            "sparse cosine: dim {} vs {}",
            a.dim, b.dim
        )));
    }
    Ok(finish_cosine(a.dot(b), a.norm(), b.norm()))
}

fn finish_cosine(dot: f64, na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identical_vectors_cosine_one() {
        let a = vec![0.3, -1.2, 4.0];
        assert_abs_diff_eq!(cosine_dense(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_vectors_cosine_zero() {
        assert_eq!(cosine_dense(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn forty_five_degrees() {
        let got = cosine_dense(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(got, 0.70710678, epsilon = 1e-8);
    }

    #[test]
    fn zero_norm_gives_zero() {
        assert_eq!(cosine_dense(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        let z = SparseVector::empty(4);
        let a = SparseVector::new(vec![(1, 2.0)], 4).unwrap();
        assert_eq!(cosine_sparse(&z, &a).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_errors() {
        assert!(cosine_dense(&[1.0], &[1.0, 2.0]).is_err());
        let a = SparseVector::empty(3);
        let b = SparseVector::empty(4);
        assert!(cosine_sparse(&a, &b).is_err());
    }

    #[test]
    fn sparse_constructor_enforces_invariants() {
        assert!(SparseVector::new(vec![(0, 1.0), (0, 2.0)], 3).is_err());
        assert!(SparseVector::new(vec![(5, 1.0)], 3).is_err());
        let v = SparseVector::new(vec![(2, 1.0), (0, 3.0), (1, 0.0)], 3).unwrap();
        assert_eq!(v.entries, vec![(0, 3.0), (2, 1.0)]); // sorted, zero dropped
    }

    proptest! {
        #[test]
        fn cosine_symmetric(a in prop::collection::vec(-1e3..1e3f64, 1..20),
                            b in prop::collection::vec(-1e3..1e3f64, 1..20)) {
            let n = a.len().min(b.len());
            let (a, b) = (&a[..n], &b[..n]);
            prop_assert_eq!(cosine_dense(a, b).unwrap(), cosine_dense(b, a).unwrap());
        }

        #[test]
        fn cosine_scale_invariant(a in prop::collection::vec(-1e3..1e3f64, 2..16),
                                  lambda in 1e-3..1e3f64) {
            let b: Vec<f64> = a.iter().map(|x| x + 1.0).collect();
            let scaled: Vec<f64> = a.iter().map(|x| x * lambda).collect();
            let c1 = cosine_dense(&a, &b).unwrap();
            let c2 = cosine_dense(&scaled, &b).unwrap();
            prop_assert!((c1 - c2).abs() < 1e-12 || (c1 == 0.0 && c2 == 0.0));
        }

        #[test]
        fn sparse_dense_agree(pairs in prop::collection::btree_map(0u32..40, -1e2..1e2f64, 0..20),
                              pairs2 in prop::collection::btree_map(0u32..40, -1e2..1e2f64, 0..20)) {
            let a = SparseVector::new(pairs.into_iter().collect(), 40).unwrap();
            let b = SparseVector::new(pairs2.into_iter().collect(), 40).unwrap();
            let sparse = cosine_sparse(&a, &b).unwrap();
            let dense = cosine_dense(&a.densify(), &b.densify()).unwrap();
            prop_assert!((sparse - dense).abs() < 1e-12);
        }

        #[test]
        fn cosine_bounded(a in prop::collection::vec(-1e6..1e6f64, 1..12),
                          b in prop::collection::vec(-1e6..1e6f64, 1..12)) {
            let n = a.len().min(b.len());
            let c = cosine_dense(&a[..n], &b[..n]).unwrap();
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&c));
        }
    }
}
