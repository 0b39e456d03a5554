//! Learnable embedding tables over hashed sparse ids, plus weighted-mean
//! pooling of multi-valued feature groups.
//!
//! Gradient routing is explicit: a pooled read returns the rows it touched
//! and their pooling coefficients, and the caller decides whether those
//! routes carry gradient. A detached read simply records no routes, which is
//! how the stop-gradient contract between the auxiliary towers and the
//! ranking model is implemented.

use rand::Rng;
use thiserror::Error;

use crate::numeric::Optimizer;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("negative pooling weight {weight} at position {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("pooling length mismatch: {vectors} vectors vs {weights} weights")]
    LengthMismatch { vectors: usize, weights: usize },
}

/// One id -> vector table. Ids are reduced modulo `buckets` and then mixed,
/// so `id` and `id + buckets` always share a row while raw id locality is
/// broken up.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub name: String,
    pub buckets: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    grads: Vec<f64>,
    touched: Vec<u32>,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(name: &str, buckets: usize, dim: usize, rng: &mut impl Rng) -> Self {
        assert!(buckets > 0 && dim > 0);
        let bound = 1.0 / (dim as f64).sqrt();
        let weights = (0..buckets * dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self::from_weights(name, buckets, dim, weights)
    }

    pub fn from_weights(name: &str, buckets: usize, dim: usize, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), buckets * dim);
        EmbeddingTable {
            name: name.to_string(),
            buckets,
            dim,
            weights,
            grads: vec![0.0; buckets * dim],
            touched: Vec::new(),
            m: vec![0.0; buckets * dim],
            v: vec![0.0; buckets * dim],
        }
    }

    /// Multiply-shift hash of the bucket residue.
    pub fn row_of(&self, id: u64) -> usize {
        let r = id % self.buckets as u64;
        (r.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 17) as usize % self.buckets
    }

    /// The embedding row for `id`. Whether the read is detached is decided by
    /// the caller: a detached read is one whose row is never handed to
    /// `accumulate_row_grad`.
    pub fn embed(&self, id: u64) -> &[f64] {
        let at = self.row_of(id) * self.dim;
        &self.weights[at..at + self.dim]
    }

    pub fn row(&self, row: u32) -> &[f64] {
        let at = row as usize * self.dim;
        &self.weights[at..at + self.dim]
    }

    pub fn accumulate_row_grad(&mut self, row: u32, g: &[f64], scale: f64) {
        let at = row as usize * self.dim;
        for (slot, gk) in self.grads[at..at + self.dim].iter_mut().zip(g) {
            *slot += scale * gk;
        }
        self.touched.push(row);
    }

    /// Applies the pending sparse gradients. Rows never touched keep their
    /// exact previous bytes (moments included).
    pub fn apply(&mut self, opt: &Optimizer) {
        if self.touched.is_empty() {
            return;
        }
        self.touched.sort_unstable();
        self.touched.dedup();
        opt.apply_rows(
            self.dim,
            &self.touched,
            &mut self.weights,
            &mut self.grads,
            &mut self.m,
            &mut self.v,
        );
        self.touched.clear();
    }
}

/// Weighted mean `sum(w_k v_k) / sum(w_k)`. An empty list pools to the zero
/// vector; negative weights are rejected; an all-zero weight vector over a
/// non-empty list also pools to zero.
pub fn pool_group(dim: usize, vectors: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>, EmbeddingError> {
    if vectors.len() != weights.len() {
        return Err(EmbeddingError::LengthMismatch {
            vectors: vectors.len(),
            weights: weights.len(),
        });
    }
    let mut out = vec![0.0; dim];
    let mut wsum = 0.0;
    for (index, (&v, &w)) in vectors.iter().zip(weights).enumerate() {
        if w < 0.0 {
            return Err(EmbeddingError::NegativeWeight { index, weight: w });
        }
        crate::numeric::axpy(w, v, &mut out);
        wsum += w;
    }
    if wsum > 0.0 {
        out.iter_mut().for_each(|x| *x /= wsum);
    } else {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(out)
}

/// A pooled table read: the pooled vector plus, when attached, the rows it
/// came from with their pooling coefficients `w_k / sum(w)`.
#[derive(Debug, Clone)]
pub struct PooledRead {
    pub out: Vec<f64>,
    pub routes: Vec<(u32, f64)>,
}

/// Pools the rows for `(id, weight)` pairs from `table`. With `detached`
/// set, no gradient routes are recorded.
pub fn pool_rows(
    table: &EmbeddingTable,
    values: &[(u64, f64)],
    detached: bool,
) -> Result<PooledRead, EmbeddingError> {
    let mut out = vec![0.0; table.dim];
    let mut wsum = 0.0;
    let mut rows: Vec<(u32, f64)> = Vec::with_capacity(values.len());
    for (index, &(id, w)) in values.iter().enumerate() {
        if w < 0.0 {
            return Err(EmbeddingError::NegativeWeight { index, weight: w });
        }
        let row = table.row_of(id) as u32;
        crate::numeric::axpy(w, table.row(row), &mut out);
        wsum += w;
        rows.push((row, w));
    }
    let mut routes = Vec::new();
    if wsum > 0.0 {
        out.iter_mut().for_each(|x| *x /= wsum);
        if !detached {
            routes = rows.into_iter().map(|(r, w)| (r, w / wsum)).collect();
        }
    } else {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(PooledRead { out, routes })
}

/// Named groups of `(id, weight)` feature values. Group order is fixed by the
/// schema that builds the bundle.
#[derive(Debug, Clone, Default)]
pub struct FeatureBundle {
    pub groups: Vec<Vec<(u64, f64)>>,
}

impl FeatureBundle {
    pub fn new(groups: Vec<Vec<(u64, f64)>>) -> Self {
        FeatureBundle { groups }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Optimizer;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        EmbeddingTable::new("t", 97, 4, &mut rng)
    }

    #[test]
    fn same_id_same_vector() {
        let t = table();
        assert_eq!(t.embed(12345), t.embed(12345));
    }

    #[test]
    fn id_periodic_in_bucket_count() {
        let t = table();
        assert_eq!(t.embed(5), t.embed(5 + 97));
        assert_eq!(t.row_of(42), t.row_of(42 + 3 * 97));
    }

    #[test]
    fn pool_single_vector_is_identity() {
        let v = [1.0, 2.0, 3.0];
        let out = pool_group(3, &[&v], &[1.0]).unwrap();
        assert_eq!(out, v.to_vec());
    }

    #[test]
    fn pool_equal_vectors_any_weights() {
        let v = [0.5, -1.0];
        let out = pool_group(2, &[&v, &v], &[0.3, 7.0]).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-15 && (out[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pool_weighted_mix() {
        let out = pool_group(2, &[&[1.0, 0.0], &[0.0, 1.0]], &[1.0, 3.0]).unwrap();
        assert!((out[0] - 0.25).abs() < 1e-15 && (out[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pool_empty_is_zero() {
        assert_eq!(pool_group(3, &[], &[]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn pool_rejects_negative_weights() {
        let err = pool_group(2, &[&[1.0, 0.0]], &[-0.5]).unwrap_err();
        assert!(matches!(err, EmbeddingError::NegativeWeight { .. }));
    }

    #[test]
    fn detached_read_never_updates() {
        let mut t = table();
        let before = t.weights.clone();
        // A detached read records no routes, so no grads are accumulated.
        let read = pool_rows(&t, &[(3, 1.0), (9, 0.5)], true).unwrap();
        assert!(read.routes.is_empty());
        let mut opt = Optimizer::adam(0.1);
        opt.begin_step();
        t.apply(&opt);
        assert_eq!(t.weights, before);
    }

    #[test]
    fn attached_read_updates_only_looked_up_rows() {
        let mut t = table();
        let before = t.weights.clone();
        let read = pool_rows(&t, &[(3, 1.0)], false).unwrap();
        assert_eq!(read.routes.len(), 1);
        let (row, coeff) = read.routes[0];
        assert!((coeff - 1.0).abs() < 1e-15);
        t.accumulate_row_grad(row, &[1.0, 1.0, 1.0, 1.0], coeff);
        let mut opt = Optimizer::adam(0.1);
        opt.begin_step();
        t.apply(&opt);
        let at = row as usize * t.dim;
        for k in 0..t.weights.len() {
            if (at..at + t.dim).contains(&k) {
                assert_ne!(t.weights[k], before[k]);
            } else {
                assert_eq!(t.weights[k], before[k]);
            }
        }
    }

    proptest! {
        #[test]
        fn pooling_invariant_to_uniform_rescaling(
            scale in 1e-3f64..1e3,
            ws in proptest::collection::vec(0.01f64..10.0, 1..6),
        ) {
            let vecs: Vec<Vec<f64>> = (0..ws.len())
                .map(|k| vec![k as f64, 1.0 - k as f64])
                .collect();
            let refs: Vec<&[f64]> = vecs.iter().map(|v| v.as_slice()).collect();
            let a = pool_group(2, &refs, &ws).unwrap();
            let scaled: Vec<f64> = ws.iter().map(|w| w * scale).collect();
            let b = pool_group(2, &refs, &scaled).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
