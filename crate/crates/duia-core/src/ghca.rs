//! Gradient-based hierarchical stream clustering over a two-level codebook
//! ("memory network").
//!
//! Vectors are assigned by dot-product argmax, first over the level-1 centers
//! and then within the chosen parent's block of children. Centers move by
//! gradient descent on the similarity-gated squared distance
//! `sigmoid(v . mu) * ||v - mu||^2`, where the gate is treated as a constant:
//! differentiating through it would reward pushing centers to negative
//! similarity instead of pulling them onto the data. The input vector is also
//! detached; only centers carry gradient from these losses.
//!
//! Retrieval returns the nearest centers with their similarities and reports
//! nothing when either level is negatively correlated with the query.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{dot, sigmoid, sq_dist, Optimizer};
use crate::snapshot::{ByteReader, ByteWriter, SnapshotError};

const MAGIC: &[u8; 4] = b"GHCA";
const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum GhcaError {
    #[error("cluster loss weight {name} = {value} out of range (expected 0..=1)")]
    WeightOutOfRange { name: &'static str, value: f64 },
}

/// Weights for the three pairs of clustering losses. Small positive values
/// keep the codebooks from destabilizing the rest of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterLossWeights {
    pub rho: f64,
    pub lambda: f64,
    pub eta: f64,
}

impl Default for ClusterLossWeights {
    fn default() -> Self {
        ClusterLossWeights {
            rho: 0.05,
            lambda: 0.05,
            eta: 0.05,
        }
    }
}

impl ClusterLossWeights {
    pub fn validate(&self) -> Result<(), GhcaError> {
        for (name, value) in [
            ("rho", self.rho),
            ("lambda", self.lambda),
            ("eta", self.eta),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(GhcaError::WeightOutOfRange { name, value });
            }
        }
        Ok(())
    }
}

/// A successful gated retrieval: nearest level-1 and level-2 centers with
/// their dot-product similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub l1_index: usize,
    pub l1_sim: f64,
    pub l2_index: usize,
    pub l2_sim: f64,
}

/// Two-level codebook with per-cluster utilization counters.
///
/// Child block `i` of the level-2 array occupies indices
/// `[i * branch, (i + 1) * branch)`.
#[derive(Debug, Clone)]
pub struct MemoryNetwork {
    pub d: usize,
    pub k1: usize,
    pub branch: usize,
    level1: Vec<f64>,
    level2: Vec<f64>,
    pub train_hits: Vec<u64>,
    pub test_hits: Vec<u64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    touched1: Vec<u32>,
    touched2: Vec<u32>,
    m1: Vec<f64>,
    v1: Vec<f64>,
    m2: Vec<f64>,
    v2: Vec<f64>,
    // Stale-center rescue: a level-1 center unseen for `reinit_stale_after`
    // participating samples is re-seeded at the current input. Off by default.
    pub reinit_stale_after: Option<u64>,
    last_hit: Vec<u64>,
    update_count: u64,
    // When set, level-2 assignment searches all children instead of the
    // chosen parent's block.
    pub global_l2_search: bool,
    // Test hook: forces the negative-correlation stop for every query.
    retrieval_disabled: bool,
}

impl MemoryNetwork {
    pub fn new(d: usize, k1: usize, branch: usize, rng: &mut impl Rng) -> Self {
        assert!(d > 0 && k1 > 0 && branch > 0);
        let bound = 1.0 / (d as f64).sqrt();
        let level1 = (0..k1 * d).map(|_| rng.gen_range(-bound..bound)).collect();
        let level2 = (0..k1 * branch * d)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self::from_centers(d, k1, branch, level1, level2)
    }

    pub fn from_centers(
        d: usize,
        k1: usize,
        branch: usize,
        level1: Vec<f64>,
        level2: Vec<f64>,
    ) -> Self {
        assert_eq!(level1.len(), k1 * d);
        assert_eq!(level2.len(), k1 * branch * d);
        let n1 = level1.len();
        let n2 = level2.len();
        MemoryNetwork {
            d,
            k1,
            branch,
            level1,
            level2,
            train_hits: vec![0; k1],
            test_hits: vec![0; k1],
            g1: vec![0.0; n1],
            g2: vec![0.0; n2],
            touched1: Vec::new(),
            touched2: Vec::new(),
            m1: vec![0.0; n1],
            v1: vec![0.0; n1],
            m2: vec![0.0; n2],
            v2: vec![0.0; n2],
            reinit_stale_after: None,
            last_hit: vec![0; k1],
            update_count: 0,
            global_l2_search: false,
            retrieval_disabled: false,
        }
    }

    pub fn center_l1(&self, i: usize) -> &[f64] {
        &self.level1[i * self.d..(i + 1) * self.d]
    }

    pub fn center_l2(&self, j: usize) -> &[f64] {
        &self.level2[j * self.d..(j + 1) * self.d]
    }

    pub fn level1_raw(&self) -> &[f64] {
        &self.level1
    }

    pub fn level2_raw(&self) -> &[f64] {
        &self.level2
    }

    pub fn set_center_l1(&mut self, i: usize, v: &[f64]) {
        self.level1[i * self.d..(i + 1) * self.d].copy_from_slice(v);
    }

    pub fn set_center_l2(&mut self, j: usize, v: &[f64]) {
        self.level2[j * self.d..(j + 1) * self.d].copy_from_slice(v);
    }

    pub fn disable_retrieval(&mut self, disabled: bool) {
        self.retrieval_disabled = disabled;
    }

    fn argmax_dot(v: &[f64], centers: &[f64], d: usize, from: usize, to: usize) -> (usize, f64) {
        let mut best = from;
        let mut best_sim = f64::NEG_INFINITY;
        for c in from..to {
            let sim = dot(v, &centers[c * d..(c + 1) * d]);
            // Strict comparison: ties keep the lowest index.
            if sim > best_sim {
                best_sim = sim;
                best = c;
            }
        }
        (best, best_sim)
    }

    /// Hierarchical assignment: level-1 argmax, then argmax within the chosen
    /// parent's child block. Returns global indices; `j / branch == i` unless
    /// `global_l2_search` is set.
    pub fn assign(&self, v: &[f64]) -> (usize, usize) {
        assert_eq!(
            v.len(),
            self.d,
            "assign: dim mismatch ({} vs {})",
            v.len(),
            self.d
        );
        let (i, _) = Self::argmax_dot(v, &self.level1, self.d, 0, self.k1);
        let (from, to) = if self.global_l2_search {
            (0, self.k1 * self.branch)
        } else {
            (i * self.branch, (i + 1) * self.branch)
        };
        let (j, _) = Self::argmax_dot(v, &self.level2, self.d, from, to);
        (i, j)
    }

    /// Per-sample gated clustering losses and center gradients for an
    /// assigned vector. The gate is a constant in the gradient, and `v`
    /// receives none: only centers move. Gradients are scaled by
    /// `grad_scale` (loss weight over batch size) and accumulated until the
    /// next optimizer apply; the returned losses are unscaled.
    ///
    /// With `sample_in` false the sample skips clustering entirely.
    pub fn cluster_update(
        &mut self,
        v: &[f64],
        assignment: (usize, usize),
        sample_in: bool,
        grad_scale: f64,
    ) -> (f64, f64) {
        if !sample_in {
            return (0.0, 0.0);
        }
        let (i, j) = assignment;
        assert!(i < self.k1, "level-1 index {i} out of range");
        assert!(j < self.k1 * self.branch, "level-2 index {j} out of range");
        self.update_count += 1;
        self.train_hits[i] += 1;
        self.last_hit[i] = self.update_count;

        let d = self.d;
        let mu1 = &self.level1[i * d..(i + 1) * d];
        let g1 = sigmoid(dot(v, mu1));
        let l1 = g1 * sq_dist(v, mu1);
        for k in 0..d {
            self.g1[i * d + k] += grad_scale * (-2.0 * g1 * (v[k] - self.level1[i * d + k]));
        }
        self.touched1.push(i as u32);

        let mu2 = &self.level2[j * d..(j + 1) * d];
        let g2 = sigmoid(dot(v, mu2));
        let l2 = g2 * sq_dist(v, mu2);
        for k in 0..d {
            self.g2[j * d + k] += grad_scale * (-2.0 * g2 * (v[k] - self.level2[j * d + k]));
        }
        self.touched2.push(j as u32);

        (l1, l2)
    }

    /// One immediate streaming step: optional stale-center rescue, assignment,
    /// and an in-place SGD pull of both centers toward `v`. Used when the
    /// codebook is trained standalone rather than inside the joint objective.
    pub fn streaming_update(&mut self, v: &[f64], lr: f64, sample_in: bool) -> (f64, f64) {
        if !sample_in {
            return (0.0, 0.0);
        }
        self.maybe_reinit_stale(v);
        let (i, j) = self.assign(v);
        let losses = self.cluster_update(v, (i, j), true, 1.0);
        // Fold the just-accumulated gradients straight into the centers.
        let d = self.d;
        for k in 0..d {
            self.level1[i * d + k] -= lr * self.g1[i * d + k];
            self.g1[i * d + k] = 0.0;
            self.level2[j * d + k] -= lr * self.g2[j * d + k];
            self.g2[j * d + k] = 0.0;
        }
        self.touched1.clear();
        self.touched2.clear();
        losses
    }

    /// Re-seeds the most-stale level-1 center (and its children) at `v` when
    /// it has gone unused for longer than `reinit_stale_after` samples. At
    /// most one center per call.
    pub fn maybe_reinit_stale(&mut self, v: &[f64]) {
        let Some(limit) = self.reinit_stale_after else {
            return;
        };
        if self.update_count < limit {
            return;
        }
        let (stalest, age) = self
            .last_hit
            .iter()
            .enumerate()
            .map(|(i, &h)| (i, self.update_count - h))
            .max_by_key(|&(i, age)| (age, std::cmp::Reverse(i)))
            .expect("k1 > 0");
        if age <= limit {
            return;
        }
        self.set_center_l1(stalest, v);
        for c in 0..self.branch {
            self.set_center_l2(stalest * self.branch + c, v);
        }
        self.last_hit[stalest] = self.update_count;
    }

    /// Gated retrieval. Nothing is returned when either level's best center
    /// is negatively correlated with the query.
    pub fn retrieve(&self, q: &[f64]) -> Option<Retrieval> {
        assert_eq!(
            q.len(),
            self.d,
            "retrieve: dim mismatch ({} vs {})",
            q.len(),
            self.d
        );
        if self.retrieval_disabled {
            return None;
        }
        let (i, sim1) = Self::argmax_dot(q, &self.level1, self.d, 0, self.k1);
        if sim1 < 0.0 {
            return None;
        }
        let (j, sim2) =
            Self::argmax_dot(q, &self.level2, self.d, i * self.branch, (i + 1) * self.branch);
        if sim2 < 0.0 {
            return None;
        }
        Some(Retrieval {
            l1_index: i,
            l1_sim: sim1,
            l2_index: j,
            l2_sim: sim2,
        })
    }

    pub fn record_test_hit(&mut self, l1_index: usize) {
        self.test_hits[l1_index] += 1;
    }

    pub fn reset_test_hits(&mut self) {
        self.test_hits.iter_mut().for_each(|h| *h = 0);
    }

    /// Fraction of level-1 clusters hit at least once during testing.
    pub fn hit_rate(&self) -> f64 {
        let hit = self.test_hits.iter().filter(|&&h| h > 0).count();
        hit as f64 / self.k1 as f64
    }

    /// Applies accumulated center gradients and clears them.
    pub fn apply(&mut self, opt: &Optimizer) {
        if !self.touched1.is_empty() {
            self.touched1.sort_unstable();
            self.touched1.dedup();
            opt.apply_rows(
                self.d,
                &self.touched1,
                &mut self.level1,
                &mut self.g1,
                &mut self.m1,
                &mut self.v1,
            );
            self.touched1.clear();
        }
        if !self.touched2.is_empty() {
            self.touched2.sort_unstable();
            self.touched2.dedup();
            opt.apply_rows(
                self.d,
                &self.touched2,
                &mut self.level2,
                &mut self.g2,
                &mut self.m2,
                &mut self.v2,
            );
            self.touched2.clear();
        }
    }

    pub fn write_segment(&self, w: &mut ByteWriter) {
        let mut seg = ByteWriter::new();
        seg.put_bytes(MAGIC);
        seg.put_u32(VERSION);
        seg.put_u32(self.d as u32);
        seg.put_u32(self.k1 as u32);
        seg.put_u32(self.branch as u32);
        seg.put_f64s(&self.level1);
        seg.put_f64s(&self.level2);
        seg.put_u64s(&self.train_hits);
        seg.put_u64s(&self.test_hits);
        w.put_bytes(&seg.finish_with_crc());
    }

    pub fn read_segment(r: &mut ByteReader<'_>) -> Result<MemoryNetwork, SnapshotError> {
        let start = r.offset();
        r.expect_magic(MAGIC)?;
        r.expect_version(VERSION)?;
        let dims_at = r.offset();
        let d = r.u32()? as usize;
        let k1 = r.u32()? as usize;
        let branch = r.u32()? as usize;
        if d == 0 || k1 == 0 || branch == 0 {
            return Err(SnapshotError::Invalid {
                offset: dims_at,
                what: "zero codebook dimension".into(),
            });
        }
        let level1 = r.f64s(k1 * d)?;
        let level2 = r.f64s(k1 * branch * d)?;
        let train_hits = r.u64s(k1)?;
        let test_hits = r.u64s(k1)?;
        // Segment CRC covers everything from the magic up to here.
        r.verify_crc_since(start)?;
        let mut net = MemoryNetwork::from_centers(d, k1, branch, level1, level2);
        net.train_hits = train_hits;
        net.test_hits = test_hits;
        Ok(net)
    }
}

/// Similarity-weighted copy of a retrieved center: `sigmoid(mu . q) * mu`.
/// Both operands are constants here; downstream gradients stop at this value.
pub fn weighted_vector(mu: &[f64], q: &[f64]) -> Vec<f64> {
    let g = sigmoid(dot(mu, q));
    mu.iter().map(|&m| g * m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_grad;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// 2-d network with hand-placed centers for worked examples.
    fn tiny() -> MemoryNetwork {
        // level1: [1,0], [0,1]; children of each parent placed nearby.
        MemoryNetwork::from_centers(
            2,
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.2, 1.0, -0.2, 0.2, 1.0, -0.2, 1.0],
        )
    }

    #[test]
    fn assign_picks_most_similar_parent_and_child() {
        let net = tiny();
        let (i, j) = net.assign(&[0.9, 0.1]);
        assert_eq!(i, 0);
        // Children of parent 0: dots 0.92 vs 0.88 -> child 0.
        assert_eq!(j, 0);
    }

    #[test]
    fn assign_ties_break_to_lowest_index() {
        let net = MemoryNetwork::from_centers(
            2,
            2,
            1,
            vec![0.5, 0.5, 0.5, 0.5],
            vec![0.1, 0.1, 0.1, 0.1],
        );
        let (i, j) = net.assign(&[1.0, 1.0]);
        assert_eq!((i, j), (0, 0));
    }

    #[test]
    fn hierarchy_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = MemoryNetwork::new(8, 6, 4, &mut rng);
        for t in 0..200 {
            let v: Vec<f64> = (0..8)
                .map(|k| ((t * 8 + k) as f64 * 0.613).sin())
                .collect();
            let (i, j) = net.assign(&v);
            assert_eq!(j / net.branch, i);
        }
    }

    #[test]
    fn cluster_update_exact_center_is_zero() {
        let mut net = tiny();
        let v = [1.0, 0.0];
        let (i, j) = net.assign(&v);
        // Overwrite the assigned child so both levels sit exactly on v.
        net.set_center_l2(j, &v);
        let (l1, l2) = net.cluster_update(&v, (i, j), true, 1.0);
        assert_eq!(l1, 0.0);
        assert_eq!(l2, 0.0);
        assert!(net.g1.iter().all(|&g| g == 0.0));
        assert!(net.g2.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn cluster_update_worked_cases() {
        // v=[1,0], mu=[0,0]: gate 0.5, loss 0.5, center grad [-1, 0].
        let mut net =
            MemoryNetwork::from_centers(2, 1, 1, vec![0.0, 0.0], vec![0.0, 1.0]);
        let v = [1.0, 0.0];
        let (l1, l2) = net.cluster_update(&v, (0, 0), true, 1.0);
        assert!((l1 - 0.5).abs() < 1e-15);
        assert_eq!(&net.g1[0..2], &[-1.0, 0.0]);
        // v=[1,0], mu=[0,1]: gate 0.5, loss 1.0, center grad [-1, 1].
        assert!((l2 - 1.0).abs() < 1e-15);
        assert_eq!(&net.g2[0..2], &[-1.0, 1.0]);
        assert_eq!(net.train_hits[0], 1);
    }

    #[test]
    fn skipped_sample_leaves_network_untouched() {
        let mut net = tiny();
        let before = net.clone();
        let (l1, l2) = net.cluster_update(&[0.9, 0.1], (0, 0), false, 1.0);
        assert_eq!((l1, l2), (0.0, 0.0));
        assert_eq!(net.level1, before.level1);
        assert_eq!(net.train_hits, before.train_hits);
    }

    /// The analytic center gradient of the gate-frozen loss must match
    /// central differences on g_const * ||v - mu||^2 to 1e-5.
    #[test]
    fn center_gradient_matches_frozen_gate_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let d = 6;
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let gate = sigmoid(dot(&v, &mu));
            let analytic: Vec<f64> = (0..d).map(|k| -2.0 * gate * (v[k] - mu[k])).collect();
            let fd = finite_diff_grad(|m| gate * sq_dist(&v, m), &mu, 1e-6);
            for k in 0..d {
                let denom = fd[k].abs().max(1e-8);
                assert!(
                    ((analytic[k] - fd[k]) / denom).abs() < 1e-5,
                    "component {k}: {} vs {}",
                    analytic[k],
                    fd[k]
                );
            }
        }
    }

    #[test]
    fn sgd_contracts_toward_fixed_vector() {
        let mut net =
            MemoryNetwork::from_centers(2, 1, 1, vec![0.0, 0.0], vec![0.0, 0.0]);
        let v = [1.5, -0.5];
        let mut prev = sq_dist(&v, net.center_l1(0)).sqrt();
        for _ in 0..200 {
            net.streaming_update(&v, 0.2, true);
            let now = sq_dist(&v, net.center_l1(0)).sqrt();
            if prev > 1e-12 {
                assert!(now < prev, "distance must strictly decrease: {now} vs {prev}");
            }
            prev = now;
        }
        assert!(prev < 1e-6, "did not converge: {prev}");
    }

    #[test]
    fn retrieval_gates_on_negative_similarity() {
        let net = MemoryNetwork::from_centers(
            2,
            2,
            1,
            vec![-1.0, 0.0, -0.5, -0.5],
            vec![-1.0, 0.0, -0.5, -0.5],
        );
        assert!(net.retrieve(&[1.0, 0.0]).is_none());
    }

    #[test]
    fn retrieval_worked_example() {
        let net = MemoryNetwork::from_centers(
            2,
            2,
            1,
            vec![0.6, 0.0, -1.0, 0.0],
            vec![0.6, 0.0, -1.0, 0.0],
        );
        let r = net.retrieve(&[1.0, 0.0]).unwrap();
        assert_eq!(r.l1_index, 0);
        assert!((r.l1_sim - 0.6).abs() < 1e-15);
    }

    #[test]
    fn retrieval_of_exact_unit_center() {
        let net = MemoryNetwork::from_centers(
            2,
            2,
            1,
            vec![1.0, 0.0, 0.0, -1.0],
            vec![1.0, 0.0, 0.0, -1.0],
        );
        let r = net.retrieve(&[1.0, 0.0]).unwrap();
        assert_eq!(r.l1_index, 0);
        assert!((r.l1_sim - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_vector_cases() {
        let w = weighted_vector(&[0.0, 1.0], &[1.0, 0.0]);
        assert_eq!(w, vec![0.0, 0.5]);
        let w = weighted_vector(&[1.0, 0.0], &[1.0, 0.0]);
        assert!((w[0] - sigmoid(1.0)).abs() < 1e-15);
        assert_eq!(w[1], 0.0);
        assert_eq!(weighted_vector(&[0.0, 0.0], &[3.0, 4.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn hit_rate_counts_touched_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = MemoryNetwork::new(2, 4, 1, &mut rng);
        net.record_test_hit(0);
        net.record_test_hit(1);
        net.record_test_hit(2);
        net.record_test_hit(2);
        assert!((net.hit_rate() - 0.75).abs() < 1e-15);
        net.record_test_hit(3);
        assert_eq!(net.hit_rate(), 1.0);
    }

    #[test]
    fn snapshot_roundtrip_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut net = MemoryNetwork::new(4, 3, 2, &mut rng);
        net.train_hits[1] = 17;
        net.test_hits[2] = 5;
        let mut w = ByteWriter::new();
        net.write_segment(&mut w);
        let bytes = w.into_bytes();
        let mut r = ByteReader::new(&bytes);
        let back = MemoryNetwork::read_segment(&mut r).unwrap();
        assert_eq!(r.remaining(), 0);
        assert_eq!(back.level1, net.level1);
        assert_eq!(back.level2, net.level2);
        assert_eq!(back.train_hits, net.train_hits);
        assert_eq!(back.test_hits, net.test_hits);
        assert_eq!((back.d, back.k1, back.branch), (net.d, net.k1, net.branch));
    }

    #[test]
    fn snapshot_truncation_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let net = MemoryNetwork::new(4, 3, 2, &mut rng);
        let mut w = ByteWriter::new();
        net.write_segment(&mut w);
        let bytes = w.into_bytes();
        let mut r = ByteReader::new(&bytes[..bytes.len() / 2]);
        assert!(matches!(
            MemoryNetwork::read_segment(&mut r),
            Err(SnapshotError::Truncated { .. })
        ));
    }

    #[test]
    fn snapshot_corruption_fails_checksum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let net = MemoryNetwork::new(4, 3, 2, &mut rng);
        let mut w = ByteWriter::new();
        net.write_segment(&mut w);
        let mut bytes = w.into_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let mut r = ByteReader::new(&bytes);
        match MemoryNetwork::read_segment(&mut r) {
            Err(SnapshotError::Checksum { expected, actual }) => assert_ne!(expected, actual),
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn stale_reinit_rescues_dead_center() {
        let mut net = MemoryNetwork::from_centers(
            2,
            2,
            1,
            vec![1.0, 0.0, -5.0, -5.0], // center 1 can never win against axis data
            vec![1.0, 0.0, -5.0, -5.0],
        );
        net.reinit_stale_after = Some(10);
        for _ in 0..30 {
            net.streaming_update(&[1.0, 0.05], 0.05, true);
        }
        // Center 1 has been stale past the limit; the next point re-seeds it.
        net.streaming_update(&[0.0, 2.0], 0.05, true);
        let c1 = net.center_l1(1).to_vec();
        assert!(c1[1] > 1.0, "stale center was not re-seeded: {c1:?}");
    }

    #[test]
    fn weights_validation() {
        assert!(ClusterLossWeights::default().validate().is_ok());
        let bad = ClusterLossWeights {
            rho: 1.5,
            lambda: 0.05,
            eta: 0.05,
        };
        assert!(matches!(
            bad.validate(),
            Err(GhcaError::WeightOutOfRange { name: "rho", .. })
        ));
    }

    proptest! {
        /// Positive rescaling of the query never changes the assignment.
        #[test]
        fn assignment_scale_invariant(alpha in 1e-3f64..1e3, seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = MemoryNetwork::new(4, 5, 3, &mut rng);
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let scaled: Vec<f64> = v.iter().map(|x| x * alpha).collect();
            prop_assert_eq!(net.assign(&v), net.assign(&scaled));
        }

        /// Retrievals never surface a negatively-correlated center.
        #[test]
        fn retrieval_similarity_never_negative(seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = MemoryNetwork::new(4, 5, 3, &mut rng);
            let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let Some(r) = net.retrieve(&q) {
                prop_assert!(r.l1_sim >= 0.0);
                prop_assert!(r.l2_sim >= 0.0);
                prop_assert_eq!(r.l2_index / net.branch, r.l1_index);
            }
        }
    }
}
