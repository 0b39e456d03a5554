//! The three interest-enhancement components.
//!
//! - UIE retrieves the user's nearest codebook centers, weights them by
//!   similarity, and maps each alongside a learned per-user personal vector
//!   through a generalization layer.
//! - UPBE maintains two per-user vectors pulled toward the user-cluster
//!   centers most likely to consume the items the user actually consumed.
//! - UHSE replaces history items with their nearest item-cluster centers and
//!   mean-pools them.
//!
//! Retrieved centers, tower outputs, and stored UPBE vectors are constants to
//! the ranking loss; only generalization-layer weights and the personal
//! vector learn from it.

use std::collections::BTreeMap;

use rand::Rng;

use crate::ghca::{weighted_vector, MemoryNetwork};
use crate::numeric::{dot, sigmoid, sq_dist, Activation, Mlp, Optimizer, Tape};
use crate::snapshot::{ByteReader, ByteWriter, SnapshotError};

/// Per-user learned vectors: the UIE personal vector plus the two UPBE
/// enhancement vectors. Absent users read as all-zero records.
#[derive(Debug, Clone)]
pub struct StoreEntry {
    pub personal: Vec<f64>,
    pub upbe_l1: Vec<f64>,
    pub upbe_l2: Vec<f64>,
    g_personal: Vec<f64>,
    g_l1: Vec<f64>,
    g_l2: Vec<f64>,
    moments: Vec<f64>, // m then v for the three vectors, 6*d total
}

impl StoreEntry {
    fn zeroed(d: usize) -> Self {
        StoreEntry {
            personal: vec![0.0; d],
            upbe_l1: vec![0.0; d],
            upbe_l2: vec![0.0; d],
            g_personal: vec![0.0; d],
            g_l1: vec![0.0; d],
            g_l2: vec![0.0; d],
            moments: vec![0.0; 6 * d],
        }
    }
}

#[derive(Debug, Clone)]
pub struct PersonalizedStore {
    pub d: usize,
    entries: BTreeMap<u64, StoreEntry>,
    touched: Vec<u64>,
}

impl PersonalizedStore {
    pub fn new(d: usize) -> Self {
        PersonalizedStore {
            d,
            entries: BTreeMap::new(),
            touched: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, user_id: u64) -> Option<&StoreEntry> {
        self.entries.get(&user_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&u64, &StoreEntry)> {
        self.entries.iter()
    }

    fn entry_mut(&mut self, user_id: u64) -> &mut StoreEntry {
        let d = self.d;
        self.entries
            .entry(user_id)
            .or_insert_with(|| StoreEntry::zeroed(d))
    }

    pub fn accumulate_personal_grad(&mut self, user_id: u64, g: &[f64], scale: f64) {
        let entry = self.entry_mut(user_id);
        for (slot, gk) in entry.g_personal.iter_mut().zip(g) {
            *slot += scale * gk;
        }
        self.touched.push(user_id);
    }

    fn accumulate_upbe_grad(&mut self, user_id: u64, level: usize, g: &[f64], scale: f64) {
        let entry = self.entry_mut(user_id);
        let buf = if level == 0 {
            &mut entry.g_l1
        } else {
            &mut entry.g_l2
        };
        for (slot, gk) in buf.iter_mut().zip(g) {
            *slot += scale * gk;
        }
        self.touched.push(user_id);
    }

    /// Applies pending per-user gradients in ascending user-id order.
    pub fn apply(&mut self, opt: &Optimizer) {
        if self.touched.is_empty() {
            return;
        }
        self.touched.sort_unstable();
        self.touched.dedup();
        let d = self.d;
        let touched = std::mem::take(&mut self.touched);
        for user in touched {
            let entry = self.entries.get_mut(&user).expect("touched entry exists");
            let (m, v) = entry.moments.split_at_mut(3 * d);
            opt.apply(
                &mut entry.personal,
                &entry.g_personal,
                &mut m[0..d],
                &mut v[0..d],
            );
            opt.apply(
                &mut entry.upbe_l1,
                &entry.g_l1,
                &mut m[d..2 * d],
                &mut v[d..2 * d],
            );
            opt.apply(
                &mut entry.upbe_l2,
                &entry.g_l2,
                &mut m[2 * d..3 * d],
                &mut v[2 * d..3 * d],
            );
            entry.g_personal.iter_mut().for_each(|g| *g = 0.0);
            entry.g_l1.iter_mut().for_each(|g| *g = 0.0);
            entry.g_l2.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Segment layout: entry count u64, then per entry the user id and the
    /// three d-vectors. Entries are written in ascending user-id order.
    pub fn write_segment(&self, w: &mut ByteWriter) {
        w.put_u64(self.entries.len() as u64);
        for (user, entry) in &self.entries {
            w.put_u64(*user);
            w.put_f64s(&entry.personal);
            w.put_f64s(&entry.upbe_l1);
            w.put_f64s(&entry.upbe_l2);
        }
    }

    pub fn read_segment(r: &mut ByteReader<'_>, d: usize) -> Result<Self, SnapshotError> {
        let count = r.u64()? as usize;
        let mut store = PersonalizedStore::new(d);
        for _ in 0..count {
            let user = r.u64()?;
            let mut entry = StoreEntry::zeroed(d);
            entry.personal = r.f64s(d)?;
            entry.upbe_l1 = r.f64s(d)?;
            entry.upbe_l2 = r.f64s(d)?;
            store.entries.insert(user, entry);
        }
        Ok(store)
    }
}

/// Enhancement slot order inside the bundle.
pub const SLOT_UIE_L1: usize = 0;
pub const SLOT_UIE_L2: usize = 1;
pub const SLOT_UPBE_L1: usize = 2;
pub const SLOT_UPBE_L2: usize = 3;
pub const SLOT_UHSE: usize = 4;
pub const ENH_SLOTS: usize = 5;

/// One generalization layer per enhancement slot: `2d -> d (relu) -> d`.
/// The input is the enhancement-specific vector joined with a companion slot
/// (the personal vector for UIE, zeros otherwise). Output layers start at
/// zero so new enhancement features phase in from nothing.
#[derive(Debug, Clone)]
pub struct GenLayers {
    pub nets: Vec<Mlp>,
    pub d: usize,
}

impl GenLayers {
    pub fn new(d: usize, rng: &mut impl Rng) -> Self {
        let nets = (0..ENH_SLOTS)
            .map(|_| {
                let mut net =
                    Mlp::new(&[2 * d, d, d], Activation::Relu, Activation::Linear, rng);
                net.zero_output_layer();
                net
            })
            .collect();
        GenLayers { nets, d }
    }

    pub fn zero_grads(&mut self) {
        for net in &mut self.nets {
            net.zero_grads();
        }
    }

    pub fn apply(&mut self, opt: &Optimizer) {
        for net in &mut self.nets {
            net.apply(opt);
        }
    }
}

/// Forward context for one sample's enhancement bundle: which slots were
/// active and the tapes needed to route ranking-loss gradients back into the
/// generalization layers and the personal vector.
#[derive(Debug, Default)]
pub struct EnhancementForward {
    pub bundle: Vec<f64>,
    pub slot_tapes: [Option<Tape>; ENH_SLOTS],
    /// Set when the UIE slots ran; ranking gradients on the companion half of
    /// their inputs belong to this user's personal vector.
    pub uie_user: Option<u64>,
}

fn gen_input(main: &[f64], companion: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(main.len() + companion.len());
    x.extend_from_slice(main);
    x.extend_from_slice(companion);
    x
}

/// UIE forward: gated retrieval on the user codebook, similarity weighting,
/// then the generalization layers. Returns zero slots when retrieval stops.
pub fn uie_enhance(
    gens: &GenLayers,
    user_net: &MemoryNetwork,
    store: &PersonalizedStore,
    v_user: &[f64],
    user_id: u64,
    out: &mut EnhancementForward,
) -> (Vec<f64>, Vec<f64>) {
    let d = gens.d;
    let Some(hit) = user_net.retrieve(v_user) else {
        return (vec![0.0; d], vec![0.0; d]);
    };
    let zeros = vec![0.0; d];
    let personal = store.get(user_id).map(|e| e.personal.as_slice()).unwrap_or(&zeros);

    let w1 = weighted_vector(user_net.center_l1(hit.l1_index), v_user);
    let (y1, t1) = gens.nets[SLOT_UIE_L1].forward_tape(&gen_input(&w1, personal));
    out.slot_tapes[SLOT_UIE_L1] = Some(t1);

    let w2 = weighted_vector(user_net.center_l2(hit.l2_index), v_user);
    let (y2, t2) = gens.nets[SLOT_UIE_L2].forward_tape(&gen_input(&w2, personal));
    out.slot_tapes[SLOT_UIE_L2] = Some(t2);

    out.uie_user = Some(user_id);
    (y1, y2)
}

/// UPBE forward: the stored per-user vectors through their generalization
/// layers with a zero companion. Unknown users yield zero slots.
pub fn upbe_enhance(
    gens: &GenLayers,
    store: &PersonalizedStore,
    user_id: u64,
    out: &mut EnhancementForward,
) -> (Vec<f64>, Vec<f64>) {
    let d = gens.d;
    let Some(entry) = store.get(user_id) else {
        return (vec![0.0; d], vec![0.0; d]);
    };
    let zeros = vec![0.0; d];
    let (y1, t1) = gens.nets[SLOT_UPBE_L1].forward_tape(&gen_input(&entry.upbe_l1, &zeros));
    out.slot_tapes[SLOT_UPBE_L1] = Some(t1);
    let (y2, t2) = gens.nets[SLOT_UPBE_L2].forward_tape(&gen_input(&entry.upbe_l2, &zeros));
    out.slot_tapes[SLOT_UPBE_L2] = Some(t2);
    (y1, y2)
}

/// Mean of the retrieved level-2 item centers for a history sequence,
/// skipping items whose retrieval gates off. `None` when nothing survives.
pub fn uhse_pool<'a>(
    item_net: &MemoryNetwork,
    item_vecs: impl Iterator<Item = &'a [f64]>,
) -> Option<Vec<f64>> {
    let indices: Vec<usize> = item_vecs
        .filter_map(|v| item_net.retrieve(v).map(|r| r.l2_index))
        .collect();
    uhse_pool_indices(item_net, &indices)
}

/// Same pooling from already-resolved level-2 center indices (the cached
/// assignment path).
pub fn uhse_pool_indices(item_net: &MemoryNetwork, indices: &[usize]) -> Option<Vec<f64>> {
    if indices.is_empty() {
        return None;
    }
    let mut pooled = vec![0.0; item_net.d];
    for &j in indices {
        crate::numeric::axpy(1.0, item_net.center_l2(j), &mut pooled);
    }
    let n = indices.len() as f64;
    pooled.iter_mut().for_each(|x| *x /= n);
    Some(pooled)
}

/// UHSE forward: pooled center through its generalization layer; empty or
/// fully-gated histories yield a zero slot.
pub fn uhse_enhance(
    gens: &GenLayers,
    pooled: Option<Vec<f64>>,
    out: &mut EnhancementForward,
) -> Vec<f64> {
    let d = gens.d;
    let Some(pooled) = pooled else {
        return vec![0.0; d];
    };
    let zeros = vec![0.0; d];
    let (y, t) = gens.nets[SLOT_UHSE].forward_tape(&gen_input(&pooled, &zeros));
    out.slot_tapes[SLOT_UHSE] = Some(t);
    y
}

/// Concatenates the five slots in fixed order.
pub fn bundle(parts: [&[f64]; ENH_SLOTS], d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(ENH_SLOTS * d);
    for part in parts {
        assert_eq!(part.len(), d, "bundle: slot length {} != {}", part.len(), d);
        out.extend_from_slice(part);
    }
    out
}

/// Routes the ranking loss gradient on the bundle back into the
/// generalization layers, and the UIE companion-half gradients into the
/// user's personal vector. Everything else in the enhancement path is
/// detached by construction.
pub fn enhancement_backward(
    gens: &mut GenLayers,
    store: &mut PersonalizedStore,
    fwd: &EnhancementForward,
    d_bundle: &[f64],
    grad_scale: f64,
) {
    let d = gens.d;
    assert_eq!(d_bundle.len(), ENH_SLOTS * d, "bundle gradient length");
    for slot in 0..ENH_SLOTS {
        let Some(tape) = &fwd.slot_tapes[slot] else {
            continue;
        };
        let dy: Vec<f64> = d_bundle[slot * d..(slot + 1) * d]
            .iter()
            .map(|g| g * grad_scale)
            .collect();
        let dx = gens.nets[slot].backward(tape, &dy);
        if (slot == SLOT_UIE_L1 || slot == SLOT_UIE_L2) && fwd.uie_user.is_some() {
            let user = fwd.uie_user.unwrap();
            store.accumulate_personal_grad(user, &dx[d..2 * d], 1.0);
        }
    }
}

/// UIE clustering step on the user codebook: hierarchical assignment plus
/// the gated center pull. Returns the unscaled per-sample losses.
pub fn uie_train_step(
    user_net: &mut MemoryNetwork,
    v_user: &[f64],
    sample_in: bool,
    grad_scale: f64,
) -> (f64, f64) {
    if !sample_in {
        return (0.0, 0.0);
    }
    user_net.maybe_reinit_stale(v_user);
    let assignment = user_net.assign(v_user);
    user_net.cluster_update(v_user, assignment, true, grad_scale)
}

/// UHSE clustering step on the item codebook; only positive samples
/// participate.
pub fn uhse_train_step(
    item_net: &mut MemoryNetwork,
    v_item: &[f64],
    label: bool,
    sample_in: bool,
    grad_scale: f64,
) -> (f64, f64) {
    if !label || !sample_in {
        return (0.0, 0.0);
    }
    item_net.maybe_reinit_stale(v_item);
    let assignment = item_net.assign(v_item);
    item_net.cluster_update(v_item, assignment, true, grad_scale)
}

/// UPBE update: on a positive sample, the item vector searches the *user*
/// codebook for the clusters most likely to consume it; each found center
/// that is positively correlated with the user vector pulls the user's
/// stored vector toward it. Centers receive no gradient here. Returns the
/// unscaled per-sample losses.
pub fn upbe_update(
    user_net: &MemoryNetwork,
    store: &mut PersonalizedStore,
    user_id: u64,
    v_item: &[f64],
    v_user: &[f64],
    label: bool,
    grad_scale: f64,
) -> (f64, f64) {
    if !label {
        return (0.0, 0.0);
    }
    let (i, j) = user_net.assign(v_item);
    let mut losses = [0.0; 2];
    for (level, center) in [user_net.center_l1(i), user_net.center_l2(j)]
        .into_iter()
        .enumerate()
    {
        if dot(center, v_user) < 0.0 {
            continue;
        }
        let p = {
            let entry = store.entry_mut(user_id);
            if level == 0 {
                entry.upbe_l1.clone()
            } else {
                entry.upbe_l2.clone()
            }
        };
        let gate = sigmoid(dot(center, &p));
        losses[level] = gate * sq_dist(center, &p);
        let grad: Vec<f64> = center
            .iter()
            .zip(&p)
            .map(|(mu, pk)| -2.0 * gate * (mu - pk))
            .collect();
        store.accumulate_upbe_grad(user_id, level, &grad, grad_scale);
    }
    (losses[0], losses[1])
}
