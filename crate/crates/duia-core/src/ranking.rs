//! Multi-task ranking backbone: a one-extraction-layer PLE-style mixture of
//! shared and task-specific experts with softmax gates, or a plain shared
//! bottom, feeding one logit tower per task. Also owns the merge score and
//! the loss assembly over all objective terms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ghca::ClusterLossWeights;
use crate::numeric::{bce_with_logit, dot, sigmoid, Activation, Mlp, Optimizer, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    SharedBottom,
    PleLite,
}

#[derive(Debug, Clone)]
pub struct Backbone {
    pub kind: BackboneKind,
    pub in_dim: usize,
    pub expert_out: usize,
    pub shared: Vec<Mlp>,
    /// One expert list per task; empty for the shared-bottom kind.
    pub task_experts: Vec<Vec<Mlp>>,
    /// One gate per task over its visible experts; empty for shared bottom.
    pub gates: Vec<Mlp>,
    pub towers: Vec<Mlp>,
}

/// Per-task logits and probabilities from one forward pass.
#[derive(Debug, Clone)]
pub struct TaskOutputs {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Everything needed to run the exact backward pass of one forward.
#[derive(Debug)]
pub struct BackboneTape {
    expert_tapes: Vec<Tape>,
    expert_outs: Vec<Vec<f64>>,
    gate_tapes: Vec<Option<Tape>>,
    gate_weights: Vec<Vec<f64>>,
    tower_tapes: Vec<Tape>,
    mixes: Vec<Vec<f64>>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Backbone {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        kind: BackboneKind,
        in_dim: usize,
        num_tasks: usize,
        num_shared: usize,
        num_task_experts: usize,
        expert_hidden: &[usize],
        expert_out: usize,
        tower_hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut expert_dims = vec![in_dim];
        expert_dims.extend_from_slice(expert_hidden);
        expert_dims.push(expert_out);
        let expert =
            |rng: &mut R| Mlp::new(&expert_dims, Activation::Relu, Activation::Linear, rng);
        let shared: Vec<Mlp> = (0..num_shared).map(|_| expert(rng)).collect();
        let (task_experts, gates) = match kind {
            BackboneKind::SharedBottom => (vec![Vec::new(); num_tasks], Vec::new()),
            BackboneKind::PleLite => {
                let te: Vec<Vec<Mlp>> = (0..num_tasks)
                    .map(|_| (0..num_task_experts).map(|_| expert(rng)).collect())
                    .collect();
                let gates = (0..num_tasks)
                    .map(|_| {
                        Mlp::new(
                            &[in_dim, num_shared + num_task_experts],
                            Activation::Linear,
                            Activation::Linear,
                            rng,
                        )
                    })
                    .collect();
                (te, gates)
            }
        };
        let towers = (0..num_tasks)
            .map(|_| {
                let mut dims = vec![expert_out];
                dims.extend_from_slice(tower_hidden);
                dims.push(1);
                Mlp::new(&dims, Activation::Relu, Activation::Linear, rng)
            })
            .collect();
        Backbone {
            kind,
            in_dim,
            expert_out,
            shared,
            task_experts,
            gates,
            towers,
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.towers.len()
    }

    /// Forward over `input = features ++ enhancement bundle`. Returns the
    /// task outputs and the tape for an exact backward pass.
    pub fn forward(&self, input: &[f64]) -> (TaskOutputs, BackboneTape) {
        assert_eq!(
            input.len(),
            self.in_dim,
            "backbone: input dim mismatch ({} vs {})",
            input.len(),
            self.in_dim
        );
        let mut expert_tapes = Vec::new();
        let mut expert_outs = Vec::new();
        for e in &self.shared {
            let (y, t) = e.forward_tape(input);
            expert_outs.push(y);
            expert_tapes.push(t);
        }
        for task in &self.task_experts {
            for e in task {
                let (y, t) = e.forward_tape(input);
                expert_outs.push(y);
                expert_tapes.push(t);
            }
        }

        let mut logits = Vec::with_capacity(self.num_tasks());
        let mut probs = Vec::with_capacity(self.num_tasks());
        let mut gate_tapes = Vec::new();
        let mut gate_weights = Vec::new();
        let mut tower_tapes = Vec::new();
        let mut mixes = Vec::new();

        for t in 0..self.num_tasks() {
            let visible = self.visible_experts(t);
            let weights = match self.kind {
                BackboneKind::SharedBottom => {
                    gate_tapes.push(None);
                    vec![1.0 / visible.len() as f64; visible.len()]
                }
                BackboneKind::PleLite => {
                    let (raw, tape) = self.gates[t].forward_tape(input);
                    gate_tapes.push(Some(tape));
                    softmax(&raw)
                }
            };
            let mut mix = vec![0.0; self.expert_out];
            for (w, &e) in weights.iter().zip(&visible) {
                crate::numeric::axpy(*w, &expert_outs[e], &mut mix);
            }
            let (out, tower_tape) = self.towers[t].forward_tape(&mix);
            let z = out[0];
            logits.push(z);
            probs.push(sigmoid(z));
            gate_weights.push(weights);
            tower_tapes.push(tower_tape);
            mixes.push(mix);
        }

        (
            TaskOutputs { logits, probs },
            BackboneTape {
                expert_tapes,
                expert_outs,
                gate_tapes,
                gate_weights,
                tower_tapes,
                mixes,
            },
        )
    }

    /// Canonical expert indices visible to task `t`: all shared experts then
    /// that task's own, in construction order.
    fn visible_experts(&self, t: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.shared.len()).collect();
        let mut base = self.shared.len();
        for (k, task) in self.task_experts.iter().enumerate() {
            if k == t {
                v.extend(base..base + task.len());
            }
            base += task.len();
        }
        v
    }

    fn expert_mut(&mut self, idx: usize) -> &mut Mlp {
        if idx < self.shared.len() {
            return &mut self.shared[idx];
        }
        let mut base = self.shared.len();
        for task in self.task_experts.iter_mut() {
            if idx < base + task.len() {
                return &mut task[idx - base];
            }
            base += task.len();
        }
        panic!("expert index {idx} out of range");
    }

    /// Backward from per-task logit gradients. Accumulates parameter
    /// gradients (scaled by `grad_scale`) and returns the gradient w.r.t.
    /// the input vector.
    pub fn backward(
        &mut self,
        tape: &BackboneTape,
        d_logits: &[f64],
        grad_scale: f64,
    ) -> Vec<f64> {
        assert_eq!(d_logits.len(), self.num_tasks(), "one gradient per task");
        let mut dx = vec![0.0; self.in_dim];
        let mut d_experts: Vec<Vec<f64>> =
            vec![vec![0.0; self.expert_out]; tape.expert_outs.len()];

        for t in 0..self.num_tasks() {
            let dz = d_logits[t] * grad_scale;
            if dz == 0.0 {
                continue;
            }
            let d_mix = self.towers[t].backward(&tape.tower_tapes[t], &[dz]);
            let visible = self.visible_experts(t);
            let weights = &tape.gate_weights[t];
            for (k, &e) in visible.iter().enumerate() {
                crate::numeric::axpy(weights[k], &d_mix, &mut d_experts[e]);
            }
            if let (BackboneKind::PleLite, Some(gate_tape)) =
                (self.kind, tape.gate_tapes[t].as_ref())
            {
                // d(weight_k) = expert_k . d_mix, then the softmax Jacobian.
                let dw: Vec<f64> = visible
                    .iter()
                    .map(|&e| dot(&tape.expert_outs[e], &d_mix))
                    .collect();
                let inner: f64 = weights.iter().zip(&dw).map(|(w, g)| w * g).sum();
                let d_raw: Vec<f64> = weights
                    .iter()
                    .zip(&dw)
                    .map(|(w, g)| w * (g - inner))
                    .collect();
                let dg = self.gates[t].backward(gate_tape, &d_raw);
                crate::numeric::axpy(1.0, &dg, &mut dx);
            }
        }

        for (e, d_out) in d_experts.iter().enumerate() {
            if d_out.iter().all(|&g| g == 0.0) {
                continue;
            }
            let de = self.expert_mut(e).backward(&tape.expert_tapes[e], d_out);
            crate::numeric::axpy(1.0, &de, &mut dx);
        }
        dx
    }

    pub fn zero_grads(&mut self) {
        for e in self
            .shared
            .iter_mut()
            .chain(self.task_experts.iter_mut().flatten())
            .chain(self.gates.iter_mut())
            .chain(self.towers.iter_mut())
        {
            e.zero_grads();
        }
    }

    pub fn apply(&mut self, opt: &Optimizer) {
        for e in self
            .shared
            .iter_mut()
            .chain(self.task_experts.iter_mut().flatten())
            .chain(self.gates.iter_mut())
            .chain(self.towers.iter_mut())
        {
            e.apply(opt);
        }
    }

    pub fn mlps(&self) -> Vec<&Mlp> {
        self.shared
            .iter()
            .chain(self.task_experts.iter().flatten())
            .chain(self.gates.iter())
            .chain(self.towers.iter())
            .collect()
    }

    /// A copy of this backbone reading only the first `new_in` input columns:
    /// first-layer weight columns beyond `new_in` are dropped from every
    /// expert and gate. Feeding it `x[..new_in]` reproduces this backbone on
    /// inputs whose tail columns are all zero, bit for bit.
    pub fn with_truncated_input(&self, new_in: usize) -> Backbone {
        assert!(new_in <= self.in_dim);
        let truncate = |m: &Mlp| -> Mlp {
            let mut layers = Vec::with_capacity(m.layers.len());
            for (k, layer) in m.layers.iter().enumerate() {
                if k == 0 {
                    let mut w = Vec::with_capacity(layer.out_dim * new_in);
                    for o in 0..layer.out_dim {
                        w.extend_from_slice(&layer.w[o * layer.in_dim..o * layer.in_dim + new_in]);
                    }
                    layers.push(crate::numeric::Layer::from_weights(
                        new_in,
                        layer.out_dim,
                        layer.act,
                        w,
                        layer.b.clone(),
                    ));
                } else {
                    layers.push(crate::numeric::Layer::from_weights(
                        layer.in_dim,
                        layer.out_dim,
                        layer.act,
                        layer.w.clone(),
                        layer.b.clone(),
                    ));
                }
            }
            Mlp { layers }
        };
        Backbone {
            kind: self.kind,
            in_dim: new_in,
            expert_out: self.expert_out,
            shared: self.shared.iter().map(truncate).collect(),
            task_experts: self
                .task_experts
                .iter()
                .map(|te| te.iter().map(truncate).collect())
                .collect(),
            gates: self.gates.iter().map(truncate).collect(),
            towers: self.towers.clone(),
        }
    }
}

/// Weighted sum of the task logits; the default weights are all one.
pub fn merge_score(outputs: &TaskOutputs, task_weights: &[f64]) -> f64 {
    assert_eq!(
        outputs.logits.len(),
        task_weights.len(),
        "merge_score: one weight per task"
    );
    outputs
        .logits
        .iter()
        .zip(task_weights)
        .map(|(z, w)| w * z)
        .sum()
}

/// Sum of per-task unweighted BCE losses and the per-task logit gradients.
pub fn mtl_loss(outputs: &TaskOutputs, labels: &[bool]) -> (f64, Vec<f64>) {
    assert_eq!(outputs.logits.len(), labels.len(), "one label per task");
    let mut total = 0.0;
    let mut d_logits = Vec::with_capacity(labels.len());
    for (z, &y) in outputs.logits.iter().zip(labels) {
        let (loss, dz) = bce_with_logit(*z, y, 1.0);
        total += loss;
        d_logits.push(dz);
    }
    (total, d_logits)
}

/// Total objective: ranking loss, auxiliary loss, and the six clustering
/// terms under their weights.
pub fn total_loss(
    l_mtl: f64,
    l_aux: f64,
    uie: (f64, f64),
    upbe: (f64, f64),
    uhse: (f64, f64),
    w: &ClusterLossWeights,
) -> f64 {
    l_mtl
        + l_aux
        + w.rho * (uie.0 + uie.1)
        + w.lambda * (upbe.0 + upbe.1)
        + w.eta * (uhse.0 + uhse.1)
}
