//! Dense feed-forward networks with explicit tapes for exact reverse-mode
//! gradients. Weights are row-major `(out, in)`; gradients and Adam moment
//! buffers live next to the parameters they belong to.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::Optimizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => super::sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    fn grad(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = super::sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Linear => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Linear => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }
}

/// One dense layer. `w` is `out_dim x in_dim` row-major. Gradient buffers
/// (`gw`, `gb`) accumulate across a batch until the optimizer applies and
/// clears them; `mw/vw/mb/vb` are the Adam moment slots.
#[derive(Debug, Clone)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub act: Activation,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub gw: Vec<f64>,
    pub gb: Vec<f64>,
    pub mw: Vec<f64>,
    pub vw: Vec<f64>,
    pub mb: Vec<f64>,
    pub vb: Vec<f64>,
}

impl Layer {
    pub fn new(in_dim: usize, out_dim: usize, act: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self::from_weights(in_dim, out_dim, act, w, vec![0.0; out_dim])
    }

    pub fn from_weights(
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        w: Vec<f64>,
        b: Vec<f64>,
    ) -> Self {
        assert_eq!(w.len(), in_dim * out_dim);
        assert_eq!(b.len(), out_dim);
        Layer {
            in_dim,
            out_dim,
            act,
            w,
            b,
            gw: vec![0.0; in_dim * out_dim],
            gb: vec![0.0; out_dim],
            mw: vec![0.0; in_dim * out_dim],
            vw: vec![0.0; in_dim * out_dim],
            mb: vec![0.0; out_dim],
            vb: vec![0.0; out_dim],
        }
    }
}

/// Activation cache from one forward pass: the input to each layer plus each
/// layer's pre-activation. Sufficient for an exact backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub inputs: Vec<Vec<f64>>,
    pub pres: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Builds `dims[0] -> dims[1] -> ... -> dims.last()` with `hidden` on all
    /// layers but the last, which uses `output`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, pair)| {
                let act = if k == last { output } else { hidden };
                Layer::new(pair[0], pair[1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Zeroes the final layer's weights and biases so the net starts as the
    /// constant-zero function while earlier layers keep their random init.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("mlp has layers");
        last.w.iter_mut().for_each(|x| *x = 0.0);
        last.b.iter_mut().for_each(|x| *x = 0.0);
    }

    fn layer_forward(layer: &Layer, x: &[f64], pre: &mut Vec<f64>) {
        assert_eq!(
            x.len(),
            layer.in_dim,
            "mlp: input dim mismatch ({} vs {})",
            x.len(),
            layer.in_dim
        );
        pre.clear();
        for o in 0..layer.out_dim {
            let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            pre.push(super::dot(row, x) + layer.b[o]);
        }
    }

    /// Forward pass without a tape (inference).
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut pre = Vec::new();
        for layer in &self.layers {
            Self::layer_forward(layer, &cur, &mut pre);
            cur.clear();
            cur.extend(pre.iter().map(|&z| layer.act.apply(z)));
        }
        cur
    }

    /// Forward pass returning the output and the activation cache needed for
    /// an exact backward pass.
    pub fn forward_tape(&self, x: &[f64]) -> (Vec<f64>, Tape) {
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.layers.len()),
            pres: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut pre = Vec::with_capacity(layer.out_dim);
            Self::layer_forward(layer, &cur, &mut pre);
            let next = pre.iter().map(|&z| layer.act.apply(z)).collect();
            tape.inputs.push(cur);
            tape.pres.push(pre);
            cur = next;
        }
        (cur, tape)
    }

    /// Reverse-mode pass for the scalar `y . dy`. Accumulates parameter
    /// gradients into `gw`/`gb` and returns the gradient w.r.t. the input.
    /// The tape must come from a matching `forward_tape` on this network.
    pub fn backward(&mut self, tape: &Tape, dy: &[f64]) -> Vec<f64> {
        assert_eq!(
            tape.inputs.len(),
            self.layers.len(),
            "mlp: stale tape ({} layers vs {})",
            tape.inputs.len(),
            self.layers.len()
        );
        assert_eq!(
            dy.len(),
            self.out_dim(),
            "mlp: dy dim mismatch ({} vs {})",
            dy.len(),
            self.out_dim()
        );
        let mut delta = dy.to_vec();
        for (k, layer) in self.layers.iter_mut().enumerate().rev() {
            let input = &tape.inputs[k];
            let pre = &tape.pres[k];
            assert_eq!(
                input.len(),
                layer.in_dim,
                "mlp: stale tape at layer {k} ({} vs {})",
                input.len(),
                layer.in_dim
            );
            // dz = delta * act'(pre)
            let mut dz = delta;
            for (d, &z) in dz.iter_mut().zip(pre) {
                *d *= layer.act.grad(z);
            }
            let mut dx = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let g = dz[o];
                layer.gb[o] += g;
                let row_w = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                let row_g = &mut layer.gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    row_g[i] += g * input[i];
                    dx[i] += g * row_w[i];
                }
            }
            delta = dx;
        }
        delta
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.gw.iter_mut().for_each(|g| *g = 0.0);
            layer.gb.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn apply(&mut self, opt: &Optimizer) {
        for layer in &mut self.layers {
            opt.apply(&mut layer.w, &layer.gw, &mut layer.mw, &mut layer.vw);
            opt.apply(&mut layer.b, &layer.gb, &mut layer.mb, &mut layer.vb);
            layer.gw.iter_mut().for_each(|g| *g = 0.0);
            layer.gb.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Flattens all parameters (layer by layer, weights then bias). Used by
    /// gradient checks and the snapshot writer.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat param size mismatch");
        let mut at = 0;
        for layer in &mut self.layers {
            layer.w.copy_from_slice(&flat[at..at + layer.w.len()]);
            at += layer.w.len();
            layer.b.copy_from_slice(&flat[at..at + layer.b.len()]);
            at += layer.b.len();
        }
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.gw);
            out.extend_from_slice(&layer.gb);
        }
        out
    }
}
