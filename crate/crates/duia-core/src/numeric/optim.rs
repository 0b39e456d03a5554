//! SGD and Adam. One `Optimizer` is shared across all parameter groups; the
//! moment buffers live with their parameters and are passed in per tensor.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Shared step counter; incremented once per optimization step via
    /// `begin_step`, before any `apply` calls of that step.
    pub step: u64,
}

impl Optimizer {
    pub fn new(kind: OptKind, lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptKind::Adam, lr)
    }

    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Updates `p` in place from gradients `g` using moment slots `m`/`v`
    /// (ignored for SGD). Call `begin_step` once per optimization step first.
    pub fn apply(&self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        assert_eq!(p.len(), g.len(), "optimizer: shape mismatch");
        match self.kind {
            OptKind::Sgd => {
                for (pk, gk) in p.iter_mut().zip(g) {
                    *pk -= self.lr * gk;
                }
            }
            OptKind::Adam => {
                assert_eq!(p.len(), m.len(), "optimizer: moment shape mismatch");
                assert_eq!(p.len(), v.len(), "optimizer: moment shape mismatch");
                debug_assert!(self.step > 0, "begin_step before apply");
                let bc1 = 1.0 - self.beta1.powi(self.step as i32);
                let bc2 = 1.0 - self.beta2.powi(self.step as i32);
                for k in 0..p.len() {
                    let g_k = g[k];
                    m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g_k;
                    v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g_k * g_k;
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    p[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
    }

    /// Convenience for standalone single-tensor use: one full optimization
    /// step (counter increment plus update).
    pub fn apply_once(&mut self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        self.begin_step();
        self.apply(p, g, m, v);
    }

    /// Row-sparse update for tables: only `rows` are touched. Rows never
    /// visited keep exactly their previous bytes.
    pub fn apply_rows(
        &self,
        dim: usize,
        rows: &[u32],
        p: &mut [f64],
        g: &mut [f64],
        m: &mut [f64],
        v: &mut [f64],
    ) {
        for &r in rows {
            let at = r as usize * dim;
            let span = at..at + dim;
            // Reuse `apply` on the row slice, then clear its gradient.
            let (pr, gr) = (&mut p[span.clone()], &mut g[span.clone()]);
            match self.kind {
                OptKind::Sgd => {
                    for (pk, gk) in pr.iter_mut().zip(gr.iter()) {
                        *pk -= self.lr * gk;
                    }
                }
                OptKind::Adam => {
                    let bc1 = 1.0 - self.beta1.powi(self.step as i32);
                    let bc2 = 1.0 - self.beta2.powi(self.step as i32);
                    let (mr, vr) = (&mut m[span.clone()], &mut v[span.clone()]);
                    for k in 0..dim {
                        let g_k = gr[k];
                        mr[k] = self.beta1 * mr[k] + (1.0 - self.beta1) * g_k;
                        vr[k] = self.beta2 * vr[k] + (1.0 - self.beta2) * g_k * g_k;
                        p[at + k] -= self.lr * (mr[k] / bc1) / ((vr[k] / bc2).sqrt() + self.eps);
                    }
                }
            }
            g[span].iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut opt = Optimizer::sgd(0.1);
        let mut p = [1.0];
        opt.apply_once(&mut p, &[2.0], &mut [], &mut []);
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut opt = Optimizer::adam(0.001);
        let mut p = [1.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        opt.apply_once(&mut p, &[1.0], &mut m, &mut v);
        // After one step both bias-corrected moments are exactly 1, so the
        // update is lr / (1 + eps).
        let want = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut sgd = Optimizer::sgd(0.5);
        let mut adam = Optimizer::adam(0.5);
        let mut p1 = [3.25, -1.5];
        let mut p2 = p1;
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        sgd.apply_once(&mut p1, &[0.0, 0.0], &mut [], &mut []);
        adam.apply_once(&mut p2, &[0.0, 0.0], &mut m, &mut v);
        assert_eq!(p1, [3.25, -1.5]);
        assert_eq!(p2, [3.25, -1.5]);
    }

    #[test]
    fn step_counter_increases() {
        let mut opt = Optimizer::adam(0.01);
        assert_eq!(opt.step, 0);
        opt.apply_once(&mut [0.0], &[0.1], &mut [0.0], &mut [0.0]);
        opt.apply_once(&mut [0.0], &[0.1], &mut [0.0], &mut [0.0]);
        assert_eq!(opt.step, 2);
    }

    #[test]
    fn sparse_rows_leave_other_rows_untouched() {
        let opt = {
            let mut o = Optimizer::adam(0.1);
            o.begin_step();
            o
        };
        let dim = 2;
        let mut p = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut g = vec![0.0, 0.0, 0.5, -0.5, 0.0, 0.0];
        let mut m = vec![0.0; 6];
        let mut v = vec![0.0; 6];
        let before = p.clone();
        opt.apply_rows(dim, &[1], &mut p, &mut g, &mut m, &mut v);
        assert_eq!(&p[0..2], &before[0..2]);
        assert_eq!(&p[4..6], &before[4..6]);
        assert!(p[2] != before[2] && p[3] != before[3]);
        assert!(g.iter().all(|&x| x == 0.0));
    }
}
