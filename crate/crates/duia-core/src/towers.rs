//! Auxiliary user/item two-tower model. Produces the fixed-length interest
//! vectors consumed by the clustering codebooks. Trained on the valid
//! consumption label with merge-score-weighted positives; its inputs are
//! detached embedding reads, so none of its gradient reaches the tables.

use rand::Rng;

use crate::numeric::{bce_with_logit, dot, sigmoid, Activation, Mlp, Tape};

#[derive(Debug, Clone)]
pub struct TwoTower {
    pub user: Mlp,
    pub item: Mlp,
    pub d: usize,
}

impl TwoTower {
    /// Both towers share the hidden-layer plan and output dimension `d`;
    /// hidden layers are relu, the output is linear.
    pub fn new(
        user_in: usize,
        item_in: usize,
        hidden: &[usize],
        d: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut user_dims = vec![user_in];
        user_dims.extend_from_slice(hidden);
        user_dims.push(d);
        let mut item_dims = vec![item_in];
        item_dims.extend_from_slice(hidden);
        item_dims.push(d);
        TwoTower {
            user: Mlp::new(&user_dims, Activation::Relu, Activation::Linear, rng),
            item: Mlp::new(&item_dims, Activation::Relu, Activation::Linear, rng),
            d,
        }
    }

    pub fn user_vector(&self, features: &[f64]) -> Vec<f64> {
        self.user.forward(features)
    }

    pub fn item_vector(&self, features: &[f64]) -> Vec<f64> {
        self.item.forward(features)
    }

    pub fn user_vector_tape(&self, features: &[f64]) -> (Vec<f64>, Tape) {
        self.user.forward_tape(features)
    }

    pub fn item_vector_tape(&self, features: &[f64]) -> (Vec<f64>, Tape) {
        self.item.forward_tape(features)
    }

    /// Loss of the auxiliary model on one sample and its backward pass into
    /// both towers (scaled by `grad_scale`). The prediction is
    /// `sigmoid(v_user . v_item)`; positives are weighted by
    /// `1 + sigmoid(merge_score)`, negatives by exactly 1. Returns the loss.
    #[allow(clippy::too_many_arguments)]
    pub fn aux_loss_backward(
        &mut self,
        user_tape: &Tape,
        item_tape: &Tape,
        v_user: &[f64],
        v_item: &[f64],
        label: bool,
        merge_score: f64,
        grad_scale: f64,
    ) -> f64 {
        let z = dot(v_user, v_item);
        let (loss, dz) = bce_with_logit(z, label, positive_weight(merge_score));
        let s = dz * grad_scale;
        let du: Vec<f64> = v_item.iter().map(|x| s * x).collect();
        let dv: Vec<f64> = v_user.iter().map(|x| s * x).collect();
        self.user.backward(user_tape, &du);
        self.item.backward(item_tape, &dv);
        loss
    }

    /// Loss only, without touching gradients (evaluation/reporting).
    pub fn aux_loss(v_user: &[f64], v_item: &[f64], label: bool, merge_score: f64) -> f64 {
        let z = dot(v_user, v_item);
        bce_with_logit(z, label, positive_weight(merge_score)).0
    }
}

/// Positive-sample weight `1 + sigmoid(merge_score)`, always in (1, 2).
pub fn positive_weight(merge_score: f64) -> f64 {
    1.0 + sigmoid(merge_score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tower() -> TwoTower {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        TwoTower::new(6, 5, &[8], 4, &mut rng)
    }

    #[test]
    fn deterministic_outputs() {
        let t = tower();
        let x = [0.1, -0.2, 0.3, 0.0, 0.5, -0.4];
        assert_eq!(t.user_vector(&x), t.user_vector(&x));
        let xi = [0.4, 0.1, -0.6, 0.2, 0.9];
        assert_eq!(t.item_vector(&xi), t.item_vector(&xi));
    }

    #[test]
    fn zeroed_tower_maps_everything_to_zero() {
        let mut t = tower();
        for layer in t.user.layers.iter_mut() {
            layer.w.iter_mut().for_each(|w| *w = 0.0);
            layer.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let y = t.user_vector(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positive_weight_fixed_points() {
        assert_eq!(positive_weight(0.0), 1.5);
        assert!((positive_weight(3f64.ln()) - 1.75).abs() < 1e-12);
        assert!((positive_weight(500.0) - 2.0).abs() < 1e-12);
        assert!((positive_weight(-500.0) - 1.0).abs() < 1e-12);
        let w = positive_weight(1.3);
        assert!(w > 1.0 && w < 2.0);
    }

    #[test]
    fn aux_loss_worked_examples() {
        // Orthogonal vectors: prediction 0.5.
        let u = [1.0, 0.0, 0.0, 0.0];
        let v = [0.0, 1.0, 0.0, 0.0];
        let ln2 = std::f64::consts::LN_2;
        assert!((TwoTower::aux_loss(&u, &v, true, 0.0) - 1.5 * ln2).abs() < 1e-12);
        assert!((TwoTower::aux_loss(&u, &v, false, 0.0) - ln2).abs() < 1e-12);
        // Negatives ignore the merge score entirely.
        assert_eq!(
            TwoTower::aux_loss(&u, &v, false, -3.0),
            TwoTower::aux_loss(&u, &v, false, 42.0)
        );
    }

    #[test]
    fn prediction_symmetric_in_towers() {
        let u = [0.3, -0.7, 0.2, 0.9];
        let v = [-0.1, 0.4, 0.8, -0.5];
        assert_eq!(
            sigmoid(dot(&u, &v)),
            sigmoid(dot(&v, &u)),
        );
    }

    #[test]
    fn aux_gradients_match_finite_differences() {
        let mut checked = 0;
        let mut seed = 100u64;
        while checked < 10 {
            seed += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = TwoTower::new(4, 4, &[6], 3, &mut rng);
            let xu: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xi: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (u, ut) = t.user_vector_tape(&xu);
            let (v, it) = t.item_vector_tape(&xi);
            if ut.pres.iter().chain(it.pres.iter()).flatten().any(|z| z.abs() < 1e-3) {
                continue;
            }
            t.user.zero_grads();
            t.item.zero_grads();
            t.aux_loss_backward(&ut, &it, &u, &v, true, 0.3, 1.0);
            let analytic: Vec<f64> = t
                .user
                .flat_grads()
                .into_iter()
                .chain(t.item.flat_grads())
                .collect();

            let base: Vec<f64> = t
                .user
                .flat_params()
                .into_iter()
                .chain(t.item.flat_params())
                .collect();
            let split = t.user.param_count();
            let probe_net = t.clone();
            let fd = finite_diff_grad(
                |p| {
                    let mut net = probe_net.clone();
                    net.user.set_flat_params(&p[..split]);
                    net.item.set_flat_params(&p[split..]);
                    let u = net.user_vector(&xu);
                    let v = net.item_vector(&xi);
                    TwoTower::aux_loss(&u, &v, true, 0.3)
                },
                &base,
                1e-5,
            );
            let num: f64 = analytic
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = fd.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            assert!(num / den < 1e-4, "seed {seed}: rel err {}", num / den);
            checked += 1;
        }
    }
}
