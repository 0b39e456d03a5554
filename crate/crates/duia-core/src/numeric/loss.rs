//! Binary cross-entropy computed from the logit in log-space, so saturated
//! predictions never produce `ln(0)`.

use super::{sigmoid, softplus};

/// Weighted BCE on a single logit. The positive term is scaled by `w_pos`;
/// negatives always carry weight 1. Returns `(loss, dloss/dlogit)`.
///
/// `-ln sigmoid(z) = softplus(-z)` and `-ln(1 - sigmoid(z)) = softplus(z)`.
pub fn bce_with_logit(logit: f64, label: bool, w_pos: f64) -> (f64, f64) {
    debug_assert!(w_pos >= 0.0, "positive weight must be non-negative");
    if label {
        (w_pos * softplus(-logit), w_pos * (sigmoid(logit) - 1.0))
    } else {
        (softplus(logit), sigmoid(logit))
    }
}
