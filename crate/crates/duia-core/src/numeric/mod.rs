//! Minimal dense numeric kernel: vector ops, MLPs with analytic
//! forward/backward, losses, optimizers, and a finite-difference checker.
//!
//! Everything is 64-bit. The hot-path functions treat shape mismatches as
//! programmer error and panic via `assert!`; fallible boundaries (config,
//! data, snapshots) live elsewhere and return typed errors.

mod fd;
mod loss;
mod mlp;
mod optim;

pub use fd::finite_diff_grad;
pub use loss::bce_with_logit;
pub use mlp::{Activation, Layer, Mlp, Tape};
pub use optim::{OptKind, Optimizer};

/// Numerically stable logistic function. Saturates to 0/1 at the extremes
/// without producing NaN.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Dot product with a fixed summation order (4 lanes, then tail), so results
/// are reproducible across runs and platforms.
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(
        u.len(),
        v.len(),
        "dot: length mismatch ({} vs {})",
        u.len(),
        v.len()
    );
    let n4 = u.len() & !3;
    let mut acc = [0.0f64; 4];
    let mut k = 0;
    while k < n4 {
        acc[0] += u[k] * v[k];
        acc[1] += u[k + 1] * v[k + 1];
        acc[2] += u[k + 2] * v[k + 2];
        acc[3] += u[k + 3] * v[k + 3];
        k += 4;
    }
    let mut tail = 0.0;
    while k < u.len() {
        tail += u[k] * v[k];
        k += 1;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a * x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(
        x.len(),
        y.len(),
        "axpy: length mismatch ({} vs {})",
        x.len(),
        y.len()
    );
    for (yk, xk) in y.iter_mut().zip(x) {
        *yk += a * xk;
    }
}

/// Squared Euclidean distance.
pub fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(
        u.len(),
        v.len(),
        "sq_dist: length mismatch ({} vs {})",
        u.len(),
        v.len()
    );
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}
