//! Dense-math substrate: matrices, a small MLP with analytic gradients,
//! Adam, seeded randomness and finite-difference checks.

mod adam;
mod gradcheck;
mod matrix;
mod mlp;
mod rng;

pub use adam::{clip_grad_norm, l2_norm, AdamState};
pub use gradcheck::{grad_check, numeric_gradient, RELATIVE_ERROR_FLOOR};
pub use matrix::{solve_linear, Matrix, PIVOT_TOLERANCE};
pub use mlp::{Activation, ForwardCache, Mlp, MlpGrad};
pub use rng::Rng;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_pop(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}
