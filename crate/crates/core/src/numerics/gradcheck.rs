//! Central finite-difference gradient verification.

/// Denominator floor for the relative error, so vanishing gradients are
/// compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Worst relative error between `analytic` and a central-difference estimate
/// of the gradient of `f` at `params`.
///
/// The relative error of component `i` is `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut x = params.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

/// Central-difference gradient of `f` at `params`.
pub fn numeric_gradient<F>(mut f: F, params: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = params.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}
