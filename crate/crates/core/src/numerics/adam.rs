use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam state for one flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update in place. Non-finite gradients leave both the
    /// parameters and the state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                got: params.len(),
            });
        }
        if grads.len() != params.len() {
            return Err(Error::Shape {
                expected: params.len(),
                got: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescale `grads` so their L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = l2_norm(grads);
    if norm.is_finite() && norm > max_norm && max_norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut opt = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let lr = 1e-2;
        let mut opt = AdamState::new(2, lr);
        let mut p = vec![0.0, 0.0];
        let mut prev = p.clone();
        for _ in 0..200 {
            opt.step(&mut p, &[3.0, -0.5]).unwrap();
            assert!(p[0] < prev[0] && p[1] > prev[1]);
            assert!((p[0] - prev[0]).abs() <= lr * 1.0001);
            assert!((p[1] - prev[1]).abs() <= lr * 1.0001);
            prev = p.clone();
        }
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let grads: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos()])
            .collect();
        let run = || {
            let mut opt = AdamState::new(2, 3e-4);
            let mut p = vec![0.1, 0.2];
            for g in &grads {
                opt.step(&mut p, g).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let mut opt = AdamState::new(2, 1e-3);
        let mut p = vec![1.0, 1.0];
        let before = opt.clone();
        let err = opt.step(&mut p, &[f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(opt, before);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut g = vec![3.0, 4.0];
        let n = clip_grad_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        assert!((l2_norm(&g) - 1.0).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }
}
