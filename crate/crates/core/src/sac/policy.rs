use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{softplus, ForwardCache, Matrix, Mlp, Rng};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Gaussian in pre-squash space followed by `tanh`, so actions lie in
/// `(-1, 1)`. The network outputs the mean and the log-std per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquashedGaussian {
    pub net: Mlp,
    act_dim: usize,
}

/// Everything needed to back-propagate through a reparameterized sample.
#[derive(Debug, Clone)]
pub struct PolicyTape {
    cache: ForwardCache,
    noise: Matrix,
    std: Matrix,
    actions: Matrix,
    /// Whether the raw log-std was inside the clamp range.
    live_log_std: Vec<bool>,
}

/// `ln(1 - tanh(u)²)` computed without cancellation.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

impl SquashedGaussian {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            net: Mlp::new(&[obs_dim, hidden, hidden, 2 * act_dim], rng),
            act_dim,
        }
    }

    pub fn from_mlp(net: Mlp) -> Self {
        let act_dim = net.output_dim() / 2;
        Self { net, act_dim }
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// `tanh(mean)` for every row.
    pub fn deterministic(&self, states: &Matrix) -> Result<Matrix> {
        let out = self.net.forward_batch(states)?;
        let mut data = Vec::with_capacity(states.rows() * self.act_dim);
        for r in 0..out.rows() {
            data.extend(out.row(r)[..self.act_dim].iter().map(|m| m.tanh()));
        }
        Matrix::from_vec(states.rows(), self.act_dim, data)
    }

    pub fn noise(&self, rows: usize, rng: &mut Rng) -> Matrix {
        let mut m = Matrix::zeros(rows, self.act_dim);
        rng.fill_normal(m.as_mut_slice());
        m
    }

    /// Sample actions and log-densities with freshly drawn noise.
    pub fn sample(&self, states: &Matrix, rng: &mut Rng) -> Result<(Matrix, Vec<f64>)> {
        let noise = self.noise(states.rows(), rng);
        let (a, lp, _) = self.sample_with_noise(states, &noise)?;
        Ok((a, lp))
    }

    /// Reparameterized sample `a = tanh(μ + σ ε)` for the given noise, with
    /// the log-density of `a` including the `tanh` change of variables.
    pub fn sample_with_noise(&self, states: &Matrix, noise: &Matrix) -> Result<(Matrix, Vec<f64>, PolicyTape)> {
        let (out, cache) = self.net.forward_batch_cached(states)?;
        let (n, d) = (states.rows(), self.act_dim);
        let mut actions = Matrix::zeros(n, d);
        let mut std = Matrix::zeros(n, d);
        let mut live = Vec::with_capacity(n * d);
        let mut log_probs = vec![0.0; n];
        for r in 0..n {
            let row = out.row(r);
            for j in 0..d {
                let raw = row[d + j];
                live.push((LOG_STD_MIN..=LOG_STD_MAX).contains(&raw));
                let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let s = ls.exp();
                let e = noise[(r, j)];
                let u = row[j] + s * e;
                actions[(r, j)] = u.tanh();
                std[(r, j)] = s;
                log_probs[r] += -0.5 * e * e - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
            }
        }
        let tape = PolicyTape {
            cache,
            noise: noise.clone(),
            std,
            actions: actions.clone(),
            live_log_std: live,
        };
        Ok((actions, log_probs, tape))
    }

    /// Parameter gradient of a loss given `dL/da` (one row per sample) and
    /// `dL/d log π` per sample, holding the noise fixed.
    pub fn backward(&self, tape: &PolicyTape, d_action: &Matrix, d_logp: &[f64]) -> Result<Vec<f64>> {
        let (n, d) = (tape.actions.rows(), self.act_dim);
        let mut up = Matrix::zeros(n, 2 * d);
        for r in 0..n {
            for j in 0..d {
                let a = tape.actions[(r, j)];
                // d log π / du = 2a from the -ln(1 - a²) term
                let du = d_action[(r, j)] * (1.0 - a * a) + d_logp[r] * 2.0 * a;
                up[(r, j)] = du;
                up[(r, d + j)] = if tape.live_log_std[r * d + j] {
                    du * tape.std[(r, j)] * tape.noise[(r, j)] - d_logp[r]
                } else {
                    0.0
                };
            }
        }
        Ok(self.net.backward(&tape.cache, &up)?.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    #[test]
    fn stable_log_term_matches_naive() {
        for u in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            let naive = (1.0 - f64::tanh(u).powi(2)).ln();
            assert!((log_one_minus_tanh_sq(u) - naive).abs() < 1e-12);
        }
        assert!(log_one_minus_tanh_sq(50.0).is_finite());
    }

    #[test]
    fn log_prob_matches_change_of_variables() {
        // zero network: μ = 0, log σ = 0
        let pol = SquashedGaussian::from_mlp(Mlp::zeros(&[2, 4, 4, 2]));
        let s = Matrix::from_rows(&[[0.1, 0.2]]);
        let e = Matrix::from_rows(&[[0.3]]);
        let (a, lp, _) = pol.sample_with_noise(&s, &e).unwrap();
        let u: f64 = 0.3;
        assert!((a[(0, 0)] - u.tanh()).abs() < 1e-15);
        let normal = -0.5 * u * u - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let want = normal - (1.0 - u.tanh().powi(2)).ln();
        assert!((lp[0] - want).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let pol = SquashedGaussian::new(3, 2, 8, &mut rng);
        let states = Matrix::from_rows(&[[0.2, -0.4, 1.0], [0.9, 0.1, -0.3], [-1.0, 0.5, 0.0]]);
        let noise = pol.noise(3, &mut rng);
        let wa = [0.7, -1.3];
        let wl = 0.4;
        // L = Σ_r Σ_j wa_j a_rj + wl Σ_r log π_r
        let loss = |p: &[f64]| {
            let mut q = pol.clone();
            q.net.set_params(p).unwrap();
            let (a, lp, _) = q.sample_with_noise(&states, &noise).unwrap();
            let mut l = 0.0;
            for r in 0..3 {
                l += wa[0] * a[(r, 0)] + wa[1] * a[(r, 1)] + wl * lp[r];
            }
            l
        };
        let (_, _, tape) = pol.sample_with_noise(&states, &noise).unwrap();
        let da = Matrix::from_rows(&[wa, wa, wa]);
        let g = pol.backward(&tape, &da, &[wl; 3]).unwrap();
        let err = grad_check(loss, pol.net.params(), &g, 1e-6);
        assert!(err < 1e-4, "err = {err}");
    }
}
