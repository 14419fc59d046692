use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{logit, sigmoid, ForwardCache, Matrix, Mlp, Rng};

/// Bounded state-conditioned discount `γ(s) = γ_min + (γ_max - γ_min) σ(g(s))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaNet {
    pub net: Mlp,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Margin `ε_b` used by the boundary penalty.
    pub boundary_margin: f64,
}

/// Forward state kept for the gradient of a loss written in terms of `γ`.
#[derive(Debug, Clone)]
pub struct GammaTape {
    cache: ForwardCache,
    sig: Vec<f64>,
}

pub fn validate_bounds(gamma_min: f64, gamma_max: f64) -> Result<()> {
    if !(0.0 <= gamma_min && gamma_min <= gamma_max && gamma_max < 1.0) {
        return Err(Error::InvalidRange {
            name: "gamma bounds",
            reason: format!("need 0 <= gamma_min <= gamma_max < 1, got [{gamma_min}, {gamma_max}]"),
        });
    }
    Ok(())
}

impl GammaNet {
    /// Network `[obs, hidden, hidden, 1]` whose output starts out constant at
    /// `init_gamma` (clamped into the open bounds): the output layer weights
    /// are zero and its bias is the matching logit.
    pub fn new(
        obs_dim: usize,
        hidden: usize,
        gamma_min: f64,
        gamma_max: f64,
        boundary_margin: f64,
        init_gamma: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        validate_bounds(gamma_min, gamma_max)?;
        let mut net = Mlp::new(&[obs_dim, hidden, hidden, 1], rng);
        let last = net.num_layers() - 1;
        net.weights_mut(last).iter_mut().for_each(|w| *w = 0.0);
        net.bias_mut(last)[0] = Self::init_logit(gamma_min, gamma_max, init_gamma);
        Ok(Self {
            net,
            gamma_min,
            gamma_max,
            boundary_margin,
        })
    }

    /// Wrap an existing logit network.
    pub fn from_mlp(net: Mlp, gamma_min: f64, gamma_max: f64, boundary_margin: f64) -> Result<Self> {
        validate_bounds(gamma_min, gamma_max)?;
        if net.output_dim() != 1 {
            return Err(Error::Shape {
                expected: 1,
                got: net.output_dim(),
            });
        }
        Ok(Self {
            net,
            gamma_min,
            gamma_max,
            boundary_margin,
        })
    }

    fn init_logit(gamma_min: f64, gamma_max: f64, init_gamma: f64) -> f64 {
        let width = gamma_max - gamma_min;
        if width <= 0.0 {
            return 0.0;
        }
        let frac = ((init_gamma - gamma_min) / width).clamp(1e-3, 1.0 - 1e-3);
        logit(frac)
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn squash(&self, logit: f64) -> (f64, f64) {
        let s = sigmoid(logit);
        (self.gamma_min + (self.gamma_max - self.gamma_min) * s, s)
    }

    pub fn gamma_of(&self, state: &[f64]) -> Result<f64> {
        let g = self.net.forward(state)?;
        Ok(self.squash(g[0]).0)
    }

    /// Discounts for every row of `states`.
    pub fn gammas(&self, states: &Matrix) -> Result<Vec<f64>> {
        let logits = self.net.forward_batch(states)?;
        Ok(logits.as_slice().iter().map(|&g| self.squash(g).0).collect())
    }

    pub fn gammas_taped(&self, states: &Matrix) -> Result<(Vec<f64>, GammaTape)> {
        let (logits, cache) = self.net.forward_batch_cached(states)?;
        let (gammas, sig) = logits.as_slice().iter().map(|&g| self.squash(g)).unzip();
        Ok((gammas, GammaTape { cache, sig }))
    }

    /// Parameter gradient given `dL/dγ_i` for each taped row.
    pub fn param_grad(&self, tape: &GammaTape, dgamma: &[f64]) -> Result<Vec<f64>> {
        let width = self.gamma_max - self.gamma_min;
        let dlogit: Vec<f64> = dgamma
            .iter()
            .zip(&tape.sig)
            .map(|(d, s)| d * width * s * (1.0 - s))
            .collect();
        let up = Matrix::from_vec(dlogit.len(), 1, dlogit)?;
        Ok(self.net.backward(&tape.cache, &up)?.params)
    }
}
