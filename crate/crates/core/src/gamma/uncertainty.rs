use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, AdamState};

/// Heuristic baseline: `γ(d) = γ_max - (γ_max - γ_min) σ(η β d)` where `d` is
/// an ensemble-disagreement score and `β` is the only learnable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyGamma {
    pub beta: f64,
    pub eta: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    opt: AdamState,
}

impl UncertaintyGamma {
    pub fn new(beta: f64, lr: f64, eta: f64, gamma_min: f64, gamma_max: f64) -> Result<Self> {
        super::validate_bounds(gamma_min, gamma_max)?;
        Ok(Self {
            beta,
            eta,
            gamma_min,
            gamma_max,
            opt: AdamState::new(1, lr),
        })
    }

    pub fn gamma(&self, d: f64) -> f64 {
        let d = d.max(0.0);
        self.gamma_max - (self.gamma_max - self.gamma_min) * sigmoid(self.eta * self.beta * d)
    }

    /// `∂γ/∂β` at disagreement `d`.
    pub fn dgamma_dbeta(&self, d: f64) -> f64 {
        let d = d.max(0.0);
        let s = sigmoid(self.eta * self.beta * d);
        -(self.gamma_max - self.gamma_min) * s * (1.0 - s) * self.eta * d
    }

    /// Chain `dL/dγ_i` through the rule and take one Adam step on `β`.
    /// Returns the `β` gradient.
    pub fn step(&mut self, disagreements: &[f64], dloss_dgamma: &[f64]) -> Result<f64> {
        if disagreements.len() != dloss_dgamma.len() {
            return Err(Error::Shape {
                expected: disagreements.len(),
                got: dloss_dgamma.len(),
            });
        }
        let g: f64 = disagreements
            .iter()
            .zip(dloss_dgamma)
            .map(|(&d, &dl)| dl * self.dgamma_dbeta(d))
            .sum();
        let mut p = [self.beta];
        self.opt.step(&mut p, &[g])?;
        self.beta = p[0];
        Ok(g)
    }
}
