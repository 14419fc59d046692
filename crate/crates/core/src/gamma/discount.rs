use serde::{Deserialize, Serialize};

use super::losses::GammaLoss;
use super::net::GammaNet;
use super::settings::{GammaSettings, GammaVariant};
use super::uncertainty::UncertaintyGamma;
use crate::error::Result;
use crate::numerics::{clip_grad_norm, AdamState, Matrix, Rng};

/// Discount network with its optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedGamma {
    pub net: GammaNet,
    pub opt: AdamState,
    pub max_grad_norm: f64,
}

impl LearnedGamma {
    /// One clipped Adam step along `loss.grad`.
    pub fn apply(&mut self, loss: &GammaLoss) -> Result<()> {
        let mut g = loss.grad.clone();
        clip_grad_norm(&mut g, self.max_grad_norm);
        self.opt.step(self.net.net.params_mut(), &g)
    }
}

/// The discount a host algorithm plugs into its targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Discount {
    Fixed(f64),
    Learned(LearnedGamma),
    Uncertainty(UncertaintyGamma),
}

impl Discount {
    /// Build from settings; network initialization draws from `rng` only.
    pub fn build(settings: &GammaSettings, obs_dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(match settings.variant {
            GammaVariant::Fixed => Discount::Fixed(settings.fixed_gamma),
            GammaVariant::Uncertainty => Discount::Uncertainty(UncertaintyGamma::new(
                settings.uncertainty_beta,
                settings.uncertainty_lr,
                settings.uncertainty_eta,
                settings.gamma_min,
                settings.uncertainty_base,
            )?),
            GammaVariant::AdagammaRc | GammaVariant::CrossValidated | GammaVariant::NaiveTd => {
                let net = GammaNet::new(
                    obs_dim,
                    settings.hidden,
                    settings.gamma_min,
                    settings.gamma_max,
                    settings.boundary_margin,
                    settings.init_gamma,
                    rng,
                )?;
                let opt = AdamState::new(net.net.param_count(), settings.lr);
                Discount::Learned(LearnedGamma {
                    net,
                    opt,
                    max_grad_norm: settings.max_grad_norm,
                })
            }
        })
    }

    /// Per-state discounts for the variants that depend on the state alone.
    /// The disagreement rule needs host-specific scores and returns `None`.
    pub fn state_gammas(&self, states: &Matrix) -> Result<Option<Vec<f64>>> {
        match self {
            Discount::Fixed(g) => Ok(Some(vec![*g; states.rows()])),
            Discount::Learned(l) => l.net.gammas(states).map(Some),
            Discount::Uncertainty(_) => Ok(None),
        }
    }

    pub fn net(&self) -> Option<&GammaNet> {
        match self {
            Discount::Learned(l) => Some(&l.net),
            _ => None,
        }
    }
}
