use serde::{Deserialize, Serialize};

use super::losses::{GammaLossWeights, GammaTarget};
use super::net::validate_bounds;
use crate::error::{Error, Result};

/// Which discount a training run uses and how it is learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaVariant {
    /// Learned `γ(s)` trained by return consistency plus regularizers.
    AdagammaRc,
    /// Learned `γ(s)` trained on held-out TD errors after a value step.
    CrossValidated,
    /// Disagreement rule with a single learnable scale.
    Uncertainty,
    /// Learned `γ(s)` trained directly on squared TD errors.
    NaiveTd,
    /// Constant discount.
    Fixed,
}

impl GammaVariant {
    pub fn has_network(self) -> bool {
        matches!(self, Self::AdagammaRc | Self::CrossValidated | Self::NaiveTd)
    }
}

/// Fully resolved discount settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSettings {
    pub variant: GammaVariant,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub boundary_margin: f64,
    pub weights: GammaLossWeights,
    pub rc_horizon: usize,
    pub lr: f64,
    pub hidden: usize,
    /// Initial output of the discount network.
    pub init_gamma: f64,
    /// SAC: environment steps between gamma updates.
    pub update_freq: usize,
    /// Gamma training starts after this many steps (SAC) or episodes (PPO).
    pub warmup: usize,
    pub batch_size: usize,
    /// PPO: passes over the rollout windows per gamma update.
    pub epochs: usize,
    pub max_grad_norm: f64,
    pub ref_init: f64,
    pub ref_tau: f64,
    /// Episodes (SAC) or updates (PPO) between reference updates.
    pub ref_period: u64,
    pub ref_adaptive: bool,
    pub fixed_gamma: f64,
    pub uncertainty_beta: f64,
    pub uncertainty_lr: f64,
    pub uncertainty_eta: f64,
    /// Upper end of the disagreement rule.
    pub uncertainty_base: f64,
}

impl GammaSettings {
    pub fn sac_defaults() -> Self {
        Self {
            variant: GammaVariant::AdagammaRc,
            gamma_min: 0.9,
            gamma_max: 0.999,
            boundary_margin: 0.005,
            weights: GammaLossWeights {
                rc: 1.0,
                dev: 0.005,
                var: 0.012,
                bound: 0.05,
                target: GammaTarget::Reference,
            },
            rc_horizon: 5,
            lr: 1e-4,
            hidden: 256,
            init_gamma: 0.98,
            update_freq: 20,
            warmup: 100_000,
            batch_size: 256,
            epochs: 1,
            max_grad_norm: 1.0,
            ref_init: 0.98,
            ref_tau: 0.1,
            ref_period: 5,
            ref_adaptive: true,
            fixed_gamma: 0.99,
            uncertainty_beta: 2.0,
            uncertainty_lr: 1e-3,
            uncertainty_eta: 1.0,
            uncertainty_base: 0.99,
        }
    }

    pub fn ppo_defaults() -> Self {
        Self {
            weights: GammaLossWeights {
                rc: 1.0,
                dev: 0.01,
                var: 0.005,
                bound: 0.05,
                target: GammaTarget::Reference,
            },
            rc_horizon: 10,
            lr: 3e-4,
            init_gamma: 0.99,
            update_freq: 1,
            warmup: 200,
            batch_size: 256,
            max_grad_norm: 0.5,
            ref_init: 0.99,
            ref_period: 1,
            ..Self::sac_defaults()
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_bounds(self.gamma_min, self.gamma_max)
            .map_err(|e| Error::config("gamma.gamma_min/gamma_max", e.to_string()))?;
        self.weights.validate()?;
        let unit = |key: &str, v: f64| -> Result<()> {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(
                    format!("gamma.{key}"),
                    format!("must lie in [0, 1), got {v}"),
                ));
            }
            Ok(())
        };
        unit("fixed_gamma", self.fixed_gamma)?;
        unit("ref_init", self.ref_init)?;
        unit("init_gamma", self.init_gamma)?;
        unit("uncertainty_base", self.uncertainty_base)?;
        if !(0.0..=1.0).contains(&self.ref_tau) {
            return Err(Error::config(
                "gamma.ref_tau",
                format!("must lie in [0, 1], got {}", self.ref_tau),
            ));
        }
        if self.variant == GammaVariant::Uncertainty && self.uncertainty_base < self.gamma_min {
            return Err(Error::config("gamma.uncertainty_base", "must be >= gamma_min"));
        }
        if !(self.boundary_margin >= 0.0) {
            return Err(Error::config("gamma.boundary_margin", "must be >= 0"));
        }
        for (key, v) in [
            ("rc_horizon", self.rc_horizon),
            ("hidden", self.hidden),
            ("update_freq", self.update_freq),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(Error::config(format!("gamma.{key}"), "must be >= 1"));
            }
        }
        if self.ref_period == 0 {
            return Err(Error::config("gamma.ref_period", "must be >= 1"));
        }
        for (key, v) in [
            ("lr", self.lr),
            ("uncertainty_lr", self.uncertainty_lr),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(
                    format!("gamma.{key}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        Ok(())
    }
}
