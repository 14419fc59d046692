//! The learned discount function and everything that trains it.

mod discount;
mod losses;
mod net;
mod reference;
mod settings;
mod uncertainty;

pub use discount::{Discount, LearnedGamma};
pub use losses::{
    cross_validated_loss, cv_split, full_gamma_loss, full_gamma_loss_from_samples, naive_td_gamma_loss, nstep_return,
    rc_samples, return_consistency_loss, GammaLoss, GammaLossTerms, GammaLossWeights, GammaStats, GammaTarget,
    NStepWindow, RcSample, TdSample, ValueFn,
};
pub use net::{validate_bounds, GammaNet, GammaTape};
pub use reference::ReferenceDiscount;
pub use settings::{GammaSettings, GammaVariant};
pub use uncertainty::UncertaintyGamma;
