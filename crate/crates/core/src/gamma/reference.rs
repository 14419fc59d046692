use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slowly adapted scalar discount `γ̄` used inside the n-step supervision
/// target. Updated by EMA toward the mean learned discount once every
/// `period` events (episodes for SAC, updates for PPO).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDiscount {
    gamma: f64,
    pub tau: f64,
    pub period: u64,
    pub adaptive: bool,
    /// Set once the gamma-net warmup is over; updates are ignored before.
    pub warm: bool,
    gamma_min: f64,
    gamma_max: f64,
    events: u64,
}

impl ReferenceDiscount {
    pub fn new(init: f64, tau: f64, period: u64, adaptive: bool, gamma_min: f64, gamma_max: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidRange {
                name: "reference tau",
                reason: format!("must lie in [0, 1], got {tau}"),
            });
        }
        if period == 0 {
            return Err(Error::InvalidRange {
                name: "reference period",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self {
            gamma: init.clamp(gamma_min, gamma_max),
            tau,
            period,
            adaptive,
            warm: false,
            gamma_min,
            gamma_max,
            events: 0,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `γ̄ ← (1 - τ) γ̄ + τ m`, a no-op unless adaptive and warm.
    pub fn update(&mut self, mean_gamma: f64) -> f64 {
        if self.adaptive && self.warm && mean_gamma.is_finite() {
            let m = mean_gamma.clamp(self.gamma_min, self.gamma_max);
            self.gamma = ((1.0 - self.tau) * self.gamma + self.tau * m).clamp(self.gamma_min, self.gamma_max);
        }
        self.gamma
    }

    /// Count one event; true when a full period has elapsed.
    pub fn tick(&mut self) -> bool {
        self.events += 1;
        self.events % self.period == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn warm(init: f64, tau: f64) -> ReferenceDiscount {
        let mut r = ReferenceDiscount::new(init, tau, 5, true, 0.9, 0.999).unwrap();
        r.warm = true;
        r
    }

    #[test]
    fn single_update_arithmetic() {
        let mut r = warm(0.98, 0.1);
        assert!((r.update(0.99) - 0.981).abs() < 1e-15);
    }

    #[test]
    fn zero_tau_is_identity() {
        let mut r = warm(0.98, 0.0);
        assert_eq!(r.update(0.91), 0.98);
    }

    #[test]
    fn cold_or_fixed_is_noop() {
        let mut r = ReferenceDiscount::new(0.98, 0.1, 5, true, 0.9, 0.999).unwrap();
        assert_eq!(r.update(0.91), 0.98);
        let mut f = warm(0.98, 0.1);
        f.adaptive = false;
        assert_eq!(f.update(0.91), 0.98);
    }

    #[test]
    fn converges_geometrically() {
        let mut r = warm(0.98, 0.1);
        let m = 0.93;
        let mut gap = (r.gamma() - m).abs();
        for _ in 0..50 {
            r.update(m);
            let next = (r.gamma() - m).abs();
            assert!(next <= 0.9 * gap + 1e-15);
            gap = next;
        }
        assert!(gap < 0.05 * 0.9_f64.powi(49));
    }

    #[test]
    fn tick_period() {
        let mut r = warm(0.98, 0.1);
        let fired: Vec<bool> = (0..10).map(|_| r.tick()).collect();
        assert_eq!(fired.iter().filter(|b| **b).count(), 2);
        assert!(fired[4] && fired[9]);
    }

    proptest! {
        #[test]
        fn stays_in_bounds(init in 0.9..0.999f64, tau in 0.0..=1.0f64, ms in proptest::collection::vec(-2.0..2.0f64, 1..50)) {
            let mut r = warm(init, tau);
            for m in ms {
                let g = r.update(m);
                prop_assert!((0.9..=0.999).contains(&g));
            }
        }
    }
}
