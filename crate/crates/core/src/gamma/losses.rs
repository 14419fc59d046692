//! Training objectives for the discount network.
//!
//! Value estimates enter every loss under stop-gradient: callers either pass
//! precomputed values ([`RcSample`], [`TdSample`]) or a [`ValueFn`] that is
//! only ever evaluated, never differentiated. The returned gradient is with
//! respect to the discount network's parameters alone.

use serde::{Deserialize, Serialize};

use super::net::GammaNet;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// State-value oracle evaluated row-wise under stop-gradient.
pub trait ValueFn {
    fn values(&mut self, states: &Matrix) -> Vec<f64>;
}

impl<F: FnMut(&Matrix) -> Vec<f64>> ValueFn for F {
    fn values(&mut self, states: &Matrix) -> Vec<f64> {
        self(states)
    }
}

/// Up to `n` consecutive transitions of one episode starting at `s_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NStepWindow {
    pub state: Vec<f64>,
    /// `r_t, ..., r_{t+k-1}` with `1 <= k <= n`.
    pub rewards: Vec<f64>,
    pub next_state: Vec<f64>,
    /// `s_{t+k}`, the state after the last transition in the window.
    pub last_state: Vec<f64>,
    /// The last transition was a true terminal; no bootstrap follows it.
    pub terminal: bool,
}

impl NStepWindow {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Whether `s_{t+1}` is terminal, i.e. the one-step bootstrap is masked.
    pub fn first_is_terminal(&self) -> bool {
        self.terminal && self.rewards.len() == 1
    }
}

/// One return-consistency term with all value estimates resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RcSample {
    pub state: Vec<f64>,
    pub reward: f64,
    /// `V(s_{t+1})`, already zero when `s_{t+1}` is terminal.
    pub next_value: f64,
    /// `G_t^(n)`.
    pub target: f64,
}

/// One-step transition with stop-gradient value estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct TdSample {
    pub state: Vec<f64>,
    pub reward: f64,
    pub next_value: f64,
    pub current_value: f64,
    pub terminal: bool,
}

/// What the deviation penalty anchors to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaTarget {
    /// The live reference discount.
    Reference,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLossWeights {
    pub rc: f64,
    pub dev: f64,
    pub var: f64,
    pub bound: f64,
    pub target: GammaTarget,
}

impl GammaLossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_rc", self.rc),
            ("lambda_dev", self.dev),
            ("lambda_var", self.var),
            ("lambda_bound", self.bound),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(name, format!("weight must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn resolve_target(&self, reference: f64) -> f64 {
        match self.target {
            GammaTarget::Reference => reference,
            GammaTarget::Fixed(v) => v,
        }
    }
}

/// Unweighted component values of the full objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GammaLossTerms {
    pub rc: f64,
    pub dev: f64,
    pub var: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl GammaStats {
    pub fn of(gammas: &[f64]) -> Self {
        let mean = gammas.iter().sum::<f64>() / gammas.len().max(1) as f64;
        let min = gammas.iter().copied().fold(f64::INFINITY, f64::min);
        let max = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { mean, min, max }
    }

    pub fn constant(g: f64) -> Self {
        Self {
            mean: g,
            min: g,
            max: g,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaLoss {
    pub total: f64,
    pub terms: GammaLossTerms,
    pub grad: Vec<f64>,
    pub stats: GammaStats,
}

/// `Σ_k γ̄^k r_{t+k} + γ̄^k V(s_{t+k})`, bootstrap dropped at a terminal.
pub fn nstep_return(rewards: &[f64], bootstrap: f64, terminal: bool, ref_gamma: f64) -> f64 {
    let mut g = 0.0;
    let mut disc = 1.0;
    for r in rewards {
        g += disc * r;
        disc *= ref_gamma;
    }
    if !terminal {
        g += disc * bootstrap;
    }
    g
}

fn stack_states<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        if r.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                got: r.len(),
            });
        }
        data.extend_from_slice(r);
        n += 1;
    }
    Matrix::from_vec(n, dim, data)
}

/// Resolve windows into [`RcSample`]s using one batched value evaluation.
pub fn rc_samples(
    windows: &[NStepWindow],
    value_fn: &mut dyn ValueFn,
    ref_gamma: f64,
    n: usize,
) -> Result<Vec<RcSample>> {
    if n < 1 {
        return Err(Error::InvalidHorizon(n));
    }
    if windows.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for w in windows {
        if w.rewards.is_empty() || w.rewards.len() > n {
            return Err(Error::Shape {
                expected: n,
                got: w.rewards.len(),
            });
        }
    }
    let dim = windows[0].state.len();
    let both = stack_states(
        windows
            .iter()
            .map(|w| w.next_state.as_slice())
            .chain(windows.iter().map(|w| w.last_state.as_slice())),
        dim,
    )?;
    let values = value_fn.values(&both);
    let (next_v, last_v) = values.split_at(windows.len());
    Ok(windows
        .iter()
        .enumerate()
        .map(|(i, w)| RcSample {
            state: w.state.clone(),
            reward: w.rewards[0],
            next_value: if w.first_is_terminal() { 0.0 } else { next_v[i] },
            target: nstep_return(&w.rewards, last_v[i], w.terminal, ref_gamma),
        })
        .collect())
}

/// Mean of `(r_t + γ(s_t) V(s_{t+1}) - G_t^(n))²` over the windows.
pub fn return_consistency_loss(
    net: &GammaNet,
    windows: &[NStepWindow],
    value_fn: &mut dyn ValueFn,
    ref_gamma: f64,
    n: usize,
) -> Result<GammaLoss> {
    let samples = rc_samples(windows, value_fn, ref_gamma, n)?;
    let weights = GammaLossWeights {
        rc: 1.0,
        dev: 0.0,
        var: 0.0,
        bound: 0.0,
        target: GammaTarget::Reference,
    };
    full_gamma_loss_from_samples(net, &samples, &weights, ref_gamma)
}

/// Return consistency plus deviation, variance and boundary penalties.
pub fn full_gamma_loss(
    net: &GammaNet,
    windows: &[NStepWindow],
    value_fn: &mut dyn ValueFn,
    ref_gamma: f64,
    n: usize,
    weights: &GammaLossWeights,
) -> Result<GammaLoss> {
    let samples = rc_samples(windows, value_fn, ref_gamma, n)?;
    full_gamma_loss_from_samples(net, &samples, weights, ref_gamma)
}

/// The full objective on resolved samples. Variance is the population
/// variance of `γ(s)` over the batch.
pub fn full_gamma_loss_from_samples(
    net: &GammaNet,
    samples: &[RcSample],
    weights: &GammaLossWeights,
    ref_gamma: f64,
) -> Result<GammaLoss> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let states = stack_states(samples.iter().map(|s| s.state.as_slice()), net.obs_dim())?;
    let (gammas, tape) = net.gammas_taped(&states)?;
    let b = samples.len() as f64;
    let target = weights.resolve_target(ref_gamma);
    let lo = net.gamma_min + net.boundary_margin;
    let hi = net.gamma_max - net.boundary_margin;
    let mean_g = gammas.iter().sum::<f64>() / b;

    let mut terms = GammaLossTerms::default();
    let mut dgamma = vec![0.0; samples.len()];
    for (i, (s, &g)) in samples.iter().zip(&gammas).enumerate() {
        let err = s.reward + g * s.next_value - s.target;
        terms.rc += err * err / b;
        terms.dev += (g - target) * (g - target) / b;
        terms.var += (g - mean_g) * (g - mean_g) / b;
        terms.bound += ((lo - g).max(0.0) + (g - hi).max(0.0)) / b;

        let mut d = weights.rc * 2.0 * err * s.next_value;
        d += weights.dev * 2.0 * (g - target);
        // d/dγ_i of the population variance; the mean's own derivative cancels
        d += weights.var * 2.0 * (g - mean_g);
        if lo - g > 0.0 {
            d -= weights.bound;
        }
        if g - hi > 0.0 {
            d += weights.bound;
        }
        dgamma[i] = d / b;
    }
    let total = weights.rc * terms.rc + weights.dev * terms.dev + weights.var * terms.var + weights.bound * terms.bound;
    let grad = net.param_grad(&tape, &dgamma)?;
    Ok(GammaLoss {
        total,
        terms,
        grad,
        stats: GammaStats::of(&gammas),
    })
}

fn td_loss(net: &GammaNet, batch: &[TdSample]) -> Result<GammaLoss> {
    let states = stack_states(batch.iter().map(|s| s.state.as_slice()), net.obs_dim())?;
    let (gammas, tape) = net.gammas_taped(&states)?;
    let b = batch.len() as f64;
    let mut loss = 0.0;
    let mut dgamma = vec![0.0; batch.len()];
    for (i, (s, &g)) in batch.iter().zip(&gammas).enumerate() {
        let next = if s.terminal { 0.0 } else { s.next_value };
        let delta = s.reward + g * next - s.current_value;
        loss += delta * delta / b;
        dgamma[i] = 2.0 * delta * next / b;
    }
    let grad = net.param_grad(&tape, &dgamma)?;
    Ok(GammaLoss {
        total: loss,
        terms: GammaLossTerms {
            rc: loss,
            ..Default::default()
        },
        grad,
        stats: GammaStats::of(&gammas),
    })
}

/// Squared TD error with the gradient flowing through `γ(s_t)`.
///
/// Minimizing this alone lets the network shrink errors by shortening the
/// horizon; it exists to reproduce that failure mode.
pub fn naive_td_gamma_loss(net: &GammaNet, batch: &[TdSample]) -> Result<GammaLoss> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    td_loss(net, batch)
}

/// Squared TD errors on the held-out half `B`, with values from the value
/// function after its gradient step on half `A`.
pub fn cross_validated_loss(net: &GammaNet, batch_b: &[TdSample]) -> Result<GammaLoss> {
    if batch_b.is_empty() {
        return Err(Error::InvalidSplit("held-out half is empty".into()));
    }
    td_loss(net, batch_b)
}

/// Random 50/50 split of `0..n` into halves `A` and `B`.
pub fn cv_split(n: usize, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidSplit(format!(
            "cannot split a batch of {n} into two non-empty halves"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let b = idx.split_off(n / 2);
    Ok((idx, b))
}
