//! Randomized certificate runs over many tabular instances.

use serde::{Deserialize, Serialize};

use super::iteration::{error_gap_certificate, soft_policy_improve, soft_policy_iteration, MONOTONE_TOL};
use super::operator::{contraction_certificate, exact_soft_eval, iterate_soft_backup};
use super::policy::{QTable, SoftPolicy};
use crate::envs::{random_mdp, TabularMdp};
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const CONTRACTION_SLACK: f64 = 1e-12;
pub const EVAL_AGREEMENT_TOL: f64 = 1e-9;
pub const IMPROVEMENT_TOL: f64 = 1e-9;
pub const CONVERGENCE_TOL: f64 = 1e-8;
pub const DOMINANCE_TOL: f64 = 1e-8;
pub const POLICY_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub instances: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub seed: u64,
    pub contraction_pairs: usize,
    /// Instances (a prefix of the campaign) used for policy iteration.
    pub iteration_instances: usize,
    pub comparison_policies: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            instances: 1000,
            max_states: 20,
            max_actions: 5,
            seed: 0,
            contraction_pairs: 100,
            iteration_instances: 200,
            comparison_policies: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub pass: bool,
    pub instances: usize,
    /// `max(modulus - β)` over instances; `<= 1e-12` when passing.
    pub worst_excess: f64,
    pub worst_eval_gap: f64,
    pub max_backup_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub pass: bool,
    pub instances: usize,
    /// Most negative `min(Q_new - Q_old)` over instances.
    pub worst_decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub pass: bool,
    pub instances: usize,
    pub failures: usize,
    pub max_iterations: usize,
    pub worst_monotone_decrease: f64,
    /// Most negative `min(Q* - Q^π)` over comparison policies.
    pub worst_dominance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessStats {
    pub count: usize,
    pub min: f64,
    pub p10: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
    pub mean: f64,
}

impl TightnessStats {
    fn of(mut xs: Vec<f64>) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        xs.sort_by(f64::total_cmp);
        let q = |p: f64| xs[((xs.len() - 1) as f64 * p).round() as usize];
        Some(Self {
            count: xs.len(),
            min: xs[0],
            p10: q(0.1),
            median: q(0.5),
            p90: q(0.9),
            max: xs[xs.len() - 1],
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub pass: bool,
    pub instances: usize,
    pub violations: usize,
    pub tightness: Option<TightnessStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub config: CampaignConfig,
    pub contraction: ContractionReport,
    pub improvement: ImprovementReport,
    pub policy_iteration: IterationReport,
    pub error_gap: GapReport,
    pub all_pass: bool,
}

struct Instance {
    mdp: TabularMdp,
    pi: SoftPolicy,
    rng: Rng,
}

fn draw_instance(cfg: &CampaignConfig, index: usize) -> Result<Instance> {
    let mut rng = Rng::with_stream(cfg.seed, index as u64);
    let s = 1 + rng.below(cfg.max_states);
    let a = 1 + rng.below(cfg.max_actions);
    let sparsity = rng.uniform_range(0.0, 0.5);
    let mdp = random_mdp(s, a, sparsity, (-1.0, 1.0), (0.0, 0.95), &mut rng)?;
    let alpha = rng.uniform_range(0.05, 1.0);
    let pi = SoftPolicy::random(s, a, POLICY_FLOOR.min(1.0 / a as f64), alpha, &mut rng)?;
    Ok(Instance { mdp, pi, rng })
}

/// Run every certificate over `cfg.instances` random instances.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CertificateReport> {
    if cfg.instances == 0 || cfg.max_states == 0 || cfg.max_actions == 0 {
        return Err(Error::InvalidRange {
            name: "campaign",
            reason: "instances, states and actions must all be >= 1".into(),
        });
    }
    let mut contraction = ContractionReport {
        pass: true,
        instances: cfg.instances,
        worst_excess: f64::NEG_INFINITY,
        worst_eval_gap: 0.0,
        max_backup_iterations: 0,
    };
    let mut improvement = ImprovementReport {
        pass: true,
        instances: cfg.instances,
        worst_decrease: f64::INFINITY,
    };
    let iteration_instances = cfg.iteration_instances.min(cfg.instances);
    let mut iteration = IterationReport {
        pass: true,
        instances: iteration_instances,
        failures: 0,
        max_iterations: 0,
        worst_monotone_decrease: f64::INFINITY,
        worst_dominance: f64::INFINITY,
    };
    let mut violations = 0;
    let mut ratios = Vec::new();

    for index in 0..cfg.instances {
        let Instance { mdp, pi, mut rng } = draw_instance(cfg, index)?;
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let beta = mdp.beta();

        let modulus = contraction_certificate(&mdp, &pi, cfg.contraction_pairs, &mut rng)?;
        contraction.worst_excess = contraction.worst_excess.max(modulus - beta);
        let exact = exact_soft_eval(&mdp, &pi)?;
        let iterated = iterate_soft_backup(&mdp, &pi, QTable::zeros(ns, na), 1e-11, 1_000_000)?;
        contraction.worst_eval_gap = contraction.worst_eval_gap.max(iterated.q.sup_dist(&exact));
        contraction.max_backup_iterations = contraction.max_backup_iterations.max(iterated.iterations);

        let improved = soft_policy_improve(&exact, pi.alpha)?;
        let q_new = exact_soft_eval(&mdp, &improved)?;
        improvement.worst_decrease = improvement.worst_decrease.min(q_new.min_diff(&exact));

        if index < iteration_instances {
            match soft_policy_iteration(&mdp, &pi, 1000, CONVERGENCE_TOL * 1e-2) {
                Ok(out) => {
                    iteration.max_iterations = iteration.max_iterations.max(out.iterations);
                    iteration.worst_monotone_decrease = iteration.worst_monotone_decrease.min(out.worst_decrease);
                    for _ in 0..cfg.comparison_policies {
                        let other = SoftPolicy::random(ns, na, POLICY_FLOOR.min(1.0 / na as f64), pi.alpha, &mut rng)?;
                        let q_other = exact_soft_eval(&mdp, &other)?;
                        iteration.worst_dominance = iteration.worst_dominance.min(out.q.min_diff(&q_other));
                    }
                }
                Err(Error::NoConvergence { .. }) => iteration.failures += 1,
                Err(e) => return Err(e),
            }
        }

        let gamma = rng.uniform_range(0.0, 0.95);
        let gap = error_gap_certificate(&mdp, gamma, &pi)?;
        if !gap.holds() {
            violations += 1;
        }
        if let Some(t) = gap.tightness() {
            ratios.push(t);
        }
    }

    contraction.pass =
        contraction.worst_excess <= CONTRACTION_SLACK && contraction.worst_eval_gap <= EVAL_AGREEMENT_TOL;
    improvement.pass = improvement.worst_decrease >= -IMPROVEMENT_TOL;
    iteration.pass = iteration.failures == 0
        && iteration.worst_monotone_decrease >= -MONOTONE_TOL
        && iteration.worst_dominance >= -DOMINANCE_TOL;
    let error_gap = GapReport {
        pass: violations == 0,
        instances: cfg.instances,
        violations,
        tightness: TightnessStats::of(ratios),
    };
    let all_pass = contraction.pass && improvement.pass && iteration.pass && error_gap.pass;
    Ok(CertificateReport {
        config: cfg.clone(),
        contraction,
        improvement,
        policy_iteration: iteration,
        error_gap,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_campaign_passes_and_is_deterministic() {
        let cfg = CampaignConfig {
            instances: 20,
            max_states: 8,
            max_actions: 3,
            seed: 3,
            contraction_pairs: 20,
            iteration_instances: 5,
            comparison_policies: 5,
        };
        let a = run_campaign(&cfg).unwrap();
        assert!(a.all_pass, "{a:#?}");
        let b = run_campaign(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tightness_stats_order() {
        let t = TightnessStats::of(vec![0.5, 0.1, 0.3]).unwrap();
        assert_eq!((t.min, t.median, t.max), (0.1, 0.3, 0.5));
        assert!(TightnessStats::of(vec![]).is_none());
    }
}
