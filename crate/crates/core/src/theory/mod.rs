//! Exact tabular checks of the soft Bellman operator under a per-state
//! discount: evaluation by linear solve, contraction, Boltzmann improvement,
//! policy iteration and the discount-mismatch error bound.

mod campaign;
mod iteration;
mod operator;
mod policy;

pub use campaign::{
    run_campaign, CampaignConfig, CertificateReport, ContractionReport, GapReport, ImprovementReport, IterationReport,
    TightnessStats, CONTRACTION_SLACK, CONVERGENCE_TOL, DOMINANCE_TOL, EVAL_AGREEMENT_TOL, IMPROVEMENT_TOL,
    POLICY_FLOOR,
};
pub use iteration::{
    error_gap_bound, error_gap_certificate, soft_policy_improve, soft_policy_iteration, GapCertificate,
    PolicyIteration, MONOTONE_TOL,
};
pub use operator::{
    contraction_certificate, exact_soft_eval, exact_soft_eval_with, iterate_soft_backup, soft_backup, BackupIteration,
    EvalAssembly,
};
pub use policy::{QTable, SoftPolicy};
