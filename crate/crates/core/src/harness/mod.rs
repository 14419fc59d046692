//! Configuration, logging, sweeps and experiment drivers.

mod analysis;
mod collapse;
mod config;
mod log;
mod runner;
mod sweep;

pub use self::analysis::{gamma_dump, histogram, GammaDump, GammaSummary, HISTOGRAM_BINS};
pub use self::collapse::{
    arm_settings, collapse_experiment, naive_verdict, rc_verdict, ArmSeed, CollapseArm, CollapseReport, NAIVE_MARGIN,
    RC_FLOOR,
};
pub use self::config::{
    apply_overrides, load_config, Algorithm, EnvName, EnvSection, GammaSection, RunConfig, RunSection, ENV_PREFIX,
};
pub use self::log::{LogRow, RunLog, Schedule, LOG_COLUMNS};
pub use self::runner::{seed_dir, train_seed, train_to_dir, RunOutcome, Snapshot};
pub use self::sweep::{run_sweep, run_sweep_with, summarize, SeedResult, SeedStatus, SweepSummary};
