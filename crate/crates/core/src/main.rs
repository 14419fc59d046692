use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adagamma::harness::{
    collapse_experiment, gamma_dump, load_config, run_sweep, seed_dir, train_to_dir, SeedStatus, Snapshot,
};
use adagamma::numerics::Rng;
use adagamma::theory::{run_campaign, CampaignConfig};
use adagamma::Result;

#[derive(Parser)]
#[command(
    name = "adagamma",
    version,
    about = "State-dependent discounting for actor-critic RL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed (the first configured one unless --seed is given).
    Train {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train several seeds and write a mean ± std summary.
    Sweep {
        config: PathBuf,
        /// Comma-separated seeds; defaults to `run.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Exact tabular checks of the soft Bellman operator under a
    /// state-dependent discount.
    TheoryCheck {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        /// Largest number of states per instance.
        #[arg(long, default_value_t = 20)]
        states: usize,
        /// Largest number of actions per instance.
        #[arg(long, default_value_t = 5)]
        actions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON report here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Naive TD versus return-consistency discount training on the corridor.
    Collapse { config: PathBuf },
    /// Discounts along deterministic rollouts of a saved agent.
    GammaDump {
        snapshot: PathBuf,
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        /// Output directory; defaults to the snapshot's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn verdict(name: &str, pass: bool) {
    println!("{name}: {}", if pass { "PASS" } else { "FAIL" });
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { config, seed } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.run.seeds[0]);
            cfg.write_echo(&cfg.run.out_dir)?;
            let o = train_to_dir(&cfg, seed, &cfg.run.out_dir)?;
            println!(
                "seed {seed}: {} steps, {} episodes, final eval {:.2}, mean gamma {:.4}",
                o.steps, o.episodes, o.final_return, o.final_mean_gamma
            );
            println!("outputs in {}", seed_dir(&cfg.run.out_dir, seed).display());
            Ok(cfg.run.target_return.is_none() || o.solved_at.is_some())
        }
        Command::Sweep { config, seeds } => {
            let cfg = load_config(&config)?;
            let seeds = seeds.unwrap_or_else(|| cfg.run.seeds.clone());
            let s = run_sweep(&cfg, &seeds, &cfg.run.out_dir)?;
            print!("{}", s.to_csv());
            let solved = s.seeds.iter().all(|r| match &r.status {
                SeedStatus::Done { solved_at, .. } => cfg.run.target_return.is_none() || solved_at.is_some(),
                SeedStatus::Failed { .. } => false,
            });
            Ok(s.failed == 0 && solved)
        }
        Command::TheoryCheck {
            instances,
            states,
            actions,
            seed,
            out,
        } => {
            let cfg = CampaignConfig {
                instances,
                max_states: states,
                max_actions: actions,
                seed,
                iteration_instances: CampaignConfig::default().iteration_instances.min(instances),
                ..CampaignConfig::default()
            };
            let report = run_campaign(&cfg)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| adagamma::Error::Serde(e.to_string()))?;
            println!("{text}");
            if let Some(path) = out {
                std::fs::write(&path, &text).map_err(|e| adagamma::Error::Io { path, source: e })?;
            }
            verdict("contraction", report.contraction.pass);
            verdict("policy improvement", report.improvement.pass);
            verdict("policy iteration", report.policy_iteration.pass);
            verdict("error gap bound", report.error_gap.pass);
            Ok(report.all_pass)
        }
        Command::Collapse { config } => {
            let cfg = load_config(&config)?;
            let dir = cfg.run.out_dir.join("collapse");
            let report = collapse_experiment(&cfg, Some(&dir))?;
            for arm in [&report.naive, &report.rc] {
                for s in &arm.seeds {
                    println!(
                        "{:?} seed {}: final mean gamma {:.4} {}",
                        arm.variant,
                        s.seed,
                        s.final_mean_gamma,
                        if s.pass { "pass" } else { "fail" }
                    );
                }
            }
            verdict("naive-td collapses to gamma_min", report.naive.pass);
            verdict("adagamma-rc stays high", report.rc.pass);
            Ok(report.pass)
        }
        Command::GammaDump {
            snapshot,
            config,
            episodes,
            out,
        } => {
            let cfg = load_config(&config)?;
            let snap = Snapshot::load(&snapshot)?;
            let mut env = cfg.env.build()?;
            let mut rng = Rng::with_stream(cfg.run.seeds[0], 3);
            let dump = gamma_dump(&snap, &mut env, episodes, &mut rng)?;
            let dir = out.unwrap_or_else(|| snapshot.parent().map(PathBuf::from).unwrap_or_default());
            dump.write(&dir)?;
            let s = &dump.summary;
            println!(
                "{} states: mean {:.4}, min {:.4}, max {:.4}",
                s.count, s.mean, s.min, s.max
            );
            println!("histogram [{:.3}, {:.3}]: {:?}", s.lo, s.hi, s.histogram);
            println!("written to {}", dir.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
