use adagamma::envs::{CorridorEnv, Env};
use adagamma::gamma::{GammaSettings, GammaVariant};
use adagamma::harness::{
    gamma_dump, load_config, run_sweep, seed_dir, train_seed, train_to_dir, RunConfig, RunLog, SeedStatus, Snapshot,
    HISTOGRAM_BINS,
};
use adagamma::numerics::Rng;
use adagamma::sac::{SacAgent, SacConfig};

const COLLAPSE: &str = include_str!("../../../configs/collapse.toml");

fn config(text: &str, overrides: &[(&str, &str)]) -> RunConfig {
    let vars = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string()));
    RunConfig::from_toml_str(text, vars).unwrap()
}

fn tiny_sac() -> RunConfig {
    config(
        COLLAPSE,
        &[
            ("ADAGAMMA_RUN_MAX_STEPS", "3000"),
            ("ADAGAMMA_RUN_EVAL_INTERVAL", "1000"),
            ("ADAGAMMA_RUN_SEEDS", "[3, 4]"),
            ("ADAGAMMA_SAC_HIDDEN", "16"),
            ("ADAGAMMA_SAC_MIN_BUFFER", "500"),
            ("ADAGAMMA_GAMMA_VARIANT", "adagamma-rc"),
            ("ADAGAMMA_GAMMA_HIDDEN", "16"),
            ("ADAGAMMA_GAMMA_WARMUP", "1000"),
        ],
    )
}

#[test]
fn bundled_configs_load() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    for name in ["pendulum_sac.toml", "pendulum_ppo.toml", "collapse.toml"] {
        let cfg = load_config(format!("{root}/{name}")).unwrap();
        let again = RunConfig::from_toml_str(&cfg.echo().unwrap(), Vec::new()).unwrap();
        assert_eq!(again, cfg, "{name}");
    }
}

#[test]
fn sweep_is_reproducible_byte_for_byte() {
    let cfg = tiny_sac();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = run_sweep(&cfg, &cfg.run.seeds, a.path()).unwrap();
    let sb = run_sweep(&cfg, &cfg.run.seeds, b.path()).unwrap();
    assert_eq!(sa.failed, 0);
    assert_eq!(sa, sb);
    for seed in [3, 4] {
        let la = std::fs::read(seed_dir(a.path(), seed).join("log.csv")).unwrap();
        let lb = std::fs::read(seed_dir(b.path(), seed).join("log.csv")).unwrap();
        assert_eq!(la, lb);
        assert!(!la.is_empty());
    }
    for f in ["config.toml", "summary.csv", "summary.json"] {
        assert!(a.path().join(f).exists(), "{f}");
    }
    // distinct seeds give distinct runs
    let l3 = std::fs::read(seed_dir(a.path(), 3).join("log.csv")).unwrap();
    let l4 = std::fs::read(seed_dir(a.path(), 4).join("log.csv")).unwrap();
    assert_ne!(l3, l4);
}

#[test]
fn parallel_sweep_matches_sequential() {
    let mut cfg = tiny_sac();
    let seq = tempfile::tempdir().unwrap();
    let s1 = run_sweep(&cfg, &cfg.run.seeds, seq.path()).unwrap();
    cfg.run.parallel = true;
    let par = tempfile::tempdir().unwrap();
    let s2 = run_sweep(&cfg, &cfg.run.seeds, par.path()).unwrap();
    assert_eq!(s1.seeds, s2.seeds);
}

#[test]
fn snapshot_round_trips() {
    let cfg = tiny_sac();
    let dir = tempfile::tempdir().unwrap();
    let out = train_to_dir(&cfg, 3, dir.path()).unwrap();
    let loaded = Snapshot::load(&seed_dir(dir.path(), 3).join("snapshot.json")).unwrap();
    let (Snapshot::Sac(a), Snapshot::Sac(b)) = (&out.snapshot, &loaded) else {
        panic!("expected SAC snapshots");
    };
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.critics, b.critics);
    assert_eq!(a.discount, b.discount);
    for x in [-1.0, 0.0, 2.5, 7.0, 9.9] {
        assert_eq!(
            out.snapshot.act_deterministic(&[x]).unwrap(),
            loaded.act_deterministic(&[x]).unwrap()
        );
    }
}

#[test]
fn fresh_discount_dumps_into_one_bin() {
    let gs = GammaSettings {
        hidden: 8,
        ..GammaSettings::sac_defaults()
    };
    let cfg = SacConfig {
        hidden: 8,
        ..SacConfig::default()
    };
    let agent = SacAgent::new(1, 1, cfg, gs, &mut Rng::new(0), &mut Rng::with_stream(0, 1)).unwrap();
    let snap = Snapshot::Sac(agent);
    let dump = gamma_dump(&snap, &mut CorridorEnv::default(), 3, &mut Rng::new(1)).unwrap();
    let s = &dump.summary;
    assert_eq!(s.count, 300);
    assert_eq!(s.histogram.len(), HISTOGRAM_BINS);
    assert_eq!(s.histogram.iter().filter(|&&c| c > 0).count(), 1);
    assert!((s.mean - 0.98).abs() < 1e-12);
    assert!((s.min - 0.98).abs() < 1e-12 && (s.max - 0.98).abs() < 1e-12);
    let dir = tempfile::tempdir().unwrap();
    dump.write(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("gamma_dump.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    assert!(dir.path().join("gamma_summary.json").exists());
}

#[test]
fn trained_discount_dump_covers_both_zones() {
    let cfg = config(
        COLLAPSE,
        &[
            ("ADAGAMMA_RUN_MAX_STEPS", "8000"),
            ("ADAGAMMA_RUN_EVAL_INTERVAL", "4000"),
            ("ADAGAMMA_RUN_EVAL_EPISODES", "20"),
            ("ADAGAMMA_GAMMA_VARIANT", "adagamma-rc"),
        ],
    );
    let mut log = RunLog::in_memory();
    let out = train_seed(&cfg, 0, &mut log).unwrap();
    let mut env = cfg.env.build().unwrap();
    let noisy_end = CorridorEnv::default().params.noisy_end;
    let dump = gamma_dump(&out.snapshot, &mut env, 50, &mut Rng::with_stream(0, 3)).unwrap();
    let noisy = dump.states.iter().filter(|s| s[0] < noisy_end).count();
    assert!(noisy >= 100, "noisy-zone states: {noisy}");
    assert!(
        dump.states.len() - noisy >= 100,
        "deterministic-zone states: {}",
        dump.states.len() - noisy
    );
    let g = &dump.summary;
    assert!(g.min >= cfg.gamma_settings().gamma_min && g.max <= cfg.gamma_settings().gamma_max);
    assert!(
        (g.mean - out.final_mean_gamma).abs() < 0.01,
        "dump mean {} vs logged {}",
        g.mean,
        out.final_mean_gamma
    );
    assert_eq!(env.obs_dim(), 1);
}

#[test]
fn ppo_trains_on_the_corridor() {
    let cfg = config(
        COLLAPSE,
        &[
            ("ADAGAMMA_RUN_ALGORITHM", "ppo"),
            ("ADAGAMMA_RUN_MAX_STEPS", "4096"),
            ("ADAGAMMA_RUN_EVAL_INTERVAL", "2048"),
            ("ADAGAMMA_PPO_HIDDEN", "16"),
            ("ADAGAMMA_PPO_ROLLOUT_LEN", "1024"),
            ("ADAGAMMA_PPO_EPOCHS", "2"),
            ("ADAGAMMA_GAMMA_WARMUP", "5"),
            ("ADAGAMMA_GAMMA_HIDDEN", "16"),
        ],
    );
    assert_eq!(cfg.gamma_settings().variant, GammaVariant::AdagammaRc);
    let mut log = RunLog::in_memory();
    let out = train_seed(&cfg, 1, &mut log).unwrap();
    assert_eq!(out.steps, 4096);
    assert_eq!(log.rows().len(), 2);
    assert!(log.rows().iter().all(|r| r.eval_return_mean.is_finite()));
    let gs = cfg.gamma_settings();
    assert!(log
        .rows()
        .iter()
        .all(|r| r.gamma.min >= gs.gamma_min && r.gamma.max <= gs.gamma_max));
    assert!(matches!(out.snapshot, Snapshot::Ppo(_)));
}

#[test]
fn failing_seed_does_not_stop_the_sweep() {
    let cfg = tiny_sac();
    let dir = tempfile::tempdir().unwrap();
    // a file where the seed directory should go makes that seed fail
    std::fs::create_dir_all(dir.path()).unwrap();
    std::fs::write(seed_dir(dir.path(), 3), b"in the way").unwrap();
    let s = run_sweep(&cfg, &[3, 4], dir.path()).unwrap();
    assert_eq!(s.failed, 1);
    assert!(matches!(s.seeds[0].status, SeedStatus::Failed { .. }));
    assert!(matches!(s.seeds[1].status, SeedStatus::Done { .. }));
    assert!(s.return_std == 0.0);
}
