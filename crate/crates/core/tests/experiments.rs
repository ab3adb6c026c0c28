use std::fs;

use fogsched::domain::processing_time_ms;
use fogsched::experiments::{
    evaluate, load_config, measure_overhead, parse_config, read_metrics_csv, run_comparison, run_dir, run_evaluation,
    run_training, save_config, train, window_mean, Agent, Algorithm, ExperimentConfig,
};
use fogsched::mdp::Objective;
use fogsched::ppo::PpoHyper;
use fogsched::sim::SimEnv;

fn quick(alg: Algorithm) -> ExperimentConfig {
    ExperimentConfig {
        algorithm: alg,
        updates: 6,
        calibration_decisions: 64,
        ppo: PpoHyper { horizon: 16, epochs: 2, ..PpoHyper::default() },
        nsga2: fogsched::baselines::Nsga2Config { population: 16, generations: 4, ..Default::default() },
        ..ExperimentConfig::default()
    }
}

#[test]
fn minimal_config_takes_default_hyperparameters() {
    let cfg = parse_config("algorithm = \"ppo\"\n").unwrap();
    let h = cfg.ppo;
    assert_eq!((h.clip, h.gamma, h.lr_actor, h.lr_critic), (0.3, 0.9, 3e-4, 1e-3));
    assert_eq!((h.coef_policy, h.coef_value, h.coef_entropy), (1.0, 0.5, 0.01));
    assert_eq!(cfg.servers.len(), 6);
    assert_eq!(cfg.updates, 100);
}

#[test]
fn shipped_config_is_the_default() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper_mirror.toml");
    assert_eq!(load_config(path).unwrap(), ExperimentConfig::default());
}

#[test]
fn config_errors_name_field_or_constraint() {
    let e = parse_config("[weights]\nw1 = 0.7\nw2 = 0.7\n").unwrap_err().to_string();
    assert!(e.contains("C6"), "{e}");
    let e = parse_config("[[servers]]\ncores = 0\nfreq_mhz = 1000.0\nram_gb = 1.0\n").unwrap_err().to_string();
    assert!(e.contains("C3"), "{e}");
    let e = parse_config("[ppo]\nclip = \"wide\"\n").unwrap_err().to_string();
    assert!(e.contains("ppo.clip"), "{e}");
    let e = parse_config("[workload.cpu_demand]\nlo = 0.5\nhi = 32.0\n").unwrap_err().to_string();
    assert!(e.contains("C2"), "{e}");
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.objective = Objective::ResponseTime;
    cfg.seeds = vec![9, 11];
    cfg.network.cloud.propagation_ms = 20.5;
    let p = dir.path().join("c.toml");
    save_config(&cfg, &p).unwrap();
    assert_eq!(load_config(&p).unwrap(), cfg);
}

#[test]
fn training_yields_one_finite_record_per_update() {
    for alg in Algorithm::ALL {
        let out = train(&quick(alg), 3).unwrap();
        assert_eq!(out.records.len(), 6, "{alg}");
        for (i, r) in out.records.iter().enumerate() {
            assert_eq!(r.update, i);
            assert!(r.mean_cost.is_finite() && r.decisions > 0, "{alg} update {i}");
        }
    }
}

#[test]
fn same_seed_gives_bit_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for alg in Algorithm::ALL {
        let cfg = quick(alg);
        run_training(&cfg, 5, a.path()).unwrap();
        run_training(&cfg, 5, b.path()).unwrap();
        for f in ["metrics.csv", "episodes.jsonl", "checkpoint.txt"] {
            let x = fs::read(run_dir(a.path(), alg, 5).join(f)).unwrap();
            let y = fs::read(run_dir(b.path(), alg, 5).join(f)).unwrap();
            assert!(x == y && !x.is_empty(), "{alg} {f}");
        }
    }
}

#[test]
fn metrics_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(Algorithm::Ppo);
    let out = run_training(&cfg, 2, dir.path()).unwrap();
    let back = read_metrics_csv(run_dir(dir.path(), Algorithm::Ppo, 2).join("metrics.csv")).unwrap();
    assert_eq!(back.len(), out.records.len());
    for (x, y) in back.iter().zip(&out.records) {
        assert_eq!((x.update, x.mean_cost, x.success_rate), (y.update, y.mean_cost, y.success_rate));
    }
}

#[test]
fn checkpoints_reload_for_every_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    for alg in Algorithm::ALL {
        let cfg = quick(alg);
        run_training(&cfg, 1, dir.path()).unwrap();
        let ck = run_dir(dir.path(), alg, 1).join("checkpoint.txt");
        let agent = Agent::load(&cfg, &ck, 1).unwrap();
        assert_eq!(agent.algorithm(), alg);
    }
}

#[test]
fn incompatible_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for alg in [Algorithm::Ppo, Algorithm::Qlearning, Algorithm::Dqn] {
        let cfg = quick(alg);
        run_training(&cfg, 1, dir.path()).unwrap();
        let mut small = cfg.clone();
        small.servers.truncate(4);
        let ck = run_dir(dir.path(), alg, 1).join("checkpoint.txt");
        assert!(run_evaluation(&small, &ck, 1, dir.path()).is_err(), "{alg}");
    }
    let junk = dir.path().join("junk.txt");
    fs::write(&junk, "not a checkpoint\n").unwrap();
    assert!(Agent::load(&quick(Algorithm::Ppo), &junk, 1).is_err());
}

#[test]
fn evaluation_is_deterministic_and_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(Algorithm::Ppo);
    run_training(&cfg, 4, dir.path()).unwrap();
    let ck = run_dir(dir.path(), Algorithm::Ppo, 4).join("checkpoint.txt");
    let a = run_evaluation(&cfg, &ck, 4, dir.path()).unwrap();
    let file_a = fs::read(run_dir(dir.path(), Algorithm::Ppo, 4).join("eval_metrics.csv")).unwrap();
    let b = run_evaluation(&cfg, &ck, 4, dir.path()).unwrap();
    let file_b = fs::read(run_dir(dir.path(), Algorithm::Ppo, 4).join("eval_metrics.csv")).unwrap();
    assert_eq!(a.len(), cfg.eval.blocks);
    assert_eq!(file_a, file_b);
    assert_eq!(a.iter().map(|r| r.mean_cost).collect::<Vec<_>>(), b.iter().map(|r| r.mean_cost).collect::<Vec<_>>());
}

#[test]
fn half_scale_halves_every_processing_time() {
    let cfg = ExperimentConfig::default();
    let full = SimEnv::new(cfg.env_config(cfg.workload.clone(), 8).unwrap()).unwrap();
    let half = SimEnv::new(cfg.env_config(cfg.eval_workload(), 8).unwrap()).unwrap();
    let (fa, ha): (Vec<_>, Vec<_>) = (full.apps().collect(), half.apps().collect());
    assert_eq!(fa.len(), ha.len());
    let mut n = 0;
    for (x, y) in fa.iter().zip(&ha) {
        for (t, u) in x.tasks.iter().zip(&y.tasks) {
            assert_eq!(t.id, u.id);
            for s in cfg.fleet() {
                let p = processing_time_ms(t.size_mcycles, s.cpu_freq_mhz).unwrap();
                let q = processing_time_ms(u.size_mcycles, s.cpu_freq_mhz).unwrap();
                assert_eq!(q, 0.5 * p);
                n += 1;
            }
        }
    }
    assert!(n > 0);
}

#[test]
fn greedy_evaluation_on_training_workload_beats_early_training() {
    let mut cfg = ExperimentConfig { updates: 40, ..ExperimentConfig::default() };
    cfg.eval.size_scale = 1.0;
    let mut out = train(&cfg, 3).unwrap();
    let costs: Vec<f64> = out.records.iter().map(|r| r.mean_cost).collect();
    let early = window_mean(&costs, 0, 10);
    let eval = evaluate(&cfg, &mut out.agent, 3).unwrap();
    let mean = eval.iter().map(|r| r.mean_cost).sum::<f64>() / eval.len() as f64;
    assert!(mean <= early, "eval {mean} vs early training {early}");
}

#[test]
fn comparison_covers_every_job() {
    let cfg = quick(Algorithm::Ppo);
    let dir = tempfile::tempdir().unwrap();
    let c = run_comparison(&cfg, &[Algorithm::Ppo, Algorithm::Nsga2], &[1, 2], Some(dir.path())).unwrap();
    assert_eq!(c.summaries.len(), 4);
    assert!(c.get(Algorithm::Nsga2, 2).is_some());
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn overhead_reports_each_algorithm() {
    let cfg = quick(Algorithm::Ppo);
    let s = measure_overhead(&cfg, &[Algorithm::Ppo, Algorithm::Qlearning, Algorithm::Nsga2], 30, 1).unwrap();
    assert_eq!(s.iter().map(|x| x.algorithm).collect::<Vec<_>>(), [Algorithm::Ppo, Algorithm::Qlearning, Algorithm::Nsga2]);
    for x in &s {
        assert_eq!(x.rounds, 30);
        assert!(x.ci_low_ms <= x.mean_ms && x.mean_ms <= x.ci_high_ms);
    }
}
