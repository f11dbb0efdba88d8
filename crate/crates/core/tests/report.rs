use std::fs;

use amortis::harness::{self, ConfigFile, ExperimentConfig, RunPaths, SeedMetrics};
use amortis::sims::TaskId;

fn config(out: &std::path::Path, seeds: Vec<u64>) -> ExperimentConfig {
    ConfigFile {
        task: Some(TaskId::GaussianLinear),
        model: Some("cpvae".into()),
        budget: Some(200),
        seeds: Some(seeds),
        out_dir: Some(out.to_path_buf()),
        max_epochs: Some(2),
        num_samples: Some(300),
        ppc_samples: Some(100),
        c2st_epochs: Some(3),
        ..Default::default()
    }
    .resolve()
    .unwrap()
}

#[test]
fn report_aggregates_five_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), vec![1, 2, 3, 4, 5]);
    let rec = harness::pipeline(&cfg, |_| {}).unwrap();
    assert_eq!(rec.seeds.len(), 5);

    let paths = RunPaths::new(cfg.run_dir());
    let per_seed: Vec<SeedMetrics> = cfg
        .seeds
        .iter()
        .map(|&s| serde_json::from_str(&fs::read_to_string(paths.metrics(s)).unwrap()).unwrap())
        .collect();
    for (name, get) in [
        ("c2st_accuracy", (|m: &SeedMetrics| m.metrics.as_ref().unwrap().c2st_accuracy.unwrap()) as fn(&SeedMetrics) -> f64),
        ("mmd2", |m| m.metrics.as_ref().unwrap().mmd2.unwrap()),
        ("ppc_ratio", |m| m.ppc.ratio),
    ] {
        let v: Vec<f64> = per_seed.iter().map(get).collect();
        let mean = v.iter().sum::<f64>() / 5.0;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        let agg = &rec.aggregate[name];
        assert_eq!(agg.n, 5);
        assert!((agg.mean - mean).abs() <= 1e-12, "{name} mean");
        assert!((agg.std - std).abs() <= 1e-12, "{name} std");
    }

    let stored: harness::RunRecord = serde_json::from_str(&fs::read_to_string(paths.report()).unwrap()).unwrap();
    assert_eq!(stored.aggregate, rec.aggregate);
}

#[test]
fn report_refuses_mixed_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), vec![1, 2]);
    harness::pipeline(&cfg, |_| {}).unwrap();
    let p = RunPaths::new(cfg.run_dir()).metrics(2);
    let mut m: SeedMetrics = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
    m.config_hash = "0000000000000000".into();
    fs::write(&p, serde_json::to_string(&m).unwrap()).unwrap();
    let err = harness::report(&cfg).unwrap_err();
    assert!(err.to_string().contains("0000000000000000"), "{err}");
}

#[test]
fn stages_refuse_artifacts_from_another_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = config(dir.path(), vec![1]);
    harness::simulate(&a, 1).unwrap();
    // Same run directory, different training settings: the observation no longer matches.
    let b = ExperimentConfig {
        train: amortis::train::TrainConfig { patience: 3, ..a.train.clone() },
        ..a.clone()
    };
    assert_eq!(a.run_dir(), b.run_dir());
    assert!(harness::train(&b, 1).is_err());
}

#[test]
fn samples_are_native_units_from_the_checkpoint_scaler() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), vec![1]);
    harness::simulate(&cfg, 1).unwrap();
    harness::train(&cfg, 1).unwrap();
    let s = harness::sample(&cfg, 1).unwrap();
    let paths = RunPaths::new(cfg.run_dir());
    let model = amortis::train::TrainedModel::load(&paths.checkpoint(1)).unwrap();
    let scaled = model.theta_scaler.apply(&s).unwrap();
    let back = model.theta_scaler.invert(&scaled).unwrap();
    let worst = s
        .as_slice()
        .iter()
        .zip(back.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-10);
    let file = amortis::sims::read_csv(&paths.samples(1)).unwrap();
    assert_eq!(file, s);
}
