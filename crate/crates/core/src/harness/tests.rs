use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::*;
use crate::classifier::{MetricLevel, Metrics};
use crate::dataio::{load_dataset, manifest_path, preprocess, synth_dataset, write_dataset, SignalFormat, SynthSpec};

fn write_synth(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let spec = SynthSpec {
        name: name.into(),
        n_channels: 6,
        n_hc: 4,
        n_pd: 4,
        duration_s: 6.0,
        sampling_rate: 100.0,
        discriminative: vec![0, 1, 2],
        subject_prefix: name.into(),
        ..Default::default()
    };
    let recs = synth_dataset(&spec, seed).unwrap();
    let out = dir.join(name);
    write_dataset(&out, name, &recs, SignalFormat::Binary).unwrap();
    out
}

fn smoke(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::smoke(&write_synth(dir, "train", 1));
    c.experiment.output_root = Some(dir.join("runs"));
    c
}

#[test]
fn subject_split_is_disjoint_stratified_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path());
    let recs = load_dataset(&cfg.experiment.train_dataset).unwrap();
    let (all, _) = preprocess(&recs, &cfg.preprocess).unwrap();
    let (train, test) = split_by_subject(&all, 0.25, 7).unwrap();
    let a: BTreeSet<String> = train.subject_ids().into_iter().collect();
    let b: BTreeSet<String> = test.subject_ids().into_iter().collect();
    assert!(a.is_disjoint(&b));
    assert_eq!(a.len() + b.len(), 8);
    assert_eq!(train.len() + test.len(), all.len());
    for label in crate::dataio::Label::ALL {
        assert!(test.labels.contains(&label) && train.labels.contains(&label));
    }
    let (_, again) = split_by_subject(&all, 0.25, 7).unwrap();
    assert_eq!(again.subject_ids(), test.subject_ids());

    let one_each = all.select(&all.indices_where(|_, _| true)[..1]);
    assert!(split_by_subject(&one_each, 0.25, 0).is_err());
}

#[test]
fn config_round_trips_through_toml() {
    for cfg in [ExperimentConfig::default(), ExperimentConfig::smoke(Path::new("data/x"))] {
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
    let err = ExperimentConfig::from_toml("[experiment]\nnmae = \"x\"\n").unwrap_err();
    assert!(err.to_string().contains("nmae"), "{err}");
}

#[test]
fn relative_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, "[experiment]\ntrain_dataset = \"data/a\"\noutput_root = \"out\"\n").unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.experiment.train_dataset, dir.path().join("data/a"));
    assert_eq!(cfg.output_root(), dir.path().join("out"));
}

#[test]
fn validation_rejects_bad_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let good = smoke(dir.path());
    good.validate().unwrap();

    let mut c = good.clone();
    c.experiment.mode = Mode::CrossDataset;
    assert!(c.validate().is_err());
    c.experiment.test_dataset = Some(c.experiment.train_dataset.clone());
    assert!(c.validate().is_err());
    c.experiment.test_dataset = Some(manifest_path(&c.experiment.train_dataset));
    assert!(c.validate().is_err(), "manifest file and its directory are the same dataset");

    let mut c = good.clone();
    c.experiment.seeds.clear();
    assert!(c.validate().is_err());
    let mut c = good.clone();
    c.experiment.delta = 0.0;
    assert!(c.validate().is_err());
    c.experiment.use_fusion = false;
    c.validate().unwrap();
    let mut c = good;
    c.experiment.test_fraction = 1.0;
    assert!(c.validate().is_err());
}

#[test]
fn run_dirs_are_versioned() {
    let dir = tempfile::tempdir().unwrap();
    let a = create_run_dir(dir.path(), "x").unwrap();
    let b = create_run_dir(dir.path(), "x").unwrap();
    let c = create_run_dir(dir.path(), "x").unwrap();
    assert_eq!(a, dir.path().join("x"));
    assert_eq!(b, dir.path().join("x-v2"));
    assert_eq!(c, dir.path().join("x-v3"));
}

fn metrics(accuracy: f64, f1: f64) -> Metrics {
    Metrics {
        accuracy,
        f1,
        confusion: [[0, 0], [0, 0]],
        level: MetricLevel::Epoch,
    }
}

#[test]
fn summary_uses_population_std() {
    let r = |a, f| SeedResult {
        seed: 0,
        delta: None,
        metrics: metrics(a, f),
        subject_metrics: None,
        n_train_epochs: 0,
        n_test_epochs: 0,
        retained_channels: None,
        quality_mean_score: None,
        quality_verdict: None,
        gan_selection_epochs: None,
        artifacts: Default::default(),
    };
    let s = Summary::of(&[r(0.5, 0.2), r(0.7, 0.4)]);
    assert!((s.accuracy_mean - 0.6).abs() < 1e-12);
    assert!((s.accuracy_std - 0.1).abs() < 1e-12);
    assert!((s.f1_mean - 0.3).abs() < 1e-12);
    assert!((s.f1_std - 0.1).abs() < 1e-12);
}

#[test]
fn single_dataset_run_writes_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path());
    let first = run_experiment(&cfg).unwrap();
    let second = run_experiment(&cfg).unwrap();
    assert_ne!(first.run_dir, second.run_dir);
    assert_eq!(first.body_json(), second.body_json());

    let loaded = ExperimentReport::load(&first.run_dir.join("report.json")).unwrap();
    assert_eq!(loaded.seeds, first.seeds);
    assert!(first.run_dir.join("metrics.csv").is_file());
    assert_eq!(ExperimentConfig::load(&first.run_dir.join("config.toml")).unwrap().gan, cfg.gan);

    let seed = &first.seeds[0];
    assert_eq!(seed.delta, Some(cfg.experiment.delta));
    assert!(seed.quality_mean_score.is_some());
    for key in ["gan-hc", "gan-pd", "autoencoder", "mask", "classifier", "quality_report"] {
        let rel = &seed.artifacts[key];
        assert!(rel.is_relative(), "{key}");
        assert!(first.run_dir.join(rel).is_file(), "{key}");
    }
    for stage in ["preprocess", "split", "train-gan", "quality", "fuse", "prune", "train-classifier", "evaluate"] {
        assert!(first.timings.contains_key(stage), "{stage}");
    }
    assert!((0.0..=1.0).contains(&seed.metrics.accuracy));
}

#[test]
fn baseline_run_skips_generators() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke(dir.path());
    cfg.experiment.use_fusion = false;
    cfg.experiment.use_pruning = false;
    let r = run_experiment(&cfg).unwrap();
    let seed = &r.seeds[0];
    assert_eq!(seed.delta, None);
    assert_eq!(seed.gan_selection_epochs, None);
    assert!(!seed.artifacts.contains_key("gan-hc"));
    assert!(!r.timings.contains_key("train-gan"));
}

#[test]
fn cross_dataset_test_set_is_read_only_at_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke(dir.path());
    let test = write_synth(dir.path(), "other", 2);
    cfg.experiment.mode = Mode::CrossDataset;
    cfg.experiment.test_dataset = Some(test.clone());
    cfg.experiment.seeds = vec![0, 1];
    let r = run_experiment(&cfg).unwrap();
    let log = AccessLog {
        events: r.data_access.clone(),
    };
    let test_reads = log.reads_of(&test);
    assert_eq!(test_reads.len(), 1, "{:?}", r.data_access);
    assert_eq!(test_reads[0].stage, "evaluate");
    let train_reads = log.reads_of(&cfg.experiment.train_dataset);
    assert!(train_reads.iter().all(|e| e.seq < test_reads[0].seq));
    assert!(r.seeds.iter().all(|s| s.n_test_epochs == 48));
}

#[test]
fn sweep_writes_one_row_per_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke(dir.path());
    cfg.experiment.assess_quality = false;
    let r = sweep_delta(&cfg, &[0.5, 1.0]).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert!(r.run_dir.ends_with("smoke-sweep"));
    let text = std::fs::read_to_string(r.run_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "delta,accuracy_mean,accuracy_std,f1_mean,f1_std");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.5,"));
    assert!(r.run_dir.join("sweep.png").is_file());
    assert!(r.rows[1].seeds[0].n_train_epochs > r.rows[0].seeds[0].n_train_epochs);
    assert_eq!(r.rows[0].seeds[0].artifacts["gan-hc"], r.rows[1].seeds[0].artifacts["gan-hc"]);
    assert!(sweep_delta(&cfg, &[]).is_err());
    assert!(sweep_delta(&cfg, &[-1.0]).is_err());
}
