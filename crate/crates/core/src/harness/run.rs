use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode};
use crate::augment::{fuse, train_gan, FusionSpec, GanCheckpoint};
use crate::classifier::{evaluate, train_classifier, Metrics, TrainConfig};
use crate::dataio::{load_dataset, manifest_path, preprocess, EpochSet, Label, Provenance};
use crate::error::{Error, Result};
use crate::pruning::{apply_mask, export_similarity, prune, similarity_table, ChannelMask};
use crate::quality::{score, train_autoencoder, AutoencoderModel, Verdict, POOR_THRESHOLD};
use crate::rng::{derive_seed, seeded};

pub const REPORT_VERSION: u32 = 1;

/// One read of a dataset manifest, in program order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessEvent {
    pub seq: usize,
    pub stage: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccessLog {
    pub events: Vec<AccessEvent>,
}

impl AccessLog {
    pub fn record(&mut self, stage: &str, path: &Path) {
        let seq = self.events.len();
        self.events.push(AccessEvent {
            seq,
            stage: stage.into(),
            path: path.to_path_buf(),
        });
    }

    /// Events that touched the manifest at `dataset`.
    pub fn reads_of(&self, dataset: &Path) -> Vec<&AccessEvent> {
        let target = manifest_path(dataset);
        self.events.iter().filter(|e| e.path == target).collect()
    }
}

/// Results of one seed (and one δ in a sweep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub delta: Option<f64>,
    pub metrics: Metrics,
    pub subject_metrics: Option<Metrics>,
    pub n_train_epochs: usize,
    pub n_test_epochs: usize,
    pub retained_channels: Option<Vec<String>>,
    pub quality_mean_score: Option<f64>,
    pub quality_verdict: Option<Verdict>,
    /// Selected epoch of the HC and PD generators.
    pub gan_selection_epochs: Option<[usize; 2]>,
    /// Artifact files relative to the run directory.
    pub artifacts: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl Summary {
    /// Mean and population standard deviation of epoch-level scores.
    pub fn of(results: &[SeedResult]) -> Summary {
        let stats = |v: Vec<f64>| {
            let n = v.len().max(1) as f64;
            let m = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            (m, var.sqrt())
        };
        let (accuracy_mean, accuracy_std) = stats(results.iter().map(|r| r.metrics.accuracy).collect());
        let (f1_mean, f1_std) = stats(results.iter().map(|r| r.metrics.f1).collect());
        Summary {
            accuracy_mean,
            accuracy_std,
            f1_mean,
            f1_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedResult>,
    pub summary: Summary,
    pub warnings: Vec<String>,
    pub data_access: Vec<AccessEvent>,
    /// Wall-clock seconds per stage, summed over seeds.
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    pub run_dir: PathBuf,
}

impl ExperimentReport {
    pub fn load(path: &Path) -> Result<ExperimentReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut r: ExperimentReport = serde_json::from_str(&text)?;
        r.run_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(r)
    }

    /// The report without timings, as stable JSON.
    pub fn body_json(&self) -> String {
        let mut r = self.clone();
        r.timings.clear();
        serde_json::to_string_pretty(&r).expect("report serialises")
    }
}

/// Creates `root/name`, or `root/name-v2`, `-v3`, ... if taken.
pub fn create_run_dir(root: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for v in 1.. {
        let dir = if v == 1 {
            root.join(name)
        } else {
            root.join(format!("{name}-v{v}"))
        };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

/// Splits by subject within each class, holding out
/// `max(1, round(fraction * n))` subjects per class.
pub fn split_by_subject(data: &EpochSet, test_fraction: f64, seed: u64) -> Result<(EpochSet, EpochSet)> {
    if data.subjects.iter().any(Option::is_none) {
        return Err(Error::Invalid("subject split needs a subject id on every epoch".into()));
    }
    let mut rng = seeded(seed);
    let mut test_subjects = BTreeSet::new();
    for label in Label::ALL {
        let mut subjects: Vec<&str> = data
            .subjects
            .iter()
            .zip(&data.labels)
            .filter(|(_, &l)| l == label)
            .map(|(s, _)| s.as_deref().unwrap())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if subjects.len() < 2 {
            return Err(Error::Invalid(format!(
                "need at least two {label} subjects to hold one out, found {}",
                subjects.len()
            )));
        }
        subjects.shuffle(&mut rng);
        let n = ((test_fraction * subjects.len() as f64).round() as usize).clamp(1, subjects.len() - 1);
        test_subjects.extend(subjects[..n].iter().map(|s| s.to_string()));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, s) in data.subjects.iter().enumerate() {
        if test_subjects.contains(s.as_deref().unwrap()) {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    Ok((data.select(&train), data.select(&test)))
}

pub(crate) struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub log: AccessLog,
    pub warnings: Vec<String>,
    pub timings: BTreeMap<String, f64>,
    test_cache: Option<EpochSet>,
}

impl<'a> Ctx<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Self {
        Ctx {
            cfg,
            log: AccessLog::default(),
            warnings: Vec::new(),
            timings: BTreeMap::new(),
            test_cache: None,
        }
    }

    pub fn stage<T>(&mut self, stage: &'static str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        log::info!("stage {stage}");
        let out = f(self).map_err(|e| e.in_stage(stage));
        *self.timings.entry(stage.to_string()).or_default() += t.elapsed().as_secs_f64();
        out
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn load(&mut self, stage: &str, dataset: &Path) -> Result<EpochSet> {
        self.log.record(stage, &manifest_path(dataset));
        let mut recordings = load_dataset(dataset)?;
        if let Some(ch) = &self.cfg.experiment.channels {
            recordings = recordings
                .iter()
                .map(|r| r.select_channels(ch))
                .collect::<Result<_>>()?;
        }
        let (epochs, warnings) = preprocess(&recordings, &self.cfg.preprocess)?;
        for w in warnings {
            self.warn(w);
        }
        Ok(epochs)
    }

    pub fn load_train(&mut self) -> Result<EpochSet> {
        let path = self.cfg.experiment.train_dataset.clone();
        self.stage("preprocess", |c| c.load("preprocess", &path))
    }

    /// The held-out dataset of cross-dataset mode, read on first use.
    fn cross_test(&mut self) -> Result<EpochSet> {
        if self.test_cache.is_none() {
            let path = self.cfg.experiment.test_dataset.clone().expect("validated");
            let t = self.load("evaluate", &path)?;
            self.test_cache = Some(t);
        }
        Ok(self.test_cache.clone().unwrap())
    }
}

/// Per-seed state shared by every δ of a sweep.
pub(crate) struct Prepared {
    pub seed: u64,
    pub train: EpochSet,
    pub test: Option<EpochSet>,
    pub gans: Option<[GanCheckpoint; 2]>,
    pub autoencoder: Option<AutoencoderModel>,
    pub artifacts: BTreeMap<String, PathBuf>,
}

fn rel(dir: &Path, run_dir: &Path) -> PathBuf {
    dir.strip_prefix(run_dir).unwrap_or(dir).to_path_buf()
}

pub(crate) fn prepare(ctx: &mut Ctx, all: &EpochSet, seed: u64, run_dir: &Path, seed_dir: &Path) -> Result<Prepared> {
    let cfg = ctx.cfg;
    std::fs::create_dir_all(seed_dir).map_err(|e| Error::io(seed_dir, e))?;
    let (train, test) = match cfg.experiment.mode {
        Mode::SingleDataset => ctx.stage("split", |_| {
            let (a, b) = split_by_subject(all, cfg.experiment.test_fraction, derive_seed(seed, "split"))?;
            Ok((a, Some(b)))
        })?,
        Mode::CrossDataset => (all.clone(), None),
    };
    let mut artifacts = BTreeMap::new();
    let needs_gans = cfg.experiment.use_fusion || cfg.experiment.use_pruning;
    let gans = if needs_gans {
        let pair = ctx.stage("train-gan", |_| {
            let mut out = Vec::new();
            for (label, tag) in [(Label::HC, "gan-hc"), (Label::PD, "gan-pd")] {
                let group = train.filter(|l, p| l == label && p == Provenance::Real);
                if group.is_empty() {
                    return Err(Error::EmptyGroup(label.to_string()));
                }
                let ck = train_gan(&group, &cfg.gan, derive_seed(seed, tag))?;
                let path = seed_dir.join(format!("{tag}.ckpt"));
                ck.save(&path)?;
                artifacts.insert(tag.to_string(), rel(&path, run_dir));
                out.push(ck);
            }
            let pd = out.pop().unwrap();
            let hc = out.pop().unwrap();
            Ok([hc, pd])
        })?;
        Some(pair)
    } else {
        None
    };
    let autoencoder = if gans.is_some() && cfg.experiment.assess_quality {
        Some(ctx.stage("quality", |_| {
            let m = train_autoencoder(&train, &cfg.quality, derive_seed(seed, "quality"))?;
            let path = seed_dir.join("autoencoder.ckpt");
            m.save(&path)?;
            artifacts.insert("autoencoder".into(), rel(&path, run_dir));
            Ok(m)
        })?)
    } else {
        None
    };
    Ok(Prepared {
        seed,
        train,
        test,
        gans,
        autoencoder,
        artifacts,
    })
}

/// Runs fusion, quality gate, pruning, classifier training and evaluation
/// for one prepared seed at ratio `delta`.
pub(crate) fn finish(ctx: &mut Ctx, prep: &Prepared, delta: f64, run_dir: &Path, out_dir: &Path) -> Result<SeedResult> {
    let cfg = ctx.cfg;
    let seed = prep.seed;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut artifacts = prep.artifacts.clone();
    let fusion = match &prep.gans {
        Some([hc, pd]) => ctx.stage("fuse", |_| {
            fuse(
                &prep.train,
                hc,
                pd,
                &FusionSpec {
                    delta,
                    seed: derive_seed(seed, "fuse"),
                },
            )
        })?,
        None => prep.train.clone(),
    };

    let (mut quality_mean_score, mut quality_verdict) = (None, None);
    if let Some(ae) = &prep.autoencoder {
        let generated = fusion.filter(|_, p| p == Provenance::Generated);
        if !generated.is_empty() {
            let report = ctx.stage("quality", |_| score(ae, &generated, &prep.train))?;
            let path = out_dir.join("quality.json");
            report.save(&path).map_err(|e| e.in_stage("quality"))?;
            artifacts.insert("quality_report".into(), rel(&path, run_dir));
            let png = out_dir.join("quality_histogram.png");
            report.save_histogram(&png).map_err(|e| e.in_stage("quality"))?;
            artifacts.insert("quality_histogram".into(), rel(&png, run_dir));
            if report.mean_score < POOR_THRESHOLD {
                if cfg.experiment.strict_quality {
                    return Err(Error::QualityGate {
                        mean_score: report.mean_score,
                        threshold: POOR_THRESHOLD,
                    }
                    .in_stage("quality"));
                }
                ctx.warn(format!(
                    "seed {seed}: generated data scored {:.3}, below the {POOR_THRESHOLD} quality floor",
                    report.mean_score
                ));
            }
            quality_mean_score = Some(report.mean_score);
            quality_verdict = Some(report.verdict);
        }
    }

    let mut train_set = if cfg.experiment.use_fusion {
        fusion.clone()
    } else {
        prep.train.clone()
    };
    let mask = if cfg.experiment.use_pruning {
        let mask = ctx.stage("prune", |_| {
            let table = similarity_table(&fusion, &cfg.histogram)?;
            let mask = prune(&table, &cfg.prune)?;
            let files = export_similarity(&table, &mask, out_dir)?;
            for f in files {
                let key = f.file_stem().unwrap().to_string_lossy().into_owned();
                artifacts.insert(key, rel(&f, run_dir));
            }
            let path = out_dir.join("mask.json");
            mask.save(&path)?;
            artifacts.insert("mask".into(), rel(&path, run_dir));
            Ok(mask)
        })?;
        train_set = apply_mask(&train_set, &mask).map_err(|e| e.in_stage("prune"))?;
        Some(mask)
    } else {
        None
    };

    let model = ctx.stage("train-classifier", |_| {
        let tcfg = TrainConfig {
            seed: derive_seed(seed, "classifier"),
            ..cfg.train.clone()
        };
        let m = train_classifier(&train_set, &cfg.classifier, &tcfg)?;
        let path = out_dir.join("classifier.ckpt");
        m.save(&path)?;
        artifacts.insert("classifier".into(), rel(&path, run_dir));
        Ok(m)
    })?;

    let (metrics, subject_metrics, n_test) = ctx.stage("evaluate", |c| {
        let test = match &prep.test {
            Some(t) => t.clone(),
            None => c.cross_test()?,
        };
        let align = mask.clone().unwrap_or_else(|| ChannelMask::full(&model.channels));
        let test = apply_mask(&test, &align)?;
        let (m, s) = evaluate(&model, &test)?;
        Ok((m, s, test.len()))
    })?;
    log::info!(
        "seed {seed} delta {delta}: accuracy {:.4}, F1 {:.4}",
        metrics.accuracy,
        metrics.f1
    );
    Ok(SeedResult {
        seed,
        delta: prep.gans.as_ref().map(|_| delta),
        metrics,
        subject_metrics,
        n_train_epochs: train_set.len(),
        n_test_epochs: n_test,
        retained_channels: mask.map(|m| m.retained),
        quality_mean_score,
        quality_verdict,
        gan_selection_epochs: prep.gans.as_ref().map(|[h, p]| [h.selection_epoch, p.selection_epoch]),
        artifacts,
    })
}

pub(crate) fn write_metrics_csv(path: &Path, results: &[SeedResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    w.write_record(["seed", "delta", "accuracy", "f1", "subject_accuracy", "subject_f1"])?;
    for r in results {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            r.seed.to_string(),
            opt(r.delta),
            r.metrics.accuracy.to_string(),
            r.metrics.f1.to_string(),
            opt(r.subject_metrics.as_ref().map(|m| m.accuracy)),
            opt(r.subject_metrics.as_ref().map(|m| m.f1)),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs the configured pipeline for every seed and writes `report.json`,
/// `metrics.csv` and `config.toml` plus per-seed artifacts into a fresh run
/// directory under the output root.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let run_dir = create_run_dir(&cfg.output_root(), &cfg.experiment.name)?;
    let config_path = run_dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).map_err(|e| Error::io(&config_path, e))?;
    let mut ctx = Ctx::new(cfg);
    let all = ctx.load_train()?;
    let mut results = Vec::new();
    for &seed in &cfg.experiment.seeds {
        let seed_dir = run_dir.join(format!("seed-{seed}"));
        let prep = prepare(&mut ctx, &all, seed, &run_dir, &seed_dir)?;
        results.push(finish(&mut ctx, &prep, cfg.experiment.delta, &run_dir, &seed_dir)?);
    }
    let report = ExperimentReport {
        version: REPORT_VERSION,
        config: cfg.clone(),
        summary: Summary::of(&results),
        seeds: results,
        warnings: ctx.warnings,
        data_access: ctx.log.events,
        timings: ctx.timings,
        run_dir: run_dir.clone(),
    };
    write_json(&run_dir.join("report.json"), &report)?;
    write_metrics_csv(&run_dir.join("metrics.csv"), &report.seeds)?;
    Ok(report)
}
