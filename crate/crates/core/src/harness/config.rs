use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::GanConfig;
use crate::classifier::{PdnexConfig, TrainConfig};
use crate::dataio::PreprocessConfig;
use crate::error::{Error, Result};
use crate::pruning::{HistogramSpec, PruneConfig};
use crate::quality::AutoencoderConfig;

pub const OUTPUT_ROOT_ENV: &str = "PDEEG_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Train and test on subject-disjoint parts of one dataset.
    #[default]
    SingleDataset,
    /// Train on one dataset, test on all of another.
    CrossDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub mode: Mode,
    pub train_dataset: PathBuf,
    pub test_dataset: Option<PathBuf>,
    /// Restrict both datasets to these channels, in this order.
    pub channels: Option<Vec<String>>,
    pub use_fusion: bool,
    pub delta: f64,
    pub use_pruning: bool,
    pub assess_quality: bool,
    /// Abort instead of warning when generated data scores poorly.
    pub strict_quality: bool,
    pub seeds: Vec<u64>,
    /// Fraction of subjects per class held out in single-dataset mode.
    pub test_fraction: f64,
    /// Overrides the output root from the environment.
    pub output_root: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            name: "experiment".into(),
            mode: Mode::SingleDataset,
            train_dataset: PathBuf::new(),
            test_dataset: None,
            channels: None,
            use_fusion: true,
            delta: 1.7,
            use_pruning: true,
            assess_quality: true,
            strict_quality: false,
            seeds: vec![0],
            test_fraction: 0.1,
            output_root: None,
        }
    }
}

/// Everything one experiment needs. Serialises to the TOML layout of the
/// config file, one table per stage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub preprocess: PreprocessConfig,
    pub gan: GanConfig,
    pub histogram: HistogramSpec,
    pub prune: PruneConfig,
    pub quality: AutoencoderConfig,
    pub classifier: PdnexConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Reads a TOML config. Relative dataset and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            e => e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.experiment.train_dataset);
        if let Some(p) = cfg.experiment.test_dataset.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.experiment.output_root.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.train_dataset.as_os_str().is_empty() {
            return Err(Error::Config("experiment.train_dataset is required".into()));
        }
        if e.mode == Mode::CrossDataset {
            let Some(test) = &e.test_dataset else {
                return Err(Error::Config("cross_dataset mode needs experiment.test_dataset".into()));
            };
            if same_dataset(test, &e.train_dataset) {
                return Err(Error::Config("cross_dataset mode needs distinct train and test datasets".into()));
            }
        }
        if e.use_fusion && !(e.delta.is_finite() && e.delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive when fusion is on, got {}", e.delta)));
        }
        if e.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds is empty".into()));
        }
        if e.mode == Mode::SingleDataset && !(e.test_fraction > 0.0 && e.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must be in (0, 1), got {}", e.test_fraction)));
        }
        if let Some(ch) = &e.channels {
            if ch.is_empty() {
                return Err(Error::Config("experiment.channels is empty".into()));
            }
        }
        self.histogram.validate()?;
        self.train.validate()?;
        self.quality.validate()?;
        if !(self.prune.alpha >= 0.0 && self.prune.beta >= 0.0) {
            return Err(Error::Config("prune alpha and beta must be non-negative".into()));
        }
        Ok(())
    }

    /// Tiny networks and few epochs for `train_dataset`. Meant for smoke
    /// tests on short synthetic recordings at 100 Hz; not for real results.
    pub fn smoke(train_dataset: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.experiment.name = "smoke".into();
        c.experiment.train_dataset = train_dataset.to_path_buf();
        c.experiment.test_fraction = 0.25;
        c.preprocess.band_high_hz = 40.0;
        c.preprocess.filter_taps = 51;
        c.preprocess.epoch_length_s = 1.0;
        c.preprocess.target_rate = 100.0;
        c.gan.epochs = 3;
        c.gan.batch_size = 4;
        c.gan.critic_steps = 1;
        c.gan.base_filters = 8;
        c.gan.noise.dimension = 16;
        c.gan.convergence_window = 2;
        c.histogram.bins = 16;
        c.prune.beta = 5.0;
        c.prune.combine = crate::pruning::Combine::Union;
        c.quality.hidden_size = 4;
        c.quality.epochs = 2;
        c.quality.decimate = 4;
        c.train.epochs = 2;
        c
    }

    /// `experiment.output_root`, else `$PDEEG_OUTPUT_ROOT`, else `./runs`.
    pub fn output_root(&self) -> PathBuf {
        self.experiment
            .output_root
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

fn same_dataset(a: &Path, b: &Path) -> bool {
    let canon = |p: &Path| std::fs::canonicalize(crate::dataio::manifest_path(p)).ok();
    match (canon(a), canon(b)) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}
