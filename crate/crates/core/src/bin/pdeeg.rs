use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pdeeg::augment::{generate, train_gan, GanCheckpoint};
use pdeeg::checkpoint::{load_epochs, save_epochs};
use pdeeg::classifier::{evaluate, train_classifier, ClassifierModel, TrainConfig};
use pdeeg::dataio::{load_dataset, preprocess, synth_dataset, write_dataset, EpochSet, Label, Provenance, SignalFormat, SynthSpec};
use pdeeg::harness::{run_experiment, sweep_delta, ExperimentConfig, Mode};
use pdeeg::pruning::{apply_mask, export_similarity, prune, similarity_table, ChannelMask};
use pdeeg::quality::{score, train_autoencoder, AutoencoderModel, POOR_THRESHOLD};
use pdeeg::rng::derive_seed;
use pdeeg::Error;

/// EEG Parkinson's disease detection: preprocessing, GAN augmentation,
/// channel pruning, quality scoring and classification.
#[derive(Parser)]
#[command(name = "pdeeg", version, propagate_version = true)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Master seed; every stage derives its own seed from it.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p).context("reading config"),
            None => Ok(ExperimentConfig::default()),
        }
    }

    fn seed(&self, cfg: &ExperimentConfig) -> u64 {
        self.seed.unwrap_or(cfg.experiment.seeds[0])
    }
}

#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    train_dataset: Option<PathBuf>,
    #[arg(long)]
    test_dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    no_fusion: bool,
    #[arg(long)]
    no_pruning: bool,
    #[arg(long)]
    no_quality: bool,
    /// Abort when generated data scores below the quality floor.
    #[arg(long)]
    strict_quality: bool,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Where run directories go (also PDEEG_OUTPUT_ROOT).
    #[arg(long)]
    output_root: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Cross,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    Hc,
    Pd,
}

impl GroupArg {
    fn label(self) -> Label {
        match self {
            GroupArg::Hc => Label::HC,
            GroupArg::Pd => Label::PD,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            GroupArg::Hc => "gan-hc",
            GroupArg::Pd => "gan-pd",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Binary,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic HC/PD dataset.
    Synth {
        /// Synthetic-population spec (TOML); defaults when omitted.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        n_hc: Option<usize>,
        #[arg(long)]
        n_pd: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        sampling_rate: Option<f64>,
        #[arg(long, value_enum, default_value = "binary")]
        format: FormatArg,
    },
    /// Load, filter, epoch and z-score a dataset into an epoch file.
    Preprocess {
        #[command(flatten)]
        common: Common,
        /// Dataset directory or manifest; defaults to the config's train set.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train the generator for one group on real epochs.
    TrainGan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs_file: PathBuf,
        #[arg(long, value_enum)]
        group: GroupArg,
        /// Override the number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Sample epochs from a trained generator.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score generated epochs with an autoencoder fitted to real ones.
    AssessQuality {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        /// Reuse a trained autoencoder instead of fitting one.
        #[arg(long)]
        autoencoder: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build the similarity table of a fused set and prune channels.
    Prune {
        #[command(flatten)]
        common: Common,
        /// Epoch files, together holding real and generated epochs of both
        /// groups. Repeat the flag or separate with commas.
        #[arg(long, required = true, value_delimiter = ',')]
        epochs_file: Vec<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train the classifier on an epoch file.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs_file: PathBuf,
        /// Channel mask from `prune`.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Override the number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score a trained classifier on an epoch file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        epochs_file: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Also write the metrics as JSON here.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline and write a report directory.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the pipeline at several fusion ratios.
    SweepDelta {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_delimiter = ',', default_value = "1.0,1.7,2.0,3.0")]
        deltas: Vec<f64>,
    },
    /// Print a config file with every default filled in.
    PrintConfig {
        /// The small preset used for smoke tests.
        #[arg(long)]
        smoke: bool,
    },
}

fn apply(cfg: &mut ExperimentConfig, seed: Option<u64>, o: &Overrides) {
    let e = &mut cfg.experiment;
    if let Some(p) = &o.train_dataset {
        e.train_dataset = p.clone();
    }
    if let Some(p) = &o.test_dataset {
        e.test_dataset = Some(p.clone());
    }
    if let Some(m) = o.mode {
        e.mode = match m {
            ModeArg::Single => Mode::SingleDataset,
            ModeArg::Cross => Mode::CrossDataset,
        };
    }
    if let Some(n) = &o.name {
        e.name = n.clone();
    }
    if let Some(d) = o.delta {
        e.delta = d;
    }
    e.use_fusion &= !o.no_fusion;
    e.use_pruning &= !o.no_pruning;
    e.assess_quality &= !o.no_quality;
    e.strict_quality |= o.strict_quality;
    if let Some(s) = &o.seeds {
        e.seeds = s.clone();
    }
    if let Some(s) = seed {
        e.seeds = vec![s];
    }
    if let Some(r) = &o.output_root {
        e.output_root = Some(r.clone());
    }
    if let Some(a) = o.alpha {
        cfg.prune.alpha = a;
    }
    if let Some(b) = o.beta {
        cfg.prune.beta = b;
    }
}

fn tagged<T>(stage: &'static str, r: pdeeg::Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage).into())
}

fn masked(data: EpochSet, mask: Option<&Path>) -> Result<EpochSet> {
    match mask {
        Some(p) => {
            let m = ChannelMask::load(p).with_context(|| format!("reading mask {}", p.display()))?;
            Ok(apply_mask(&data, &m)?)
        }
        None => Ok(data),
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Synth {
            config,
            seed,
            out,
            n_hc,
            n_pd,
            channels,
            duration,
            sampling_rate,
            format,
        } => {
            let mut spec = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => SynthSpec::default(),
            };
            if let Some(n) = channels {
                spec.n_channels = n;
                spec.discriminative.retain(|&c| c < n);
                spec.channel_names.clear();
            }
            spec.n_hc = n_hc.unwrap_or(spec.n_hc);
            spec.n_pd = n_pd.unwrap_or(spec.n_pd);
            spec.duration_s = duration.unwrap_or(spec.duration_s);
            spec.sampling_rate = sampling_rate.unwrap_or(spec.sampling_rate);
            let format = match format {
                FormatArg::Binary => SignalFormat::Binary,
                FormatArg::Csv => SignalFormat::Csv,
            };
            let recs = tagged("synth", synth_dataset(&spec, seed))?;
            let manifest = tagged("synth", write_dataset(&out, &spec.name, &recs, format))?;
            println!("{}", manifest.display());
        }
        Cmd::Preprocess { common, dataset, out } => {
            let cfg = common.load()?;
            let path = dataset.unwrap_or(cfg.experiment.train_dataset.clone());
            if path.as_os_str().is_empty() {
                bail!("no dataset: pass --dataset or set experiment.train_dataset");
            }
            let epochs = tagged("preprocess", (|| {
                let mut recs = load_dataset(&path)?;
                if let Some(ch) = &cfg.experiment.channels {
                    recs = recs.iter().map(|r| r.select_channels(ch)).collect::<pdeeg::Result<_>>()?;
                }
                let (epochs, warnings) = preprocess(&recs, &cfg.preprocess)?;
                for w in warnings {
                    log::warn!("{w}");
                }
                save_epochs(&epochs, &out)?;
                Ok(epochs)
            })())?;
            println!("{} epochs of {} x {} -> {}", epochs.len(), epochs.n_channels(), epochs.n_samples(), out.display());
        }
        Cmd::TrainGan {
            common,
            epochs_file,
            group,
            epochs,
            out,
        } => {
            let mut cfg = common.load()?;
            if let Some(n) = epochs {
                cfg.gan.epochs = n;
            }
            let seed = derive_seed(common.seed(&cfg), group.tag());
            let ck = tagged("train-gan", (|| {
                let data = load_epochs(&epochs_file)?;
                let real = data.filter(|l, p| l == group.label() && p == Provenance::Real);
                let ck = train_gan(&real, &cfg.gan, seed)?;
                ck.save(&out)?;
                Ok(ck)
            })())?;
            println!(
                "selected epoch {} (generator loss {:.4}) -> {}",
                ck.selection_epoch,
                ck.selection_generator_loss,
                out.display()
            );
        }
        Cmd::Generate {
            common,
            checkpoint,
            count,
            out,
        } => {
            let cfg = common.load()?;
            let seed = derive_seed(common.seed(&cfg), "generate");
            tagged("generate", (|| {
                let ck = GanCheckpoint::load(&checkpoint)?;
                save_epochs(&generate(&ck, count, seed)?, &out)
            })())?;
            println!("{count} epochs -> {}", out.display());
        }
        Cmd::AssessQuality {
            common,
            real,
            generated,
            autoencoder,
            strict,
            out,
        } => {
            let cfg = common.load()?;
            let seed = derive_seed(common.seed(&cfg), "quality");
            mkdir(&out)?;
            let report = tagged("quality", (|| {
                let real = load_epochs(&real)?.filter(|_, p| p == Provenance::Real);
                let generated = load_epochs(&generated)?;
                let model = match &autoencoder {
                    Some(p) => AutoencoderModel::load(p)?,
                    None => {
                        let m = train_autoencoder(&real, &cfg.quality, seed)?;
                        m.save(&out.join("autoencoder.ckpt"))?;
                        m
                    }
                };
                let report = score(&model, &generated, &real)?;
                report.save(&out.join("quality.json"))?;
                report.save_histogram(&out.join("quality_histogram.png"))?;
                Ok(report)
            })())?;
            println!("mean score {:.4}, verdict {:?}", report.mean_score, report.verdict);
            if strict && report.mean_score < POOR_THRESHOLD {
                return Err(Error::QualityGate {
                    mean_score: report.mean_score,
                    threshold: POOR_THRESHOLD,
                }
                .in_stage("quality")
                .into());
            }
        }
        Cmd::Prune {
            common,
            epochs_file,
            alpha,
            beta,
            out,
        } => {
            let mut cfg = common.load()?;
            cfg.prune.alpha = alpha.unwrap_or(cfg.prune.alpha);
            cfg.prune.beta = beta.unwrap_or(cfg.prune.beta);
            mkdir(&out)?;
            let mask = tagged("prune", (|| {
                let parts = epochs_file.iter().map(|p| load_epochs(p)).collect::<pdeeg::Result<Vec<_>>>()?;
                let data = EpochSet::concat(&parts.iter().collect::<Vec<_>>())?;
                let table = similarity_table(&data, &cfg.histogram)?;
                let mask = prune(&table, &cfg.prune)?;
                export_similarity(&table, &mask, &out)?;
                mask.save(&out.join("mask.json"))?;
                Ok(mask)
            })())?;
            println!(
                "kept {} of {} channels: {}",
                mask.retained.len(),
                mask.trace.len(),
                mask.retained.join(" ")
            );
        }
        Cmd::TrainClassifier {
            common,
            epochs_file,
            mask,
            epochs,
            out,
        } => {
            let cfg = common.load()?;
            let tcfg = TrainConfig {
                seed: derive_seed(common.seed(&cfg), "classifier"),
                epochs: epochs.unwrap_or(cfg.train.epochs),
                ..cfg.train.clone()
            };
            let data = tagged("train-classifier", load_epochs(&epochs_file))?;
            let data = masked(data, mask.as_deref())?;
            let model = tagged("train-classifier", (|| {
                let m = train_classifier(&data, &cfg.classifier, &tcfg)?;
                m.save(&out)?;
                Ok(m)
            })())?;
            println!(
                "final loss {:.4} -> {}",
                model.loss_curve.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Cmd::Evaluate {
            common,
            model,
            epochs_file,
            mask,
            out,
        } => {
            let _ = common.load()?;
            let model = tagged("evaluate", ClassifierModel::load(&model))?;
            let data = tagged("evaluate", load_epochs(&epochs_file))?;
            let data = masked(data, mask.as_deref())?;
            let (epoch, subject) = tagged("evaluate", evaluate(&model, &data))?;
            let json = serde_json::to_string_pretty(&serde_json::json!({ "epoch": epoch, "subject": subject }))?;
            if let Some(p) = out {
                std::fs::write(&p, &json).with_context(|| format!("writing {}", p.display()))?;
            }
            println!("{json}");
        }
        Cmd::Run { common, overrides } => {
            let mut cfg = common.load()?;
            apply(&mut cfg, common.seed, &overrides);
            let report = run_experiment(&cfg)?;
            let s = report.summary;
            println!(
                "accuracy {:.4} ± {:.4}, F1 {:.4} ± {:.4}",
                s.accuracy_mean, s.accuracy_std, s.f1_mean, s.f1_std
            );
            println!("{}", report.run_dir.display());
        }
        Cmd::SweepDelta {
            common,
            overrides,
            deltas,
        } => {
            let mut cfg = common.load()?;
            apply(&mut cfg, common.seed, &overrides);
            let report = sweep_delta(&cfg, &deltas)?;
            for r in &report.rows {
                println!(
                    "delta {}: accuracy {:.4} ± {:.4}, F1 {:.4} ± {:.4}",
                    r.delta, r.summary.accuracy_mean, r.summary.accuracy_std, r.summary.f1_mean, r.summary.f1_std
                );
            }
            println!("{}", report.run_dir.display());
        }
        Cmd::PrintConfig { smoke } => {
            let cfg = if smoke {
                ExperimentConfig::smoke(Path::new("data/train"))
            } else {
                ExperimentConfig::default()
            };
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

/// The error chain joined with ": ", skipping causes already spelled out
/// by the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !parts.last().is_some_and(|p| p.ends_with(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            let gate = e
                .downcast_ref::<Error>()
                .is_some_and(|e| matches!(e.root(), Error::QualityGate { .. }));
            ExitCode::from(if gate { 3 } else { 1 })
        }
    }
}
