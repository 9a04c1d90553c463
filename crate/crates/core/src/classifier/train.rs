use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array3, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{softmax, Pdnex, PdnexConfig};
use crate::autograd::Var;
use crate::checkpoint::Checkpoint;
use crate::dataio::{EpochSet, Label};
use crate::error::{Error, Result};
use crate::nn::{Adam, ParamStore};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub l1_coeff: f64,
    pub l2_coeff: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr_start: 1e-3,
            lr_end: 1e-4,
            l1_coeff: 1e-4,
            l2_coeff: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("classifier epochs must be positive".into()));
        }
        if !(self.lr_end > 0.0 && self.lr_end < self.lr_start) {
            return Err(Error::Config(format!(
                "need 0 < lr_end < lr_start, got {} and {}",
                self.lr_end, self.lr_start
            )));
        }
        if self.l1_coeff < 0.0 || self.l2_coeff < 0.0 {
            return Err(Error::Config("regularisation coefficients must be non-negative".into()));
        }
        Ok(())
    }
}

/// Cosine annealing from `start` at `t = 0` to `end` at `t = total`.
pub fn cosine_lr(start: f64, end: f64, t: usize, total: usize) -> f64 {
    let frac = t.min(total) as f64 / total.max(1) as f64;
    end + 0.5 * (start - end) * (1.0 + (PI * frac).cos())
}

/// A trained network with the settings and channel order it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub config: PdnexConfig,
    pub train: TrainConfig,
    pub channels: Vec<String>,
    pub store: ParamStore,
    pub loss_curve: Vec<f64>,
}

pub const CLASSIFIER_KIND: &str = "pdnex";

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    config: PdnexConfig,
    train: TrainConfig,
    channels: Vec<String>,
    loss_curve: Vec<f64>,
}

impl ClassifierModel {
    pub fn network(&self) -> Result<Pdnex> {
        Pdnex::new(&self.config)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = ClassifierMeta {
            config: self.config.clone(),
            train: self.train.clone(),
            channels: self.channels.clone(),
            loss_curve: self.loss_curve.clone(),
        };
        let mut ck = Checkpoint::new(CLASSIFIER_KIND, serde_json::to_value(meta).expect("metadata serialises"));
        ck.insert_store("net", &self.store);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CLASSIFIER_KIND)?;
        let meta: ClassifierMeta = ck.meta_as()?;
        Ok(ClassifierModel {
            config: meta.config,
            train: meta.train,
            channels: meta.channels,
            store: ck.store("net"),
            loss_curve: meta.loss_curve,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    fn check_input(&self, data: &EpochSet) -> Result<()> {
        if data.layout.names() != self.channels.as_slice() {
            return Err(Error::Invalid(format!(
                "data channels do not match the {} channels the classifier was trained on",
                self.channels.len()
            )));
        }
        if data.n_samples() != self.config.n_samples {
            return Err(Error::Invalid(format!(
                "epochs have {} samples, the classifier expects {}",
                data.n_samples(),
                self.config.n_samples
            )));
        }
        Ok(())
    }

    /// Class probabilities `[N, n_classes]`.
    pub fn predict_proba(&self, data: &EpochSet) -> Result<ndarray::ArrayD<f64>> {
        self.check_input(data)?;
        let net = self.network()?;
        Ok(softmax(&net.logits(&self.store, &data.epochs)))
    }

    /// Predicted class index per epoch.
    pub fn predict(&self, data: &EpochSet) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(data)?))
    }
}

fn argmax_rows(p: &ndarray::ArrayD<f64>) -> Vec<usize> {
    p.axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

fn gather(epochs: &Array3<f64>, idx: &[usize]) -> Var {
    Var::constant(epochs.select(Axis(0), idx).into_dyn())
}

/// Trains the network on every epoch of `data` (real and generated alike).
pub fn train_classifier(data: &EpochSet, cfg: &PdnexConfig, tcfg: &TrainConfig) -> Result<ClassifierModel> {
    tcfg.validate()?;
    let cfg = PdnexConfig {
        n_channels: data.n_channels(),
        n_samples: data.n_samples(),
        ..cfg.clone()
    };
    let net = Pdnex::new(&cfg)?;
    if data.is_empty() {
        return Err(Error::Invalid("no epochs to train on".into()));
    }
    let classes: std::collections::BTreeSet<Label> = data.labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::Invalid("training data contains a single class".into()));
    }
    let mut init_rng = seeded(derive_seed(tcfg.seed, "init"));
    let mut shuffle_rng = seeded(derive_seed(tcfg.seed, "shuffle"));
    let mut dropout_rng = Some(seeded(derive_seed(tcfg.seed, "dropout")));
    let mut store = net.init(&mut init_rng);
    let mut opt = Adam::new(tcfg.lr_start, 0.9, 0.999);
    let targets: Vec<usize> = data.labels.iter().map(|l| l.index()).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(tcfg.epochs);
    for epoch in 0..tcfg.epochs {
        opt.lr = cosine_lr(tcfg.lr_start, tcfg.lr_end, epoch, tcfg.epochs);
        order.shuffle(&mut shuffle_rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut s = store.bind(true, true, dropout_rng.take());
            let logits = net.forward(&mut s, &gather(&data.epochs, batch));
            let t: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let mut loss = logits.cross_entropy(&t);
            let ce = loss.item();
            if tcfg.l1_coeff > 0.0 || tcfg.l2_coeff > 0.0 {
                for w in s.weight_vars(Pdnex::is_penalised) {
                    if tcfg.l1_coeff > 0.0 {
                        loss = loss.add(&w.abs().sum_all().scale(tcfg.l1_coeff));
                    }
                    if tcfg.l2_coeff > 0.0 {
                        loss = loss.add(&w.square().sum_all().scale(tcfg.l2_coeff));
                    }
                }
            }
            if !loss.item().is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    what: "classifier loss".into(),
                });
            }
            let grads = s.grads(&loss.backward());
            store.absorb_buffers(&s);
            dropout_rng = s.rng().cloned();
            opt.step(&mut store, &grads);
            total += ce * batch.len() as f64;
            seen += batch.len();
        }
        curve.push(total / seen as f64);
    }
    Ok(ClassifierModel {
        config: cfg,
        train: tcfg.clone(),
        channels: data.layout.names().to_vec(),
        store,
        loss_curve: curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricLevel {
    Epoch,
    SubjectMajority,
}

/// Classification scores with PD as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    /// `confusion[true][predicted]`, index 0 = HC, 1 = PD.
    pub confusion: [[usize; 2]; 2],
    pub level: MetricLevel,
}

impl Metrics {
    pub fn from_predictions(truth: &[Label], predicted: &[Label], level: MetricLevel) -> Result<Metrics> {
        if truth.is_empty() || truth.len() != predicted.len() {
            return Err(Error::Invalid("metrics need a non-empty, equal-length prediction list".into()));
        }
        let mut confusion = [[0usize; 2]; 2];
        for (t, p) in truth.iter().zip(predicted) {
            confusion[t.index()][p.index()] += 1;
        }
        Ok(Self::from_confusion(confusion, level))
    }

    pub fn from_confusion(confusion: [[usize; 2]; 2], level: MetricLevel) -> Metrics {
        let [[tn, fp], [fn_, tp]] = confusion;
        let total = tn + fp + fn_ + tp;
        let accuracy = (tp + tn) as f64 / total.max(1) as f64;
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
        Metrics {
            accuracy,
            f1,
            confusion,
            level,
        }
    }
}

/// Epoch-level metrics, plus subject-majority metrics when every epoch
/// carries a subject id. A subject's prediction is PD when its mean PD
/// probability exceeds one half.
pub fn evaluate(model: &ClassifierModel, data: &EpochSet) -> Result<(Metrics, Option<Metrics>)> {
    if data.is_empty() {
        return Err(Error::Invalid("no epochs to evaluate".into()));
    }
    let proba = model.predict_proba(data)?;
    let predicted: Vec<Label> = argmax_rows(&proba).into_iter().map(Label::from_index).collect();
    let epoch_level = Metrics::from_predictions(&data.labels, &predicted, MetricLevel::Epoch)?;
    if data.subjects.iter().any(Option::is_none) {
        return Ok((epoch_level, None));
    }
    let mut by_subject: BTreeMap<&str, (Label, f64, usize)> = BTreeMap::new();
    for (i, sid) in data.subjects.iter().enumerate() {
        let e = by_subject
            .entry(sid.as_deref().unwrap())
            .or_insert((data.labels[i], 0.0, 0));
        e.1 += proba[[i, Label::PD.index()]];
        e.2 += 1;
    }
    let (truth, pred): (Vec<Label>, Vec<Label>) = by_subject
        .values()
        .map(|&(l, p, n)| (l, if p / n as f64 > 0.5 { Label::PD } else { Label::HC }))
        .unzip();
    let subject_level = Metrics::from_predictions(&truth, &pred, MetricLevel::SubjectMajority)?;
    Ok((epoch_level, Some(subject_level)))
}
