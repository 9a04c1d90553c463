use std::path::Path;

use ndarray::{s, Array3, ArrayD, Axis, IxDyn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autograd::{smooth_l1_elem, Var};
use crate::checkpoint::Checkpoint;
use crate::dataio::{EpochSet, Provenance};
use crate::error::{Error, Result};
use crate::nn::{Adam, Init, Linear, Lstm, ParamStore, Session};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub hidden_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Keep every `decimate`-th sample of an epoch before encoding. 1 uses
    /// the full sequence.
    pub decimate: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            hidden_size: 64,
            epochs: 200,
            batch_size: 8,
            learning_rate: 1e-3,
            decimate: 1,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.epochs == 0 || self.batch_size == 0 || self.decimate == 0 {
            return Err(Error::Config(
                "autoencoder hidden_size, epochs, batch_size and decimate must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("autoencoder learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Bidirectional LSTM encoder, LSTM decoder and a linear read-out, applied
/// time-major: every time step is a vector over channels.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub channels: usize,
    pub hidden: usize,
    forward_enc: Lstm,
    backward_enc: Lstm,
    decoder: Lstm,
    output: Linear,
}

impl Autoencoder {
    pub fn new(cfg: &AutoencoderConfig, channels: usize) -> Result<Self> {
        cfg.validate()?;
        if channels == 0 {
            return Err(Error::Config("autoencoder needs at least one channel".into()));
        }
        let h = cfg.hidden_size;
        Ok(Autoencoder {
            channels,
            hidden: h,
            forward_enc: Lstm::new("enc.fwd", channels, h),
            backward_enc: Lstm::new("enc.bwd", channels, h),
            decoder: Lstm::new("dec", 2 * h, h),
            output: Linear::new("out", h, channels),
        })
    }

    pub fn init(&self, rng: &mut crate::rng::StageRng) -> ParamStore {
        let mut s = ParamStore::new();
        self.forward_enc.init(&mut s, rng);
        self.backward_enc.init(&mut s, rng);
        self.decoder.init(&mut s, rng);
        self.output.init(&mut s, Init::FanInUniform, rng);
        s
    }

    fn steps(x: &Array3<f64>) -> Vec<Var> {
        (0..x.dim().2)
            .map(|t| Var::constant(x.index_axis(Axis(2), t).to_owned().into_dyn()))
            .collect()
    }

    /// Encoder states per step for `[B, C, T]` input, `[T][B, 2H]`.
    pub fn encode(&self, s: &Session, x: &Array3<f64>) -> Vec<Var> {
        let steps = Self::steps(x);
        let f = self.forward_enc.forward(s, &steps, false);
        let b = self.backward_enc.forward(s, &steps, true);
        f.iter().zip(&b).map(|(f, b)| Var::concat(&[f.clone(), b.clone()], 1)).collect()
    }

    /// Reconstruction as a time-major `[T * B, C]` stack.
    pub fn forward(&self, s: &Session, x: &Array3<f64>) -> Var {
        let encoded = self.encode(s, x);
        let decoded = self.decoder.forward(s, &encoded, false);
        self.output.forward(s, &Var::concat(&decoded, 0))
    }

    /// `[B, C, T]` epochs in the time-major `[T * B, C]` layout of
    /// [`Autoencoder::forward`].
    pub fn time_major(x: &Array3<f64>) -> ArrayD<f64> {
        let (b, c, t) = x.dim();
        x.view()
            .permuted_axes([2, 0, 1])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(&[t * b, c]))
            .expect("standard layout")
    }

    /// Reconstruction of `[B, C, T]` epochs, same layout.
    pub fn reconstruct(&self, store: &ParamStore, x: &Array3<f64>) -> Array3<f64> {
        let (b, c, t) = x.dim();
        let s = store.bind(false, false, None);
        let y = self.forward(&s, x).value().clone();
        y.into_shape_with_order((t, b, c))
            .expect("reconstruction is [T * B, C]")
            .permuted_axes([1, 2, 0])
            .as_standard_layout()
            .into_owned()
    }
}

/// A trained autoencoder with the data shape it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub config: AutoencoderConfig,
    pub channels: Vec<String>,
    pub samples: usize,
    pub store: ParamStore,
    pub loss_curve: Vec<f64>,
}

pub const AUTOENCODER_KIND: &str = "autoencoder";

#[derive(Serialize, Deserialize)]
struct Meta {
    config: AutoencoderConfig,
    channels: Vec<String>,
    samples: usize,
    loss_curve: Vec<f64>,
}

fn decimated(epochs: &Array3<f64>, k: usize) -> Array3<f64> {
    epochs.slice(s![.., .., ..;k]).to_owned()
}

impl AutoencoderModel {
    pub fn network(&self) -> Result<Autoencoder> {
        Autoencoder::new(&self.config, self.channels.len())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Meta {
            config: self.config.clone(),
            channels: self.channels.clone(),
            samples: self.samples,
            loss_curve: self.loss_curve.clone(),
        };
        let mut ck = Checkpoint::new(AUTOENCODER_KIND, serde_json::to_value(meta).expect("metadata serialises"));
        ck.insert_store("net", &self.store);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(AUTOENCODER_KIND)?;
        let m: Meta = ck.meta_as()?;
        Ok(AutoencoderModel {
            config: m.config,
            channels: m.channels,
            samples: m.samples,
            store: ck.store("net"),
            loss_curve: m.loss_curve,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Mean smooth-L1 reconstruction loss of every epoch.
    pub fn epoch_losses(&self, data: &EpochSet) -> Result<Vec<f64>> {
        if data.layout.names() != self.channels.as_slice() || data.n_samples() != self.samples {
            return Err(Error::Invalid(format!(
                "epochs are {} x {}, the autoencoder expects {} x {}",
                data.n_channels(),
                data.n_samples(),
                self.channels.len(),
                self.samples
            )));
        }
        let net = self.network()?;
        let x = decimated(&data.epochs, self.config.decimate);
        let bs = self.config.batch_size;
        let chunks: Vec<usize> = (0..data.len()).step_by(bs).collect();
        use rayon::prelude::*;
        let parts: Vec<Vec<f64>> = chunks
            .par_iter()
            .map(|&start| {
                let end = (start + bs).min(x.dim().0);
                let batch = x.slice(s![start..end, .., ..]).to_owned();
                let rec = net.reconstruct(&self.store, &batch);
                rec.outer_iter()
                    .zip(batch.outer_iter())
                    .map(|(r, o)| {
                        let n = r.len() as f64;
                        r.iter().zip(o.iter()).map(|(a, b)| smooth_l1_elem(a - b)).sum::<f64>() / n
                    })
                    .collect()
            })
            .collect();
        Ok(parts.concat())
    }
}

/// Fits the autoencoder to real epochs by minimising smooth-L1
/// reconstruction loss.
pub fn train_autoencoder(real: &EpochSet, cfg: &AutoencoderConfig, seed: u64) -> Result<AutoencoderModel> {
    let net = Autoencoder::new(cfg, real.n_channels())?;
    if real.is_empty() {
        return Err(Error::Invalid("no epochs to train the autoencoder on".into()));
    }
    if real.provenance.iter().any(|&p| p != Provenance::Real) {
        return Err(Error::Invalid("the autoencoder is trained on real epochs only".into()));
    }
    let x = decimated(&real.epochs, cfg.decimate);
    let mut store = net.init(&mut seeded(derive_seed(seed, "init")));
    let mut shuffle = seeded(derive_seed(seed, "shuffle"));
    let mut opt = Adam::new(cfg.learning_rate, 0.9, 0.999);
    let mut order: Vec<usize> = (0..real.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut total, mut seen) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let s = store.bind(true, true, None);
            let loss = net.forward(&s, &xb).smooth_l1(&Autoencoder::time_major(&xb));
            let v = loss.item();
            if !v.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    what: "autoencoder loss".into(),
                });
            }
            opt.step(&mut store, &s.grads(&loss.backward()));
            total += v * batch.len() as f64;
            seen += batch.len();
        }
        curve.push(total / seen as f64);
    }
    Ok(AutoencoderModel {
        config: cfg.clone(),
        channels: real.layout.names().to_vec(),
        samples: real.n_samples(),
        store,
        loss_curve: curve,
    })
}
