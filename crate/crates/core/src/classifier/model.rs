use ndarray::{ArrayD, Axis, IxDyn};
use serde::{Deserialize, Serialize};

use crate::autograd::{ConvParams, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, Dropout, Init, Linear, ParamStore, Session};
use crate::rng::StageRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdnexConfig {
    pub n_channels: usize,
    pub n_samples: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub dilations: [usize; 2],
    pub n_classes: usize,
}

impl Default for PdnexConfig {
    fn default() -> Self {
        PdnexConfig {
            n_channels: 38,
            n_samples: 2500,
            batch_size: 8,
            dropout: 0.6,
            dilations: [2, 4],
            n_classes: 2,
        }
    }
}

pub const MIN_SAMPLES: usize = 64;
const POOL: usize = 4;
const TEMPORAL_KERNEL: usize = 32;
const SEPARABLE_KERNEL: usize = 8;

impl PdnexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(Error::Config("n_channels must be positive".into()));
        }
        if self.n_samples < MIN_SAMPLES {
            return Err(Error::Config(format!(
                "n_samples = {} is too short for three 1x4 poolings (need at least {MIN_SAMPLES})",
                self.n_samples
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} is outside [0, 1)", self.dropout)));
        }
        if self.dilations.contains(&0) {
            return Err(Error::Config("dilations must be positive integers".into()));
        }
        if self.batch_size == 0 || self.n_classes < 2 {
            return Err(Error::Config("batch_size must be positive and n_classes at least 2".into()));
        }
        Ok(())
    }

    /// Time-axis lengths after each of the three poolings.
    pub fn pooled_lengths(&self) -> [usize; 3] {
        let a = self.n_samples / POOL;
        let b = a / POOL;
        [a, b, b / POOL]
    }
}

/// Intermediate feature maps of one forward pass.
pub struct PdnexTrace {
    pub after_temporal: Var,
    pub after_depthwise: Var,
    pub after_block1: Var,
    pub after_block2: Var,
    pub after_block3: Var,
    pub logits: Var,
}

/// The compact classifier. Each epoch is viewed as a one-plane image of
/// `channels x samples`.
#[derive(Debug, Clone)]
pub struct Pdnex {
    pub cfg: PdnexConfig,
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    depthwise: Conv2d,
    bn3: BatchNorm2d,
    sep1_dw: Conv2d,
    sep1_pw: Conv2d,
    bn4: BatchNorm2d,
    sep2_dw: Conv2d,
    sep2_pw: Conv2d,
    bn5: BatchNorm2d,
    fc: Linear,
    dropout: Dropout,
}

impl Pdnex {
    pub fn new(cfg: &PdnexConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_channels;
        let [d1, d2] = cfg.dilations;
        let t = [1, TEMPORAL_KERNEL];
        let sk = [1, SEPARABLE_KERNEL];
        let flat = 2 * cfg.pooled_lengths()[2];
        Ok(Pdnex {
            cfg: cfg.clone(),
            conv1: Conv2d::new("conv1", 1, 4, t, ConvParams::same(t, [1, 1])).without_bias(),
            bn1: BatchNorm2d::new("bn1", 4),
            conv2: Conv2d::new("conv2", 4, 8, t, ConvParams::same(t, [1, 1])).without_bias(),
            bn2: BatchNorm2d::new("bn2", 8),
            depthwise: Conv2d::new("depthwise", 8, 16, [n, 1], ConvParams::valid().with_groups(8)).without_bias(),
            bn3: BatchNorm2d::new("bn3", 16),
            sep1_dw: Conv2d::new("sep1.depthwise", 16, 16, sk, ConvParams::same(sk, [1, d1]).with_groups(16))
                .without_bias(),
            sep1_pw: Conv2d::new("sep1.pointwise", 16, 8, [1, 1], ConvParams::valid()).without_bias(),
            bn4: BatchNorm2d::new("bn4", 8),
            sep2_dw: Conv2d::new("sep2.depthwise", 8, 8, sk, ConvParams::same(sk, [1, d2]).with_groups(8))
                .without_bias(),
            sep2_pw: Conv2d::new("sep2.pointwise", 8, 2, [1, 1], ConvParams::valid()).without_bias(),
            bn5: BatchNorm2d::new("bn5", 2),
            fc: Linear::new("fc", flat, cfg.n_classes),
            dropout: Dropout { rate: cfg.dropout },
        })
    }

    /// Kaiming-normal weights, zero biases, unit/zero batch-norm affine.
    pub fn init(&self, rng: &mut StageRng) -> ParamStore {
        let mut s = ParamStore::new();
        for c in [
            &self.conv1,
            &self.conv2,
            &self.depthwise,
            &self.sep1_dw,
            &self.sep1_pw,
            &self.sep2_dw,
            &self.sep2_pw,
        ] {
            c.init(&mut s, Init::KaimingNormal, rng);
        }
        for bn in [&self.bn1, &self.bn2, &self.bn3, &self.bn4, &self.bn5] {
            bn.init(&mut s);
        }
        self.fc.init(&mut s, Init::KaimingNormal, rng);
        s
    }

    /// Names of the tensors the L1/L2 penalties apply to: convolution and
    /// fully connected weights, not batch-norm scales.
    pub fn is_penalised(name: &str) -> bool {
        name.ends_with(".weight") && !name.starts_with("bn")
    }

    /// Forward pass on `[B, N, M]` epochs.
    pub fn forward(&self, s: &mut Session, x: &Var) -> Var {
        self.forward_trace(s, x).logits
    }

    pub fn forward_trace(&self, s: &mut Session, x: &Var) -> PdnexTrace {
        let sh = x.shape().to_vec();
        assert_eq!(sh.len(), 3, "expected [batch, channels, samples]");
        let (b, n, m) = (sh[0], sh[1], sh[2]);
        assert_eq!(n, self.cfg.n_channels, "channel count mismatch");
        assert_eq!(m, self.cfg.n_samples, "sample count mismatch");
        let x = x.reshape(&[b, 1, n, m]);
        let h = self.bn1.forward(s, &self.conv1.forward(s, &x)).elu();
        let after_temporal = self.bn2.forward(s, &self.conv2.forward(s, &h)).elu();
        let after_depthwise = self.bn3.forward(s, &self.depthwise.forward(s, &after_temporal)).elu();
        let after_block1 = self.dropout.forward(s, &after_depthwise.avg_pool2d([1, POOL]));
        let h = self.sep1_pw.forward(s, &self.sep1_dw.forward(s, &after_block1));
        let h = self.bn4.forward(s, &h).elu().avg_pool2d([1, POOL]);
        let after_block2 = self.dropout.forward(s, &h);
        let h = self.sep2_pw.forward(s, &self.sep2_dw.forward(s, &after_block2));
        let h = self.bn5.forward(s, &h).elu().avg_pool2d([1, POOL]);
        let after_block3 = self.dropout.forward(s, &h);
        let flat = after_block3.reshape(&[b, self.fc.in_features]);
        let logits = self.fc.forward(s, &flat);
        PdnexTrace {
            after_temporal,
            after_depthwise,
            after_block1,
            after_block2,
            after_block3,
            logits,
        }
    }

    /// Evaluation-mode logits for `[B, N, M]` epochs, in chunks of
    /// `batch_size`.
    pub fn logits(&self, store: &ParamStore, epochs: &ndarray::Array3<f64>) -> ArrayD<f64> {
        let n = epochs.dim().0;
        let k = self.cfg.n_classes;
        let mut out = ArrayD::zeros(IxDyn(&[n, k]));
        let bs = self.cfg.batch_size.max(1);
        for start in (0..n).step_by(bs) {
            let end = (start + bs).min(n);
            let x = epochs.slice(ndarray::s![start..end, .., ..]).to_owned().into_dyn();
            let mut s = store.bind(false, false, None);
            let y = self.forward(&mut s, &Var::constant(x));
            out.slice_mut(ndarray::s![start..end, ..]).assign(y.value());
        }
        out
    }
}

/// Row-wise softmax of `[N, K]` logits.
pub fn softmax(logits: &ArrayD<f64>) -> ArrayD<f64> {
    let mut p = logits.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    p
}
