use serde::{Deserialize, Serialize};

use crate::autograd::{ConvParams, Var};
use crate::error::{Error, Result};
use crate::nn::{Cbam, Conv2d, ConvTranspose2d, Init, Linear, ParamStore, Session};
use crate::rng::StageRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    StandardNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub dimension: usize,
    pub distribution: NoiseDistribution,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            dimension: 128,
            distribution: NoiseDistribution::StandardNormal,
        }
    }
}

/// How the critic is kept approximately 1-Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Lipschitz {
    WeightClip { c: f64 },
    GradientPenalty { lambda: f64 },
}

impl Default for Lipschitz {
    fn default() -> Self {
        Lipschitz::WeightClip { c: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub channels: usize,
    pub samples: usize,
    pub noise: NoiseSpec,
    pub generator_lr: f64,
    pub critic_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lipschitz: Lipschitz,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub critic_steps: usize,
    /// Width of the first feature map; halved by each of the first two
    /// upsampling layers.
    pub base_filters: usize,
    pub convergence_window: usize,
    pub convergence_tolerance: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            channels: 60,
            samples: 2500,
            noise: NoiseSpec::default(),
            generator_lr: 1e-3,
            critic_lr: 1e-4,
            epochs: 2000,
            batch_size: 8,
            lipschitz: Lipschitz::default(),
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            critic_steps: 5,
            base_filters: 64,
            convergence_window: 50,
            convergence_tolerance: 0.01,
        }
    }
}

pub const MIN_GAN_SAMPLES: usize = 8;
const LEAK: f64 = 0.2;
const OUTPUT_SCALE: f64 = 4.0;

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("GAN channel count must be positive".into()));
        }
        if self.samples < MIN_GAN_SAMPLES {
            return Err(Error::Config(format!(
                "{} samples cannot be reached by three stride-2 upsamplings (need at least {MIN_GAN_SAMPLES})",
                self.samples
            )));
        }
        if self.noise.dimension == 0 {
            return Err(Error::Config("noise dimension must be positive".into()));
        }
        if !(self.generator_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.critic_steps == 0 {
            return Err(Error::Config("epochs, batch_size and critic_steps must be positive".into()));
        }
        if self.base_filters < 4 {
            return Err(Error::Config("base_filters must be at least 4".into()));
        }
        if self.convergence_window < 2 || self.convergence_tolerance <= 0.0 {
            return Err(Error::Config("convergence window must be >= 2 and tolerance > 0".into()));
        }
        match self.lipschitz {
            Lipschitz::WeightClip { c } if c <= 0.0 => {
                Err(Error::Config(format!("clip value must be positive, got {c}")))
            }
            Lipschitz::GradientPenalty { lambda } if lambda < 0.0 => {
                Err(Error::Config(format!("penalty weight must be non-negative, got {lambda}")))
            }
            _ => Ok(()),
        }
    }

    /// Time lengths of the seed map and after each upsampling, ending at
    /// `samples`, plus the output padding each layer needs.
    pub fn upsampling_chain(&self) -> ([usize; 4], [usize; 3]) {
        let l3 = self.samples;
        let l2 = l3 / 2;
        let l1 = l2 / 2;
        let l0 = l1 / 2;
        ([l0, l1, l2, l3], [l1 % 2, l2 % 2, l3 % 2])
    }
}

fn upsample(prefix: &str, cin: usize, cout: usize, output_padding: usize) -> ConvTranspose2d {
    ConvTranspose2d {
        prefix: prefix.into(),
        in_channels: cin,
        out_channels: cout,
        kernel: [1, 4],
        params: ConvParams::valid().with_stride([1, 2]).with_padding([0, 0, 1, 1]),
        output_padding: [0, output_padding],
    }
}

/// Noise `[B, d]` to epochs `[B, channels, 1, samples]`.
#[derive(Debug, Clone)]
pub struct Generator {
    pub cfg: GanConfig,
    project: Linear,
    up: [ConvTranspose2d; 3],
    cbam: Cbam,
    seed_len: usize,
}

impl Generator {
    pub fn new(cfg: &GanConfig) -> Result<Self> {
        cfg.validate()?;
        let f = cfg.base_filters;
        let (lens, pads) = cfg.upsampling_chain();
        Ok(Generator {
            cfg: cfg.clone(),
            project: Linear::new("gen.project", cfg.noise.dimension, f * lens[0]),
            up: [
                upsample("gen.up1", f, f / 2, pads[0]),
                upsample("gen.up2", f / 2, f / 4, pads[1]),
                upsample("gen.up3", f / 4, cfg.channels, pads[2]),
            ],
            cbam: Cbam::new("gen.cbam", cfg.channels, 4, [1, 7]),
            seed_len: lens[0],
        })
    }

    pub fn init(&self, rng: &mut StageRng) -> ParamStore {
        let mut s = ParamStore::new();
        self.project.init(&mut s, Init::FanInUniform, rng);
        for u in &self.up {
            u.init(&mut s, Init::FanInUniform, rng);
        }
        self.cbam.init(&mut s, rng);
        s
    }

    pub fn forward(&self, s: &Session, noise: &Var) -> Var {
        let b = noise.shape()[0];
        let mut h = self
            .project
            .forward(s, noise)
            .reshape(&[b, self.cfg.base_filters, 1, self.seed_len])
            .leaky_relu(LEAK);
        for (i, u) in self.up.iter().enumerate() {
            h = u.forward(s, &h);
            if i < 2 {
                h = h.leaky_relu(LEAK);
            }
        }
        self.cbam.forward(s, &h).tanh().scale(OUTPUT_SCALE)
    }
}

/// Epochs `[B, channels, 1, samples]` to unbounded scores `[B, 1]`.
#[derive(Debug, Clone)]
pub struct Critic {
    pub cfg: GanConfig,
    conv1: Conv2d,
    conv2: Conv2d,
    cbam: Cbam,
    head: Linear,
}

fn strided(prefix: &str, cin: usize, cout: usize) -> Conv2d {
    Conv2d::new(
        prefix,
        cin,
        cout,
        [1, 5],
        ConvParams::valid().with_stride([1, 2]).with_padding([0, 0, 2, 2]),
    )
}

impl Critic {
    pub fn new(cfg: &GanConfig) -> Result<Self> {
        cfg.validate()?;
        let l = cfg.samples.div_ceil(2).div_ceil(2);
        Ok(Critic {
            cfg: cfg.clone(),
            conv1: strided("critic.conv1", cfg.channels, 32),
            conv2: strided("critic.conv2", 32, 64),
            cbam: Cbam::new("critic.cbam", 64, 8, [1, 7]),
            head: Linear::new("critic.head", 64 * l, 1),
        })
    }

    pub fn init(&self, rng: &mut StageRng) -> ParamStore {
        let mut s = ParamStore::new();
        self.conv1.init(&mut s, Init::FanInUniform, rng);
        self.conv2.init(&mut s, Init::FanInUniform, rng);
        self.cbam.init(&mut s, rng);
        self.head.init(&mut s, Init::FanInUniform, rng);
        s
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Var {
        let b = x.shape()[0];
        let h = self.conv1.forward(s, x).leaky_relu(LEAK);
        let h = self.conv2.forward(s, &h).leaky_relu(LEAK);
        let h = self.cbam.forward(s, &h);
        let flat = h.reshape(&[b, self.head.in_features]);
        self.head.forward(s, &flat)
    }
}

/// `mean(fake) - mean(real)`, the critic's minimisation target without
/// penalty.
pub fn critic_loss(real_scores: &Var, fake_scores: &Var) -> Var {
    fake_scores.mean_all().sub(&real_scores.mean_all())
}

/// `-mean(fake)`.
pub fn generator_loss(fake_scores: &Var) -> Var {
    fake_scores.mean_all().neg()
}
