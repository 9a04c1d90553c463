use ndarray::{ArrayD, IxDyn};
use rand::Rng;

use super::{kaiming_normal, uniform_fan_in, ParamStore, Session};
use crate::autograd::{ConvParams, Var};
use crate::rng::StageRng;

/// Weight initialisation scheme. Biases always start at zero under
/// `KaimingNormal` and fan-in uniform otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// He/Kaiming normal, fan-in mode, ReLU gain.
    KaimingNormal,
    /// Uniform in `±1/sqrt(fan_in)`.
    FanInUniform,
}

fn init_weight(init: Init, shape: &[usize], fan_in: usize, rng: &mut StageRng) -> ArrayD<f64> {
    match init {
        Init::KaimingNormal => kaiming_normal(shape, fan_in, rng),
        Init::FanInUniform => uniform_fan_in(shape, fan_in, rng),
    }
}

fn init_bias(init: Init, len: usize, fan_in: usize, rng: &mut StageRng) -> ArrayD<f64> {
    match init {
        Init::KaimingNormal => ArrayD::zeros(IxDyn(&[len])),
        Init::FanInUniform => uniform_fan_in(&[len], fan_in, rng),
    }
}

/// Affine map `y = x W^T + b` on `[N, in]` inputs.
#[derive(Debug, Clone)]
pub struct Linear {
    pub prefix: String,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(prefix: impl Into<String>, in_features: usize, out_features: usize) -> Self {
        Linear {
            prefix: prefix.into(),
            in_features,
            out_features,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, init: Init, rng: &mut StageRng) {
        let w = init_weight(init, &[self.out_features, self.in_features], self.in_features, rng);
        let b = init_bias(init, self.out_features, self.in_features, rng);
        store.insert_param(self.weight_name(), w);
        store.insert_param(self.bias_name(), b);
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Var {
        let w = s.var(&self.weight_name());
        let b = s.var(&self.bias_name());
        x.matmul(&w.t()).add(b)
    }
}

/// 2-D convolution layer with bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub prefix: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 2],
    pub params: ConvParams,
    pub bias: bool,
}

impl Conv2d {
    pub fn new(
        prefix: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        params: ConvParams,
    ) -> Self {
        Conv2d {
            prefix: prefix.into(),
            in_channels,
            out_channels,
            kernel,
            params,
            bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    fn fan_in(&self) -> usize {
        self.in_channels / self.params.groups * self.kernel[0] * self.kernel[1]
    }

    pub fn init(&self, store: &mut ParamStore, init: Init, rng: &mut StageRng) {
        let shape = [
            self.out_channels,
            self.in_channels / self.params.groups,
            self.kernel[0],
            self.kernel[1],
        ];
        store.insert_param(self.weight_name(), init_weight(init, &shape, self.fan_in(), rng));
        if self.bias {
            store.insert_param(self.bias_name(), init_bias(init, self.out_channels, self.fan_in(), rng));
        }
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Var {
        let w = s.var(&self.weight_name());
        let b = self.bias.then(|| s.var(&self.bias_name()));
        x.conv2d(w, b, self.params)
    }
}

/// Transposed 2-D convolution layer with bias; weight `[in, out/groups, kh, kw]`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub prefix: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 2],
    pub params: ConvParams,
    pub output_padding: [usize; 2],
}

impl ConvTranspose2d {
    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, init: Init, rng: &mut StageRng) {
        let shape = [
            self.in_channels,
            self.out_channels / self.params.groups,
            self.kernel[0],
            self.kernel[1],
        ];
        // PyTorch computes the fan from dim 1 for transposed convolutions.
        let fan_in = shape[1] * self.kernel[0] * self.kernel[1];
        store.insert_param(self.weight_name(), init_weight(init, &shape, fan_in, rng));
        store.insert_param(self.bias_name(), init_bias(init, self.out_channels, fan_in, rng));
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Var {
        let w = s.var(&self.weight_name());
        let b = s.var(&self.bias_name());
        x.conv_transpose2d(w, Some(b), self.params, self.output_padding)
    }
}

/// Batch normalisation over the channel axis of `[B, C, H, W]`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub prefix: String,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm2d {
    pub fn new(prefix: impl Into<String>, channels: usize) -> Self {
        BatchNorm2d {
            prefix: prefix.into(),
            channels,
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore) {
        let c = self.channels;
        store.insert_param(self.name("weight"), ArrayD::ones(IxDyn(&[c])));
        store.insert_param(self.name("bias"), ArrayD::zeros(IxDyn(&[c])));
        store.insert_buffer(self.name("running_mean"), ArrayD::zeros(IxDyn(&[c])));
        store.insert_buffer(self.name("running_var"), ArrayD::ones(IxDyn(&[c])));
    }

    pub fn forward(&self, s: &mut Session, x: &Var) -> Var {
        let gamma = s.var(&self.name("weight")).clone();
        let beta = s.var(&self.name("bias")).clone();
        let c = self.channels;
        if s.train {
            let (y, mean, var) = x.batch_norm2d(&gamma, &beta, self.eps);
            let sh = x.shape();
            let n = (sh[0] * sh[2] * sh[3]) as f64;
            let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            let m = self.momentum;
            let rm = s.buffer(&self.name("running_mean")).clone();
            let rv = s.buffer(&self.name("running_var")).clone();
            let rm = ArrayD::from_shape_fn(IxDyn(&[c]), |i| (1.0 - m) * rm[[i[0]]] + m * mean[i[0]]);
            let rv = ArrayD::from_shape_fn(IxDyn(&[c]), |i| (1.0 - m) * rv[[i[0]]] + m * var[i[0]] * unbias);
            s.set_buffer(&self.name("running_mean"), rm);
            s.set_buffer(&self.name("running_var"), rv);
            y
        } else {
            let rm = s.buffer(&self.name("running_mean"));
            let rv = s.buffer(&self.name("running_var"));
            let mean = Var::constant(rm.clone().into_shape_with_order(IxDyn(&[1, c, 1, 1])).unwrap());
            let inv_std = Var::constant(
                rv.mapv(|v| 1.0 / (v + self.eps).sqrt())
                    .into_shape_with_order(IxDyn(&[1, c, 1, 1]))
                    .unwrap(),
            );
            x.sub(&mean)
                .mul(&inv_std)
                .mul(&gamma.reshape(&[1, c, 1, 1]))
                .add(&beta.reshape(&[1, c, 1, 1]))
        }
    }
}

/// Inverted dropout; identity outside training.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn forward(&self, s: &mut Session, x: &Var) -> Var {
        if !s.train || self.rate <= 0.0 {
            return x.clone();
        }
        let keep = 1.0 - self.rate;
        let rng = s.rng().expect("training session needs an rng for dropout");
        let mask = ArrayD::from_shape_fn(x.value().raw_dim(), |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        x.mul(&Var::constant(mask))
    }
}
