use super::{Conv2d, Init, Linear, ParamStore, Session};
use crate::autograd::{ConvParams, Var};
use crate::rng::StageRng;

/// Convolutional block attention: channel attention from a shared MLP over
/// average- and max-pooled descriptors, then spatial attention from a
/// convolution over the channel-pooled maps. Both gates are sigmoids, so the
/// block only rescales its input.
#[derive(Debug, Clone)]
pub struct Cbam {
    pub channels: usize,
    fc1: Linear,
    fc2: Linear,
    spatial: Conv2d,
}

/// Output of [`Cbam::forward_with_attention`].
pub struct CbamOutput {
    pub output: Var,
    /// `[B, C, 1, 1]`
    pub channel_attention: Var,
    /// `[B, 1, H, W]`
    pub spatial_attention: Var,
}

impl Cbam {
    /// `reduction` divides the channel count for the MLP bottleneck (floored
    /// at one unit); `spatial_kernel` should be odd on both axes.
    pub fn new(prefix: &str, channels: usize, reduction: usize, spatial_kernel: [usize; 2]) -> Self {
        let hidden = (channels / reduction.max(1)).max(1);
        Cbam {
            channels,
            fc1: Linear::new(format!("{prefix}.mlp1"), channels, hidden),
            fc2: Linear::new(format!("{prefix}.mlp2"), hidden, channels),
            spatial: Conv2d::new(
                format!("{prefix}.spatial"),
                2,
                1,
                spatial_kernel,
                ConvParams::same(spatial_kernel, [1, 1]),
            ),
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut StageRng) {
        self.fc1.init(store, Init::FanInUniform, rng);
        self.fc2.init(store, Init::FanInUniform, rng);
        self.spatial.init(store, Init::FanInUniform, rng);
    }

    /// Names of the biases feeding the two sigmoid gates.
    pub fn gate_bias_names(&self) -> [String; 2] {
        [self.fc2.bias_name(), self.spatial.bias_name()]
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Var {
        self.forward_with_attention(s, x).output
    }

    pub fn forward_with_attention(&self, s: &Session, x: &Var) -> CbamOutput {
        let sh = x.shape().to_vec();
        assert_eq!(sh.len(), 4, "CBAM expects [B, C, H, W]");
        assert_eq!(sh[1], self.channels, "CBAM channel count mismatch");
        let (b, c) = (sh[0], sh[1]);
        let avg = x.mean_axis_keep(3).mean_axis_keep(2).reshape(&[b, c]);
        let max = x.max_axis_keep(3).max_axis_keep(2).reshape(&[b, c]);
        let mlp = |v: &Var| self.fc2.forward(s, &self.fc1.forward(s, v).relu());
        // The second layer's bias enters both branches, as in the reference
        // block where the MLP is applied twice and summed.
        let channel_attention = mlp(&avg).add(&mlp(&max)).sigmoid().reshape(&[b, c, 1, 1]);
        let refined = x.mul(&channel_attention);
        let pooled = Var::concat(&[refined.mean_axis_keep(1), refined.max_axis_keep(1)], 1);
        let spatial_attention = self.spatial.forward(s, &pooled).sigmoid();
        CbamOutput {
            output: refined.mul(&spatial_attention),
            channel_attention,
            spatial_attention,
        }
    }
}
