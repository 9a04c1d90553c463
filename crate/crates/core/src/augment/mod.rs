//! Per-group Wasserstein GANs that synthesise epochs, and fusion of the
//! generated epochs with the real ones.
//!
//! The generator projects a noise vector to a short feature map, upsamples
//! it with three transposed convolutions and refines it with a CBAM block.
//! The critic is two strided convolutions, a CBAM block and a linear score.

mod fuse;
mod model;
mod train;

pub use fuse::{fuse, generate, FusionSpec};
pub use model::{
    critic_loss, generator_loss, Critic, GanConfig, Generator, Lipschitz, NoiseDistribution, NoiseSpec,
    MIN_GAN_SAMPLES,
};
pub use train::{gradient_penalty, input_gradient, train_gan, GanCheckpoint, TrainingCurves, GAN_KIND, GP_STEP};

#[cfg(test)]
mod tests;
