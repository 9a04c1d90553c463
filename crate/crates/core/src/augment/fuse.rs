use ndarray::{s, Array3};
use serde::{Deserialize, Serialize};

use super::model::Generator;
use super::train::{noise, GanCheckpoint};
use crate::dataio::{ChannelLayout, EpochSet, Label, Provenance};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// Draws `count` epochs from a checkpoint's generator. Labels follow the
/// checkpoint's group; subjects are left empty.
pub fn generate(ckpt: &GanCheckpoint, count: usize, seed: u64) -> Result<EpochSet> {
    if count == 0 {
        return Err(Error::Invalid("generate needs a positive count".into()));
    }
    let generator = Generator::new(&ckpt.config)?;
    let (c, m) = (ckpt.config.channels, ckpt.config.samples);
    let mut rng = seeded(seed);
    let mut out = Array3::zeros((count, c, m));
    let bs = ckpt.config.batch_size.max(1);
    for start in (0..count).step_by(bs) {
        let end = (start + bs).min(count);
        let s = ckpt.generator.bind(false, false, None);
        let y = generator.forward(&s, &noise(&mut rng, end - start, ckpt.config.noise.dimension));
        let y = y
            .value()
            .view()
            .into_shape_with_order((end - start, c, m))
            .expect("generator output is [B, C, 1, S]");
        out.slice_mut(s![start..end, .., ..]).assign(&y);
    }
    EpochSet::new(
        out,
        vec![ckpt.group; count],
        vec![Provenance::Generated; count],
        vec![None; count],
        ChannelLayout::new(ckpt.channels.clone(), None)?,
        ckpt.epoch_length_s,
        ckpt.sampling_rate,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSpec {
    /// Generated-to-real ratio.
    pub delta: f64,
    pub seed: u64,
}

impl FusionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }

    /// Generated epochs to add for `real_count` real epochs of one class.
    pub fn generated_count(&self, real_count: usize) -> usize {
        (self.delta * real_count as f64).round() as usize
    }
}

fn check_compatible(real: &EpochSet, ck: &GanCheckpoint, expected: Label) -> Result<()> {
    if ck.group != expected {
        return Err(Error::Invalid(format!("expected a {expected} checkpoint, got {}", ck.group)));
    }
    if ck.channels.as_slice() != real.layout.names() || ck.config.samples != real.n_samples() {
        return Err(Error::Invalid(format!(
            "{expected} checkpoint shape ({} x {}) does not match the real epochs ({} x {})",
            ck.channels.len(),
            ck.config.samples,
            real.n_channels(),
            real.n_samples()
        )));
    }
    Ok(())
}

/// Real epochs followed by `round(delta * n_real)` generated epochs per
/// class. The real part is copied unchanged.
pub fn fuse(real: &EpochSet, hc: &GanCheckpoint, pd: &GanCheckpoint, spec: &FusionSpec) -> Result<EpochSet> {
    spec.validate()?;
    check_compatible(real, hc, Label::HC)?;
    check_compatible(real, pd, Label::PD)?;
    let mut parts = vec![real.clone()];
    for (ck, tag) in [(hc, "fuse-hc"), (pd, "fuse-pd")] {
        let n = spec.generated_count(real.count(ck.group, Provenance::Real));
        if n > 0 {
            let mut g = generate(ck, n, derive_seed(spec.seed, tag))?;
            g.layout = real.layout.clone();
            parts.push(g);
        }
    }
    EpochSet::concat(&parts.iter().collect::<Vec<_>>())
}
