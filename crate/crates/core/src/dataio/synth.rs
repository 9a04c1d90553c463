//! Synthetic EEG populations for tests and demos.
//!
//! Each channel is an AR(1) background plus an alpha rhythm. PD subjects
//! carry an extra rhythm on the declared discriminative channels. A site
//! block models acquisition differences: overall gain, noise level, a
//! frequency offset on every rhythm and an artifact that hits only the
//! non-discriminative channels.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{ChannelLayout, Label, Recording};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, standard_normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiteShift {
    pub gain: f64,
    pub noise_scale: f64,
    pub freq_shift_hz: f64,
    /// Peak amplitude of the artifact; each subject draws its own level
    /// uniformly from `[0, artifact_amplitude]`.
    pub artifact_amplitude: f64,
    pub artifact_hz: f64,
}

impl Default for SiteShift {
    fn default() -> Self {
        SiteShift {
            gain: 1.0,
            noise_scale: 1.0,
            freq_shift_hz: 0.0,
            artifact_amplitude: 0.0,
            artifact_hz: 22.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub name: String,
    pub n_channels: usize,
    /// Explicit channel names; numbered names are used when empty.
    pub channel_names: Vec<String>,
    pub n_hc: usize,
    pub n_pd: usize,
    pub duration_s: f64,
    pub sampling_rate: f64,
    /// Indices of the channels that carry the PD rhythm.
    pub discriminative: Vec<usize>,
    pub ar_coeff: f64,
    pub noise_std: f64,
    pub alpha_hz: f64,
    pub alpha_amplitude: f64,
    pub pd_hz: f64,
    /// Amplitude of the PD rhythm; zero gives two indistinguishable groups.
    pub pd_amplitude: f64,
    /// Relative weight of the rhythm's second harmonic, which makes the
    /// amplitude distribution asymmetric.
    pub pd_harmonic: f64,
    pub subject_prefix: String,
    pub site: SiteShift,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            name: "synthetic".into(),
            n_channels: 20,
            channel_names: Vec::new(),
            n_hc: 8,
            n_pd: 8,
            duration_s: 30.0,
            sampling_rate: 500.0,
            discriminative: (0..10).collect(),
            ar_coeff: 0.95,
            noise_std: 1.0,
            alpha_hz: 10.0,
            alpha_amplitude: 1.5,
            pd_hz: 6.0,
            pd_amplitude: 3.0,
            pd_harmonic: 0.6,
            subject_prefix: "sub".into(),
            site: SiteShift::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.n_channels == 0 {
            return bad("n_channels must be positive".into());
        }
        if !self.channel_names.is_empty() && self.channel_names.len() != self.n_channels {
            return bad(format!(
                "{} channel names for {} channels",
                self.channel_names.len(),
                self.n_channels
            ));
        }
        if !(self.sampling_rate > 0.0) || !(self.duration_s > 0.0) {
            return bad("sampling_rate and duration_s must be positive".into());
        }
        if !(self.ar_coeff.abs() < 1.0) {
            return bad("ar_coeff must lie in (-1, 1)".into());
        }
        if let Some(&c) = self.discriminative.iter().find(|&&c| c >= self.n_channels) {
            return bad(format!("discriminative channel {c} out of range"));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("alpha_amplitude", self.alpha_amplitude),
            ("pd_amplitude", self.pd_amplitude),
            ("site.gain", self.site.gain),
            ("site.noise_scale", self.site.noise_scale),
            ("site.artifact_amplitude", self.site.artifact_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number"));
            }
        }
        let nyquist = self.sampling_rate / 2.0;
        for (name, f) in [
            ("alpha_hz", self.alpha_hz + self.site.freq_shift_hz),
            ("pd_hz", self.pd_hz + self.site.freq_shift_hz),
            ("site.artifact_hz", self.site.artifact_hz),
        ] {
            if !(f > 0.0 && f < nyquist) {
                return bad(format!("{name} (after site shift) must lie in (0, {nyquist}) Hz"));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<ChannelLayout> {
        if self.channel_names.is_empty() {
            Ok(ChannelLayout::numbered(self.n_channels))
        } else {
            ChannelLayout::new(self.channel_names.clone(), None)
        }
    }
}

/// Generates `n_hc` HC then `n_pd` PD recordings. Each subject's stream is
/// seeded from `seed` and its index, so the output is reproducible and one
/// subject does not depend on how many precede it.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Vec<Recording>> {
    spec.validate()?;
    let layout = spec.layout()?;
    let n = (spec.duration_s * spec.sampling_rate).round() as usize;
    let fs = spec.sampling_rate;
    let site = &spec.site;
    let mut is_disc = vec![false; spec.n_channels];
    for &c in &spec.discriminative {
        is_disc[c] = true;
    }
    let labels = std::iter::repeat_n(Label::HC, spec.n_hc).chain(std::iter::repeat_n(Label::PD, spec.n_pd));
    labels
        .enumerate()
        .map(|(i, label)| {
            let mut rng = seeded(derive_seed(seed, &format!("subject-{i}")));
            let alpha_amp = spec.alpha_amplitude * rng.random_range(0.7..1.3);
            let alpha_hz = spec.alpha_hz + site.freq_shift_hz + rng.random_range(-0.5..0.5);
            let pd_hz = spec.pd_hz + site.freq_shift_hz + rng.random_range(-0.3..0.3);
            let artifact_amp = site.artifact_amplitude * rng.random_range(0.0..=1.0);
            let innovation = spec.noise_std * site.noise_scale * (1.0 - spec.ar_coeff * spec.ar_coeff).sqrt();
            let mut samples = Array2::zeros((spec.n_channels, n));
            for c in 0..spec.n_channels {
                let phase_a = rng.random_range(0.0..2.0 * PI);
                let phase_p = rng.random_range(0.0..2.0 * PI);
                let phase_x = rng.random_range(0.0..2.0 * PI);
                let mut ar = spec.noise_std * site.noise_scale * standard_normal(&mut rng);
                let mut row = samples.row_mut(c);
                for t in 0..n {
                    ar = spec.ar_coeff * ar + innovation * standard_normal(&mut rng);
                    let tt = t as f64 / fs;
                    let mut v = ar + alpha_amp * (2.0 * PI * alpha_hz * tt + phase_a).sin();
                    if label == Label::PD && is_disc[c] {
                        let w = 2.0 * PI * pd_hz * tt + phase_p;
                        v += spec.pd_amplitude * (w.sin() + spec.pd_harmonic * (2.0 * w).cos());
                    }
                    if !is_disc[c] {
                        v += artifact_amp * (2.0 * PI * site.artifact_hz * tt + phase_x).sin();
                    }
                    row[t] = site.gain * v;
                }
            }
            Recording::new(format!("{}{:03}", spec.subject_prefix, i), label, fs, layout.clone(), samples)
        })
        .collect()
}
