use std::collections::{BTreeSet, HashMap};

use ndarray::{s, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filter::{design_bandpass, filter_zero_phase, resample};
use super::types::{ChannelLayout, EpochSet, Provenance, Recording};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZscoreScope {
    #[default]
    PerEpochChannel,
    PerRecordingChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub filter_taps: usize,
    pub epoch_length_s: f64,
    /// Channel subtracted from every other channel and then dropped.
    pub reference_channel: Option<String>,
    pub zscore_scope: ZscoreScope,
    /// Recordings at other rates are resampled to this rate first.
    pub target_rate: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            band_low_hz: 1.0,
            band_high_hz: 45.0,
            filter_taps: 825,
            epoch_length_s: 5.0,
            reference_channel: None,
            zscore_scope: ZscoreScope::PerEpochChannel,
            target_rate: 500.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self, sampling_rate: f64) -> Result<()> {
        if self.filter_taps == 0 || self.filter_taps.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "filter_taps must be a positive odd integer, got {}",
                self.filter_taps
            )));
        }
        if !(0.0 < self.band_low_hz && self.band_low_hz < self.band_high_hz && self.band_high_hz < sampling_rate / 2.0) {
            return Err(Error::Config(format!(
                "band [{}, {}] Hz is invalid for sampling rate {sampling_rate} Hz",
                self.band_low_hz, self.band_high_hz
            )));
        }
        if !(self.epoch_length_s > 0.0) {
            return Err(Error::Config("epoch_length_s must be positive".into()));
        }
        Ok(())
    }

    pub fn epoch_samples(&self, sampling_rate: f64) -> usize {
        (self.epoch_length_s * sampling_rate).round() as usize
    }
}

/// Subtracts the `reference` channel from every other channel and removes it
/// from the layout.
pub fn rereference(r: &Recording, reference: &str) -> Result<Recording> {
    let ri = r
        .layout
        .index_of(reference)
        .ok_or_else(|| Error::UnknownChannel(reference.to_string()))?;
    let keep: Vec<usize> = (0..r.layout.len()).filter(|&i| i != ri).collect();
    let ref_row = r.samples.row(ri).to_owned();
    let mut samples = r.samples.select(Axis(0), &keep);
    for mut row in samples.rows_mut() {
        row -= &ref_row;
    }
    let names = keep.iter().map(|&i| r.layout.names()[i].clone()).collect();
    Ok(Recording {
        subject_id: r.subject_id.clone(),
        label: r.label,
        sampling_rate: r.sampling_rate,
        layout: ChannelLayout::new(names, Some(reference.to_string()))?,
        samples,
    })
}

/// Restricts both datasets to the channels they share, ordered as in the
/// first dataset's layout.
pub fn harmonize(a: &[Recording], b: &[Recording]) -> Result<(Vec<Recording>, Vec<Recording>, ChannelLayout)> {
    let layout_of = |set: &[Recording]| -> Result<Option<ChannelLayout>> {
        let Some(first) = set.first() else { return Ok(None) };
        if let Some(r) = set.iter().find(|r| r.layout.names() != first.layout.names()) {
            return Err(Error::Invalid(format!(
                "subject {} has a different channel layout from subject {}",
                r.subject_id, first.subject_id
            )));
        }
        Ok(Some(first.layout.clone()))
    };
    let (la, lb) = (layout_of(a)?, layout_of(b)?);
    let shared = match (&la, &lb) {
        (Some(la), Some(lb)) => {
            let other: BTreeSet<&str> = lb.names().iter().map(String::as_str).collect();
            la.names().iter().filter(|n| other.contains(n.as_str())).cloned().collect()
        }
        (Some(l), None) | (None, Some(l)) => l.names().to_vec(),
        (None, None) => Vec::new(),
    };
    if shared.is_empty() && (la.is_some() || lb.is_some()) {
        return Err(Error::EmptyIntersection);
    }
    let reference = la.as_ref().or(lb.as_ref()).and_then(|l| l.reference().map(str::to_string));
    let layout = ChannelLayout::new(shared.clone(), reference)?;
    let restrict = |set: &[Recording]| -> Result<Vec<Recording>> {
        set.iter()
            .map(|r| {
                let mut out = r.select_channels(&shared)?;
                out.layout = layout.clone();
                Ok(out)
            })
            .collect()
    };
    Ok((restrict(a)?, restrict(b)?, layout))
}

/// Zero-phase Hamming-window FIR band-pass on every channel.
pub fn bandpass(r: &Recording, cfg: &PreprocessConfig) -> Result<Recording> {
    cfg.validate(r.sampling_rate)?;
    let h = design_bandpass(cfg.filter_taps, cfg.band_low_hz, cfg.band_high_hz, r.sampling_rate)?;
    let samples = filter_zero_phase(&r.samples, &h).map_err(|e| match e {
        Error::Invalid(msg) => Error::Invalid(format!("subject {}: {msg}", r.subject_id)),
        e => e,
    })?;
    Ok(Recording {
        samples,
        ..r.clone()
    })
}

/// Resamples to `target_hz` when the rate differs.
pub fn resample_recording(r: &Recording, target_hz: f64) -> Result<Recording> {
    if (r.sampling_rate - target_hz).abs() < 1e-9 {
        return Ok(r.clone());
    }
    Ok(Recording {
        samples: resample(&r.samples, r.sampling_rate, target_hz)?,
        sampling_rate: target_hz,
        ..r.clone()
    })
}

/// Cuts the recording into contiguous non-overlapping epochs, dropping the
/// tail.
pub fn epoch(r: &Recording, cfg: &PreprocessConfig) -> Result<EpochSet> {
    let len = cfg.epoch_samples(r.sampling_rate);
    if len == 0 {
        return Err(Error::Config("epoch length rounds to zero samples".into()));
    }
    let n = r.n_samples() / len;
    if n == 0 {
        return Err(Error::Invalid(format!(
            "subject {}: recording of {:.3} s is shorter than one {} s epoch",
            r.subject_id,
            r.duration_s(),
            cfg.epoch_length_s
        )));
    }
    let c = r.layout.len();
    let mut epochs = Array3::zeros((n, c, len));
    for k in 0..n {
        epochs
            .slice_mut(s![k, .., ..])
            .assign(&r.samples.slice(s![.., k * len..(k + 1) * len]));
    }
    EpochSet::new(
        epochs,
        vec![r.label; n],
        vec![Provenance::Real; n],
        vec![Some(r.subject_id.clone()); n],
        r.layout.clone(),
        len as f64 / r.sampling_rate,
        r.sampling_rate,
    )
}

fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / n.max(1) as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1) as f64;
    (mean, var.sqrt())
}

/// Standardises every (epoch, channel) row, or every (subject, channel)
/// across all of that subject's epochs. Constant segments become zeros and
/// produce a warning in the returned list.
pub fn zscore(e: &EpochSet, cfg: &PreprocessConfig) -> (EpochSet, Vec<String>) {
    let mut out = e.clone();
    let c = e.n_channels();
    let names = e.layout.names();
    let warnings: Vec<String> = match cfg.zscore_scope {
        ZscoreScope::PerEpochChannel => out
            .epochs
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .flat_map_iter(|(k, mut ep)| {
                let mut w = Vec::new();
                for (ch, mut row) in ep.axis_iter_mut(Axis(0)).enumerate() {
                    let (mean, sd) = moments(row.iter().copied());
                    if sd > 0.0 && sd.is_finite() {
                        row.mapv_inplace(|v| (v - mean) / sd);
                    } else {
                        row.fill(0.0);
                        w.push(format!("epoch {k}, channel {}: zero variance, set to zeros", names[ch]));
                    }
                }
                w
            })
            .collect(),
        ZscoreScope::PerRecordingChannel => {
            let mut groups: Vec<(Option<String>, Vec<usize>)> = Vec::new();
            let mut slot: HashMap<Option<String>, usize> = HashMap::new();
            for (i, sid) in e.subjects.iter().enumerate() {
                let g = *slot.entry(sid.clone()).or_insert_with(|| {
                    groups.push((sid.clone(), Vec::new()));
                    groups.len() - 1
                });
                groups[g].1.push(i);
            }
            let mut w = Vec::new();
            for (sid, idx) in &groups {
                for ch in 0..c {
                    let vals: Vec<f64> = e.channel_samples(idx, ch).collect();
                    let (mean, sd) = moments(vals.iter().copied());
                    for &i in idx {
                        let mut row = out.epochs.slice_mut(s![i, ch, ..]);
                        if sd > 0.0 && sd.is_finite() {
                            row.mapv_inplace(|v| (v - mean) / sd);
                        } else {
                            row.fill(0.0);
                        }
                    }
                    if !(sd > 0.0 && sd.is_finite()) {
                        w.push(format!(
                            "subject {}, channel {}: zero variance, set to zeros",
                            sid.as_deref().unwrap_or("?"),
                            names[ch]
                        ));
                    }
                }
            }
            w
        }
    };
    (out, warnings)
}

/// Full per-recording chain: optional re-reference, rate unification,
/// band-pass, epoching, then z-scoring of the pooled epochs. Recordings are
/// processed in parallel; the output keeps their order.
pub fn preprocess(recordings: &[Recording], cfg: &PreprocessConfig) -> Result<(EpochSet, Vec<String>)> {
    let sets: Vec<EpochSet> = recordings
        .par_iter()
        .map(|r| {
            let r = match &cfg.reference_channel {
                Some(ch) => rereference(r, ch)?,
                None => r.clone(),
            };
            let r = resample_recording(&r, cfg.target_rate)?;
            let r = bandpass(&r, cfg)?;
            epoch(&r, cfg)
        })
        .collect::<Result<_>>()?;
    if sets.is_empty() {
        return Err(Error::Invalid("no recordings to preprocess".into()));
    }
    let refs: Vec<&EpochSet> = sets.iter().collect();
    let all = EpochSet::concat(&refs)?;
    Ok(zscore(&all, cfg))
}
