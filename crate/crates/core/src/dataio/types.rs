use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagnostic group of a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    HC,
    PD,
}

impl Label {
    /// Class index used by the classifier: HC = 0, PD = 1.
    pub fn index(self) -> usize {
        match self {
            Label::HC => 0,
            Label::PD => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::HC
        } else {
            Label::PD
        }
    }

    pub const ALL: [Label; 2] = [Label::HC, Label::PD];
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::HC => "HC",
            Label::PD => "PD",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HC" => Ok(Label::HC),
            "PD" => Ok(Label::PD),
            _ => Err(s.to_string()),
        }
    }
}

/// Whether an epoch was recorded or produced by a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Generated,
}

/// Ordered electrode names plus the electrode the signals are referenced to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    names: Vec<String>,
    reference: Option<String>,
}

impl ChannelLayout {
    pub fn new(names: Vec<String>, reference: Option<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Invalid(format!("duplicate channel name `{n}`")));
            }
        }
        if let Some(r) = &reference {
            if seen.contains(r.as_str()) {
                return Err(Error::Invalid(format!("reference `{r}` is also listed as a channel")));
            }
        }
        Ok(ChannelLayout { names, reference })
    }

    /// Layout with generated names `ch0`, `ch1`, ...
    pub fn numbered(n: usize) -> Self {
        ChannelLayout {
            names: (0..n).map(|i| format!("ch{i}")).collect(),
            reference: None,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn reference(&self) -> Option<&str> {
        self.reference.as_deref()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Indices of `names` in this layout, failing on the first unknown name.
    pub fn indices_of(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| self.index_of(n).ok_or_else(|| Error::UnknownChannel(n.clone())))
            .collect()
    }

    /// This layout restricted to `names`, in the given order.
    pub fn subset(&self, names: &[String]) -> Result<ChannelLayout> {
        self.indices_of(names)?;
        ChannelLayout::new(names.to_vec(), self.reference.clone())
    }
}

/// One subject's continuous multichannel recording, `channels x time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub label: Label,
    pub sampling_rate: f64,
    pub layout: ChannelLayout,
    pub samples: Array2<f64>,
}

impl Recording {
    pub fn new(
        subject_id: impl Into<String>,
        label: Label,
        sampling_rate: f64,
        layout: ChannelLayout,
        samples: Array2<f64>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if !(sampling_rate > 0.0 && sampling_rate.is_finite()) {
            return Err(Error::Invalid(format!("subject {subject_id}: sampling rate must be positive")));
        }
        if samples.nrows() != layout.len() {
            return Err(Error::ChannelMismatch {
                subject: subject_id,
                expected: layout.len(),
                found: samples.nrows(),
            });
        }
        if let Some(((ch, idx), _)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                channel: layout.names()[ch].clone(),
                subject: subject_id,
                index: idx,
            });
        }
        Ok(Recording {
            subject_id,
            label,
            sampling_rate,
            layout,
            samples,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sampling_rate
    }

    /// This recording restricted to `names`, in that order.
    pub fn select_channels(&self, names: &[String]) -> Result<Recording> {
        let idx = self.layout.indices_of(names)?;
        Ok(Recording {
            subject_id: self.subject_id.clone(),
            label: self.label,
            sampling_rate: self.sampling_rate,
            layout: self.layout.subset(names)?,
            samples: self.samples.select(Axis(0), &idx),
        })
    }
}

/// A batch of equal-length epochs, `count x channels x samples`, with
/// per-epoch label, provenance and (for real data) subject.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub epochs: Array3<f64>,
    pub labels: Vec<Label>,
    pub provenance: Vec<Provenance>,
    pub subjects: Vec<Option<String>>,
    pub layout: ChannelLayout,
    pub epoch_length_s: f64,
    pub sampling_rate: f64,
}

impl EpochSet {
    pub fn new(
        epochs: Array3<f64>,
        labels: Vec<Label>,
        provenance: Vec<Provenance>,
        subjects: Vec<Option<String>>,
        layout: ChannelLayout,
        epoch_length_s: f64,
        sampling_rate: f64,
    ) -> Result<Self> {
        let set = EpochSet {
            epochs,
            labels,
            provenance,
            subjects,
            layout,
            epoch_length_s,
            sampling_rate,
        };
        set.validate()?;
        Ok(set)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let (n, c, t) = self.epochs.dim();
        if self.labels.len() != n || self.provenance.len() != n || self.subjects.len() != n {
            return Err(Error::Invalid(format!(
                "epoch set has {n} epochs but {} labels, {} provenance tags and {} subject ids",
                self.labels.len(),
                self.provenance.len(),
                self.subjects.len()
            )));
        }
        if c != self.layout.len() {
            return Err(Error::Invalid(format!(
                "epoch set has {c} channels but a {}-channel layout",
                self.layout.len()
            )));
        }
        let expected = (self.epoch_length_s * self.sampling_rate).round() as usize;
        if t != expected {
            return Err(Error::Invalid(format!(
                "epochs have {t} samples, expected round({} s x {} Hz) = {expected}",
                self.epoch_length_s, self.sampling_rate
            )));
        }
        Ok(())
    }

    /// Empty set with the given geometry.
    pub fn empty(layout: ChannelLayout, epoch_length_s: f64, sampling_rate: f64) -> Self {
        let t = (epoch_length_s * sampling_rate).round() as usize;
        EpochSet {
            epochs: Array3::zeros((0, layout.len(), t)),
            labels: Vec::new(),
            provenance: Vec::new(),
            subjects: Vec::new(),
            layout,
            epoch_length_s,
            sampling_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.epochs.dim().1
    }

    pub fn n_samples(&self) -> usize {
        self.epochs.dim().2
    }

    pub fn count(&self, label: Label, provenance: Provenance) -> usize {
        self.labels
            .iter()
            .zip(&self.provenance)
            .filter(|(l, p)| **l == label && **p == provenance)
            .count()
    }

    pub fn indices_where(&self, pred: impl Fn(Label, Provenance) -> bool) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| pred(self.labels[i], self.provenance[i]))
            .collect()
    }

    /// Epochs at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> EpochSet {
        EpochSet {
            epochs: self.epochs.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            layout: self.layout.clone(),
            epoch_length_s: self.epoch_length_s,
            sampling_rate: self.sampling_rate,
        }
    }

    pub fn filter(&self, pred: impl Fn(Label, Provenance) -> bool) -> EpochSet {
        self.select(&self.indices_where(pred))
    }

    /// Concatenates sets that share layout and epoch geometry.
    pub fn concat(parts: &[&EpochSet]) -> Result<EpochSet> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("cannot concatenate zero epoch sets".into()))?;
        for p in parts {
            if p.layout.names() != first.layout.names() || p.n_samples() != first.n_samples() {
                return Err(Error::Invalid("epoch sets differ in layout or epoch length".into()));
            }
        }
        let views: Vec<_> = parts.iter().map(|p| p.epochs.view()).collect();
        let epochs = concatenate(Axis(0), &views).map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(EpochSet {
            epochs,
            labels: parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
            provenance: parts.iter().flat_map(|p| p.provenance.iter().copied()).collect(),
            subjects: parts.iter().flat_map(|p| p.subjects.iter().cloned()).collect(),
            layout: first.layout.clone(),
            epoch_length_s: first.epoch_length_s,
            sampling_rate: first.sampling_rate,
        })
    }

    /// Distinct subject ids in first-seen order.
    pub fn subject_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.subjects
            .iter()
            .flatten()
            .filter(|s| seen.insert(s.as_str()))
            .cloned()
            .collect()
    }

    /// Channel `c` of every epoch, as a flat iterator of samples.
    pub fn channel_samples<'a>(&'a self, indices: &'a [usize], c: usize) -> impl Iterator<Item = f64> + 'a {
        indices
            .iter()
            .flat_map(move |&i| self.epochs.slice(s![i, c, ..]).into_iter().copied())
    }
}
