//! Dataset manifests.
//!
//! A dataset is a directory holding a `manifest.toml` and one signal file per
//! subject:
//!
//! ```toml
//! name = "site-a"
//! sampling_rate = 500.0
//! channels = ["Fp1", "Fp2", "CPz"]
//! # electrode the stored signals are already referenced to, if any
//! # reference = "FCz"
//!
//! [[subjects]]
//! id = "s01"
//! label = "HC"
//! path = "s01.eegf"
//! ```
//!
//! Paths are relative to the manifest. `channels` gives the row order of the
//! binary files; CSV columns are matched by name and reordered to it.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::signal::{read_signal, write_binary, write_csv};
use super::types::{ChannelLayout, Label, Recording};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub sampling_rate: f64,
    pub channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default)]
    pub subjects: Vec<SubjectEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub id: String,
    pub label: String,
    pub path: PathBuf,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn layout(&self) -> Result<ChannelLayout> {
        ChannelLayout::new(self.channels.clone(), self.reference.clone())
    }
}

/// Resolves a dataset argument that may name either the manifest file or the
/// directory containing `manifest.toml`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.toml")
    } else {
        path.to_path_buf()
    }
}

fn load_subject(base: &Path, m: &Manifest, layout: &ChannelLayout, entry: &SubjectEntry) -> Result<Recording> {
    let label: Label = entry.label.parse().map_err(|label| Error::UnknownLabel {
        subject: entry.id.clone(),
        label,
    })?;
    let path = base.join(&entry.path);
    if !path.exists() {
        return Err(Error::MissingSignal {
            subject: entry.id.clone(),
            path,
        });
    }
    let data = read_signal(&path)?;
    if data.samples.nrows() != layout.len() {
        return Err(Error::ChannelMismatch {
            subject: entry.id.clone(),
            expected: layout.len(),
            found: data.samples.nrows(),
        });
    }
    let samples = match &data.channel_names {
        Some(names) if names.as_slice() != layout.names() => {
            let idx: Vec<usize> = layout
                .names()
                .iter()
                .map(|n| {
                    names.iter().position(|x| x == n).ok_or_else(|| {
                        Error::Format(format!("subject {}: column `{n}` missing from {}", entry.id, path.display()))
                    })
                })
                .collect::<Result<_>>()?;
            data.samples.select(ndarray::Axis(0), &idx)
        }
        _ => data.samples,
    };
    if let Some(rate) = data.sampling_rate {
        if (rate - m.sampling_rate).abs() > 1e-9 * m.sampling_rate {
            return Err(Error::Format(format!(
                "subject {}: file declares {rate} Hz but the manifest says {} Hz",
                entry.id, m.sampling_rate
            )));
        }
    }
    Recording::new(entry.id.clone(), label, m.sampling_rate, layout.clone(), samples)
}

/// Loads every subject listed in the manifest at `path` (a file or a
/// dataset directory). Subjects are loaded in parallel and returned in
/// manifest order.
pub fn load_dataset(path: &Path) -> Result<Vec<Recording>> {
    let path = manifest_path(path);
    let m = Manifest::read(&path)?;
    let layout = m.layout()?;
    let base = path.parent().unwrap_or(Path::new("."));
    m.subjects
        .par_iter()
        .map(|entry| load_subject(base, &m, &layout, entry))
        .collect()
}

/// Signal file encoding used by [`write_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalFormat {
    #[default]
    Binary,
    Csv,
}

/// Writes `recordings` as a dataset directory and returns the manifest path.
/// All recordings must share one layout and sampling rate.
pub fn write_dataset(dir: &Path, name: &str, recordings: &[Recording], format: SignalFormat) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let first = recordings
        .first()
        .ok_or_else(|| Error::Invalid("cannot write a dataset with no recordings".into()))?;
    let mut subjects = Vec::with_capacity(recordings.len());
    for r in recordings {
        if r.layout != first.layout || r.sampling_rate != first.sampling_rate {
            return Err(Error::Invalid(format!(
                "subject {} differs in layout or sampling rate from subject {}",
                r.subject_id, first.subject_id
            )));
        }
        let file = match format {
            SignalFormat::Binary => format!("{}.eegf", r.subject_id),
            SignalFormat::Csv => format!("{}.csv", r.subject_id),
        };
        let path = dir.join(&file);
        match format {
            SignalFormat::Binary => write_binary(&path, &r.samples, r.sampling_rate)?,
            SignalFormat::Csv => write_csv(&path, &r.samples, r.layout.names())?,
        }
        subjects.push(SubjectEntry {
            id: r.subject_id.clone(),
            label: r.label.to_string(),
            path: PathBuf::from(file),
        });
    }
    let manifest = Manifest {
        name: name.to_string(),
        sampling_rate: first.sampling_rate,
        channels: first.layout.names().to_vec(),
        reference: first.layout.reference().map(str::to_string),
        subjects,
    };
    let path = dir.join("manifest.toml");
    manifest.write(&path)?;
    Ok(path)
}
