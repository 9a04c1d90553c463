//! Versioned container for model weights, epoch sets and their metadata.
//!
//! Layout, little-endian throughout:
//!
//! | offset   | size | field                                   |
//! |----------|------|-----------------------------------------|
//! | 0        | 4    | magic `PDCK`                            |
//! | 4        | 4    | format version (u32)                    |
//! | 8        | 8    | header length `H` in bytes (u64)        |
//! | 16       | H    | UTF-8 JSON header                       |
//! | 16 + H   | ...  | tensor payload, f64, row-major          |
//!
//! The header holds `kind` (what the file contains), free-form `meta` and a
//! tensor table of `{name, shape, offset}` entries, where `offset` counts
//! f64 values from the start of the payload. Floats in `meta` are written in
//! shortest round-trip form and tensors as raw bits, so save followed by
//! load reproduces every value exactly.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataio::{ChannelLayout, EpochSet, Label, Provenance};
use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const MAGIC: &[u8; 4] = b"PDCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Value,
    pub tensors: BTreeMap<String, ArrayD<f64>>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, meta: Value) -> Self {
        Checkpoint {
            kind: kind.into(),
            meta,
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: ArrayD<f64>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn tensor(&self, name: &str) -> Result<&ArrayD<f64>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Format(format!("{} checkpoint has no tensor `{name}`", self.kind)))
    }

    /// Stores every parameter and buffer of `store` under `prefix`.
    pub fn insert_store(&mut self, prefix: &str, store: &ParamStore) {
        for (k, v) in store.params() {
            self.insert(format!("{prefix}/param/{k}"), v.clone());
        }
        for (k, v) in store.buffers() {
            self.insert(format!("{prefix}/buffer/{k}"), v.clone());
        }
    }

    /// Rebuilds the store saved by [`Checkpoint::insert_store`].
    pub fn store(&self, prefix: &str) -> ParamStore {
        let mut store = ParamStore::new();
        let p = format!("{prefix}/param/");
        let b = format!("{prefix}/buffer/");
        for (k, v) in &self.tensors {
            if let Some(name) = k.strip_prefix(&p) {
                store.insert_param(name, v.clone());
            } else if let Some(name) = k.strip_prefix(&b) {
                store.insert_buffer(name, v.clone());
            }
        }
        store
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Format(format!("expected a {kind} file, found {}", self.kind)))
        }
    }

    /// Deserialises `meta` into `T`.
    pub fn meta_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_value(self.meta.clone())?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len();
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors.values() {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[0..4] != MAGIC {
            return Err(Error::Format("not a checkpoint container".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| Error::Format("truncated container header".into()))?;
        let header: Header = serde_json::from_slice(body)?;
        let payload = &bytes[16 + hlen..];
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            let len: usize = e.shape.iter().product();
            let raw = payload
                .get(8 * e.offset..8 * (e.offset + len))
                .ok_or_else(|| Error::Format(format!("tensor `{}` extends past the payload", e.name)))?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let t = ArrayD::from_shape_vec(IxDyn(&e.shape), data).map_err(|err| Error::Format(err.to_string()))?;
            tensors.insert(e.name, t);
        }
        Ok(Checkpoint {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            e => e,
        })
    }
}

pub const EPOCHS_KIND: &str = "epochs";

#[derive(Serialize, Deserialize)]
struct EpochMeta {
    labels: Vec<Label>,
    provenance: Vec<Provenance>,
    subjects: Vec<Option<String>>,
    layout: ChannelLayout,
    epoch_length_s: f64,
    sampling_rate: f64,
}

impl From<&EpochSet> for Checkpoint {
    fn from(e: &EpochSet) -> Self {
        let meta = EpochMeta {
            labels: e.labels.clone(),
            provenance: e.provenance.clone(),
            subjects: e.subjects.clone(),
            layout: e.layout.clone(),
            epoch_length_s: e.epoch_length_s,
            sampling_rate: e.sampling_rate,
        };
        let mut ck = Checkpoint::new(EPOCHS_KIND, serde_json::to_value(meta).expect("epoch metadata serialises"));
        ck.insert("epochs", e.epochs.clone().into_dyn());
        ck
    }
}

/// Writes an epoch set (conventionally `*.pde`).
pub fn save_epochs(e: &EpochSet, path: &Path) -> Result<()> {
    Checkpoint::from(e).save(path)
}

pub fn epochs_from_checkpoint(ck: &Checkpoint) -> Result<EpochSet> {
    ck.expect_kind(EPOCHS_KIND)?;
    let meta: EpochMeta = ck.meta_as()?;
    let epochs = ck
        .tensor("epochs")?
        .clone()
        .into_dimensionality()
        .map_err(|e| Error::Format(e.to_string()))?;
    EpochSet::new(
        epochs,
        meta.labels,
        meta.provenance,
        meta.subjects,
        meta.layout,
        meta.epoch_length_s,
        meta.sampling_rate,
    )
}

pub fn load_epochs(path: &Path) -> Result<EpochSet> {
    epochs_from_checkpoint(&Checkpoint::load(path)?)
}
