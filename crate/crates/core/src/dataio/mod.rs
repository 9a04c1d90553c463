//! Loading, validation and preprocessing of EEG recordings.

pub mod filter;
mod manifest;
mod preprocess;
pub mod signal;
mod synth;
mod types;

pub use manifest::{load_dataset, manifest_path, write_dataset, Manifest, SignalFormat, SubjectEntry};
pub use preprocess::{
    bandpass, epoch, harmonize, preprocess, rereference, resample_recording, zscore, PreprocessConfig, ZscoreScope,
};
pub use synth::{synth_dataset, SiteShift, SynthSpec};
pub use types::{ChannelLayout, EpochSet, Label, Provenance, Recording};
