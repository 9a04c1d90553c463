//! Per-subject signal files.
//!
//! Binary (`.eegf`) layout, little-endian throughout:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `EEGF`                           |
//! | 4      | 2    | format version (1)                     |
//! | 6      | 2    | reserved, zero                         |
//! | 8      | 4    | channel count `C` (u32)                |
//! | 12     | 8    | samples per channel `T` (u64)          |
//! | 20     | 8    | sampling rate in Hz (f64)              |
//! | 28     | 4·C·T| samples as f32, channel-major          |
//!
//! CSV files carry one column per channel and one row per time point; the
//! header row holds the channel names.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const SIGNAL_MAGIC: &[u8; 4] = b"EEGF";
pub const SIGNAL_VERSION: u16 = 1;
const HEADER_LEN: usize = 28;

/// Decoded signal file: samples (`channels x time`), optional column names
/// and optional declared sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalData {
    pub samples: Array2<f64>,
    pub channel_names: Option<Vec<String>>,
    pub sampling_rate: Option<f64>,
}

pub fn write_binary(path: &Path, samples: &Array2<f64>, sampling_rate: f64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let (c, t) = samples.dim();
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(SIGNAL_MAGIC);
    header.extend_from_slice(&SIGNAL_VERSION.to_le_bytes());
    header.extend_from_slice(&0u16.to_le_bytes());
    header.extend_from_slice(&(c as u32).to_le_bytes());
    header.extend_from_slice(&(t as u64).to_le_bytes());
    header.extend_from_slice(&sampling_rate.to_le_bytes());
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    for row in samples.rows() {
        for &v in row {
            w.write_all(&(v as f32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_binary(path: &Path) -> Result<SignalData> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format(format!("{}: truncated signal header", path.display())))?;
    if &header[0..4] != SIGNAL_MAGIC {
        return Err(Error::Format(format!("{}: not an EEGF signal file", path.display())));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != SIGNAL_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported signal format version {version}",
            path.display()
        )));
    }
    let c = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let t = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
    let rate = f64::from_le_bytes(header[20..28].try_into().unwrap());
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    if raw.len() != 4 * c * t {
        return Err(Error::Format(format!(
            "{}: header declares {c}x{t} samples but the payload holds {} bytes",
            path.display(),
            raw.len()
        )));
    }
    let data: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok(SignalData {
        samples: Array2::from_shape_vec((c, t), data).unwrap(),
        channel_names: None,
        sampling_rate: Some(rate),
    })
}

pub fn write_csv(path: &Path, samples: &Array2<f64>, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    w.write_record(names)?;
    for col in samples.columns() {
        w.write_record(col.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<SignalData> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format(format!("{other:?}")),
        })?;
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let c = names.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); c];
    for (row_idx, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != c {
            return Err(Error::Format(format!(
                "{}: row {} has {} fields, header has {c}",
                path.display(),
                row_idx + 1,
                rec.len()
            )));
        }
        for (col, field) in columns.iter_mut().zip(rec.iter()) {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!("{}: row {}: `{field}` is not a number", path.display(), row_idx + 1))
            })?;
            col.push(v);
        }
    }
    let t = columns.first().map_or(0, Vec::len);
    let data: Vec<f64> = columns.into_iter().flatten().collect();
    Ok(SignalData {
        samples: Array2::from_shape_vec((c, t), data).unwrap(),
        channel_names: Some(names),
        sampling_rate: None,
    })
}

/// Reads a signal file, choosing the decoder by extension (`.csv` or binary).
pub fn read_signal(path: &Path) -> Result<SignalData> {
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_csv(path)
    } else {
        read_binary(path)
    }
}
