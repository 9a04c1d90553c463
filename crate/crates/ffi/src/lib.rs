//! C ABI over the pdeeg toolkit.
//!
//! Every fallible function returns a [`PdeegStatus`]. On failure the message
//! is available from [`pdeeg_last_error`] on the same thread until the next
//! call. Objects come back as opaque handles that the caller releases with
//! the matching `*_free` function. Strings returned by the library are freed
//! with [`pdeeg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pdeeg::checkpoint::{load_epochs, save_epochs};
use pdeeg::classifier::ClassifierModel;
use pdeeg::dataio::{load_dataset, preprocess, EpochSet};
use pdeeg::harness::{run_experiment, ExperimentConfig};
use pdeeg::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeegStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    InvalidInput = 6,
    /// The data does not fit the request: unknown channels or labels,
    /// missing signals, empty groups.
    Data = 7,
    Diverged = 8,
    EmptyMask = 9,
    QualityGate = 10,
    Panic = 11,
}

impl From<&Error> for PdeegStatus {
    fn from(e: &Error) -> Self {
        match e.root() {
            Error::Io { .. } => PdeegStatus::Io,
            Error::Format(_) => PdeegStatus::Format,
            Error::Config(_) => PdeegStatus::Config,
            Error::Invalid(_) => PdeegStatus::InvalidInput,
            Error::Diverged { .. } => PdeegStatus::Diverged,
            Error::EmptyMask => PdeegStatus::EmptyMask,
            Error::QualityGate { .. } => PdeegStatus::QualityGate,
            _ => PdeegStatus::Data,
        }
    }
}

/// A loaded experiment configuration.
pub struct PdeegConfig(ExperimentConfig);

/// A set of preprocessed epochs with labels.
pub struct PdeegEpochs(EpochSet);

/// A trained classifier.
pub struct PdeegClassifier(ClassifierModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(PdeegStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(PdeegStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PdeegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PdeegStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            PdeegStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(PdeegStatus::NullArgument, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail(PdeegStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or "" after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pdeeg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn pdeeg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Jensen-Shannon divergence in bits between two `n`-bin distributions.
/// Both must be non-negative and sum to 1.
///
/// # Safety
/// `p` and `q` must point to `n` doubles; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_js_divergence(p: *const f64, q: *const f64, n: usize, out: *mut f64) -> PdeegStatus {
    guard(|| {
        if p.is_null() || q.is_null() || out.is_null() {
            return Err(null("p, q or out"));
        }
        let (p, q) = (std::slice::from_raw_parts(p, n), std::slice::from_raw_parts(q, n));
        for d in [p, q] {
            let sum: f64 = d.iter().sum();
            if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Fail(PdeegStatus::InvalidInput, "not a probability distribution".into()));
            }
        }
        *out = pdeeg::pruning::js(p, q)?;
        Ok(())
    })
}

/// Built-in default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_config_default(out: *mut *mut PdeegConfig) -> PdeegStatus {
    guard(|| put(out, PdeegConfig(ExperimentConfig::default())))
}

/// Reads a TOML experiment configuration.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_config_load(path: *const c_char, out: *mut *mut PdeegConfig) -> PdeegStatus {
    guard(|| {
        let cfg = ExperimentConfig::load(&path_arg(path, "path")?)?;
        put(out, PdeegConfig(cfg))
    })
}

/// Replaces the list of master seeds.
///
/// # Safety
/// `cfg` must be a live handle; `seeds` must point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_config_set_seeds(cfg: *mut PdeegConfig, seeds: *const u64, n: usize) -> PdeegStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        if seeds.is_null() || n == 0 {
            return Err(Fail(PdeegStatus::InvalidInput, "need at least one seed".into()));
        }
        cfg.0.experiment.seeds = std::slice::from_raw_parts(seeds, n).to_vec();
        Ok(())
    })
}

/// Sets the directory that run directories are created in.
///
/// # Safety
/// `cfg` must be a live handle; `root` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_config_set_output_root(cfg: *mut PdeegConfig, root: *const c_char) -> PdeegStatus {
    guard(|| {
        let root = path_arg(root, "root")?;
        cfg.as_mut().ok_or_else(|| null("cfg"))?.0.experiment.output_root = Some(root);
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_config_free(cfg: *mut PdeegConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured experiment. On success `report_json` receives the
/// report as JSON, including a `run_dir` field; free it with
/// [`pdeeg_string_free`].
///
/// # Safety
/// `cfg` must be a live handle; `report_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_run_experiment(cfg: *const PdeegConfig, report_json: *mut *mut c_char) -> PdeegStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        if report_json.is_null() {
            return Err(null("report_json"));
        }
        let report = run_experiment(&cfg.0)?;
        let mut value = serde_json::to_value(&report).map_err(Error::from)?;
        value["run_dir"] = serde_json::Value::String(report.run_dir.display().to_string());
        let text = CString::new(value.to_string()).expect("JSON has no NUL");
        *report_json = text.into_raw();
        Ok(())
    })
}

/// Loads and preprocesses a dataset (directory or manifest) with the
/// configuration's preprocessing settings.
///
/// # Safety
/// `cfg` must be a live handle; `dataset` a NUL-terminated string; `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_preprocess_dataset(
    cfg: *const PdeegConfig,
    dataset: *const c_char,
    out: *mut *mut PdeegEpochs,
) -> PdeegStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let recordings = load_dataset(&path_arg(dataset, "dataset")?)?;
        let (epochs, _) = preprocess(&recordings, &cfg.0.preprocess)?;
        put(out, PdeegEpochs(epochs))
    })
}

/// Reads an epoch file written by `pdeeg preprocess` or `generate`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_epochs_load(path: *const c_char, out: *mut *mut PdeegEpochs) -> PdeegStatus {
    guard(|| {
        let e = load_epochs(&path_arg(path, "path")?)?;
        put(out, PdeegEpochs(e))
    })
}

/// # Safety
/// `epochs` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_epochs_save(epochs: *const PdeegEpochs, path: *const c_char) -> PdeegStatus {
    guard(|| {
        let e = handle(epochs, "epochs")?;
        save_epochs(&e.0, &path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of epochs, channels and samples per epoch.
///
/// # Safety
/// `epochs` must be a live handle; the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_epochs_shape(
    epochs: *const PdeegEpochs,
    count: *mut usize,
    channels: *mut usize,
    samples: *mut usize,
) -> PdeegStatus {
    guard(|| {
        let e = handle(epochs, "epochs")?;
        if count.is_null() || channels.is_null() || samples.is_null() {
            return Err(null("an output"));
        }
        (*count, *channels, *samples) = (e.0.len(), e.0.n_channels(), e.0.n_samples());
        Ok(())
    })
}

/// Copies the samples, epoch-major then channel then time, into `buf`,
/// which must hold exactly count × channels × samples doubles.
///
/// # Safety
/// `epochs` must be a live handle; `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_epochs_copy_data(epochs: *const PdeegEpochs, buf: *mut f64, len: usize) -> PdeegStatus {
    guard(|| {
        let e = handle(epochs, "epochs")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let data = &e.0.epochs;
        if len != data.len() {
            return Err(Fail(
                PdeegStatus::InvalidInput,
                format!("buffer holds {len} values, epochs have {}", data.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, len);
        for (o, v) in out.iter_mut().zip(data.iter()) {
            *o = *v;
        }
        Ok(())
    })
}

/// Writes each epoch's label, 0 for HC and 1 for PD.
///
/// # Safety
/// `epochs` must be a live handle; `labels` must point to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_epochs_labels(epochs: *const PdeegEpochs, labels: *mut u8, len: usize) -> PdeegStatus {
    guard(|| {
        let e = handle(epochs, "epochs")?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        if len != e.0.len() {
            return Err(Fail(
                PdeegStatus::InvalidInput,
                format!("buffer holds {len} labels, there are {} epochs", e.0.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(labels, len);
        for (o, l) in out.iter_mut().zip(&e.0.labels) {
            *o = l.index() as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `epochs` must come from this library and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_epochs_free(epochs: *mut PdeegEpochs) {
    if !epochs.is_null() {
        drop(Box::from_raw(epochs));
    }
}

/// Reads a classifier checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_classifier_load(path: *const c_char, out: *mut *mut PdeegClassifier) -> PdeegStatus {
    guard(|| {
        let m = ClassifierModel::load(&path_arg(path, "path")?)?;
        put(out, PdeegClassifier(m))
    })
}

/// Predicts a label per epoch, 0 for HC and 1 for PD.
///
/// # Safety
/// Both handles must be live; `labels` must point to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_classifier_predict(
    model: *const PdeegClassifier,
    epochs: *const PdeegEpochs,
    labels: *mut u8,
    len: usize,
) -> PdeegStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let e = handle(epochs, "epochs")?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        if len != e.0.len() {
            return Err(Fail(
                PdeegStatus::InvalidInput,
                format!("buffer holds {len} labels, there are {} epochs", e.0.len()),
            ));
        }
        let pred = m.0.predict(&e.0)?;
        let out = std::slice::from_raw_parts_mut(labels, len);
        for (o, p) in out.iter_mut().zip(pred) {
            *o = p as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn pdeeg_classifier_free(model: *mut PdeegClassifier) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
