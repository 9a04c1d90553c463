use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use pdeeg::classifier::train_classifier;
use pdeeg::dataio::{synth_dataset, write_dataset, SignalFormat, SynthSpec};
use pdeeg::harness::ExperimentConfig;
use pdeeg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(pdeeg_last_error()) }.to_string_lossy().into_owned()
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn write_synth(dir: &Path) -> std::path::PathBuf {
    let spec = SynthSpec {
        name: "abi".into(),
        n_channels: 4,
        n_hc: 3,
        n_pd: 3,
        duration_s: 4.0,
        sampling_rate: 100.0,
        discriminative: vec![0, 1],
        subject_prefix: "abi".into(),
        ..Default::default()
    };
    let out = dir.join("abi");
    write_dataset(&out, "abi", &synth_dataset(&spec, 5).unwrap(), SignalFormat::Binary).unwrap();
    out
}

#[test]
fn js_divergence_and_errors() {
    let p = [1.0, 0.0];
    let q = [0.0, 1.0];
    let mut out = 0.0;
    let st = unsafe { pdeeg_js_divergence(p.as_ptr(), q.as_ptr(), 2, &mut out) };
    assert_eq!(st, PdeegStatus::Ok);
    assert!((out - 1.0).abs() < 1e-12);
    assert_eq!(last_error(), "");

    let st = unsafe { pdeeg_js_divergence(ptr::null(), q.as_ptr(), 2, &mut out) };
    assert_eq!(st, PdeegStatus::NullArgument);
    assert!(last_error().contains("null"));

    let bad = [-1.0, 2.0];
    let st = unsafe { pdeeg_js_divergence(bad.as_ptr(), q.as_ptr(), 2, &mut out) };
    assert_eq!(st, PdeegStatus::InvalidInput);
    assert!(last_error().contains("distribution"));
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(pdeeg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn missing_files_report_io_errors() {
    let mut cfg = ptr::null_mut();
    let path = CString::new("/nonexistent/exp.toml").unwrap();
    assert_eq!(unsafe { pdeeg_config_load(path.as_ptr(), &mut cfg) }, PdeegStatus::Io);
    assert!(cfg.is_null());
    assert!(last_error().contains("nonexistent"), "{}", last_error());

    let bad = [0xffu8, 0];
    let mut ep = ptr::null_mut();
    let st = unsafe { pdeeg_epochs_load(bad.as_ptr().cast(), &mut ep) };
    assert_eq!(st, PdeegStatus::InvalidUtf8);

    unsafe {
        pdeeg_config_free(ptr::null_mut());
        pdeeg_epochs_free(ptr::null_mut());
        pdeeg_classifier_free(ptr::null_mut());
        pdeeg_string_free(ptr::null_mut());
    }
}

#[test]
fn epochs_and_classifier_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path());
    let exp = ExperimentConfig::smoke(&data);
    let toml = dir.path().join("exp.toml");
    std::fs::write(&toml, exp.to_toml()).unwrap();

    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(pdeeg_config_load(cstr(&toml).as_ptr(), &mut cfg), PdeegStatus::Ok);

        let mut ep = ptr::null_mut();
        assert_eq!(pdeeg_preprocess_dataset(cfg, cstr(&data).as_ptr(), &mut ep), PdeegStatus::Ok);
        let (mut n, mut c, mut s) = (0, 0, 0);
        assert_eq!(pdeeg_epochs_shape(ep, &mut n, &mut c, &mut s), PdeegStatus::Ok);
        assert_eq!((n, c), (24, 4));

        let mut buf = vec![0.0; n * c * s];
        assert_eq!(pdeeg_epochs_copy_data(ep, buf.as_mut_ptr(), buf.len()), PdeegStatus::Ok);
        assert!(buf.iter().any(|v| *v != 0.0));
        assert_eq!(
            pdeeg_epochs_copy_data(ep, buf.as_mut_ptr(), buf.len() - 1),
            PdeegStatus::InvalidInput
        );
        let mut labels = vec![9u8; n];
        assert_eq!(pdeeg_epochs_labels(ep, labels.as_mut_ptr(), n), PdeegStatus::Ok);
        assert_eq!(labels.iter().filter(|l| **l == 1).count(), n / 2);

        let file = dir.path().join("all.pde");
        assert_eq!(pdeeg_epochs_save(ep, cstr(&file).as_ptr()), PdeegStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(pdeeg_epochs_load(cstr(&file).as_ptr(), &mut back), PdeegStatus::Ok);
        let mut again = vec![0.0; buf.len()];
        assert_eq!(pdeeg_epochs_copy_data(back, again.as_mut_ptr(), again.len()), PdeegStatus::Ok);
        assert_eq!(again, buf);
        pdeeg_epochs_free(back);

        let epochs = pdeeg::checkpoint::load_epochs(&file).unwrap();
        let model = train_classifier(&epochs, &exp.classifier, &exp.train).unwrap();
        let ckpt = dir.path().join("clf.ckpt");
        model.save(&ckpt).unwrap();
        let expected = model.predict(&epochs).unwrap();

        let mut clf = ptr::null_mut();
        assert_eq!(pdeeg_classifier_load(cstr(&ckpt).as_ptr(), &mut clf), PdeegStatus::Ok);
        let mut pred = vec![9u8; n];
        assert_eq!(pdeeg_classifier_predict(clf, ep, pred.as_mut_ptr(), n), PdeegStatus::Ok);
        assert_eq!(pred.iter().map(|p| *p as usize).collect::<Vec<_>>(), expected);

        pdeeg_classifier_free(clf);
        pdeeg_epochs_free(ep);
        pdeeg_config_free(cfg);
    }
}

#[test]
fn run_experiment_returns_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synth(dir.path());
    let toml = dir.path().join("exp.toml");
    let mut exp = ExperimentConfig::smoke(&data);
    exp.experiment.use_fusion = false;
    exp.experiment.use_pruning = false;
    std::fs::write(&toml, exp.to_toml()).unwrap();

    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(pdeeg_config_load(cstr(&toml).as_ptr(), &mut cfg), PdeegStatus::Ok);
        let seeds = [3u64, 4];
        assert_eq!(pdeeg_config_set_seeds(cfg, seeds.as_ptr(), 2), PdeegStatus::Ok);
        assert_eq!(pdeeg_config_set_seeds(cfg, seeds.as_ptr(), 0), PdeegStatus::InvalidInput);
        let root = dir.path().join("runs");
        assert_eq!(pdeeg_config_set_output_root(cfg, cstr(&root).as_ptr()), PdeegStatus::Ok);

        let mut json = ptr::null_mut();
        assert_eq!(pdeeg_run_experiment(cfg, &mut json), PdeegStatus::Ok, "{}", last_error());
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        pdeeg_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["seeds"].as_array().unwrap().len(), 2);
        let run_dir = Path::new(v["run_dir"].as_str().unwrap());
        assert!(run_dir.starts_with(&root));
        assert!(run_dir.join("report.json").is_file());
        pdeeg_config_free(cfg);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pdeeg.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["pdeeg_last_error", "pdeeg_run_experiment", "pdeeg_classifier_predict", "PDEEG_STATUS_OK"] {
        assert!(text.contains(name), "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"pdeeg.h\"\nint main(void) { PdeegConfig *c = 0; return pdeeg_config_load(\"x\", &c) == PDEEG_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler, skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
