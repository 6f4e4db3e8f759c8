use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use csfft_ffi::*;

fn last_error() -> String {
    let p = csfft_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn round_trip_recovery() {
    unsafe {
        let cfg = csfft_config_new();
        let mut t = 0.0;
        assert_eq!(csfft_min_duration(cfg, 2, 30.0, &mut t), CsfftStatus::Ok);
        let tones = [CsfftTone { f: -120.25, re: 1.0, im: 0.5 }, CsfftTone { f: 310.7, re: -0.4, im: 0.8 }];
        let mut sig = ptr::null_mut();
        assert_eq!(csfft_signal_new(tones.as_ptr(), 2, 30.0, t, 500.0, 0.0, 0, &mut sig), CsfftStatus::Ok);
        let mut rep = ptr::null_mut();
        assert_eq!(csfft_recover(sig, 2, cfg, 11, &mut rep), CsfftStatus::Ok);
        assert_eq!(csfft_report_len(rep), 2);
        assert_eq!(csfft_report_samples_used(rep), csfft_signal_samples_taken(sig));
        for (i, truth) in tones.iter().enumerate() {
            let mut got = CsfftTone { f: 0.0, re: 0.0, im: 0.0 };
            assert_eq!(csfft_report_tone(rep, i, &mut got), CsfftStatus::Ok);
            assert!((got.f - truth.f).abs() < 1e-3 / t);
            assert!((got.re - truth.re).abs() < 1e-3 && (got.im - truth.im).abs() < 1e-3);
        }
        let mut none = CsfftTone { f: 0.0, re: 0.0, im: 0.0 };
        assert_eq!(csfft_report_tone(rep, 5, &mut none), CsfftStatus::OutOfRange);
        let json = csfft_report_to_json(rep);
        assert!(!json.is_null());
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        assert!(text.contains("\"samples_used\""));
        csfft_string_free(json);
        csfft_report_free(rep);
        csfft_signal_free(sig);
        csfft_config_free(cfg);
    }
}

#[test]
fn short_duration_is_infeasible() {
    unsafe {
        let tones = [CsfftTone { f: 10.0, re: 1.0, im: 0.0 }];
        let mut sig = ptr::null_mut();
        assert_eq!(csfft_signal_new(tones.as_ptr(), 1, 30.0, 1.0, 500.0, 0.0, 0, &mut sig), CsfftStatus::Ok);
        let mut rep = ptr::null_mut();
        assert_eq!(csfft_recover(sig, 1, ptr::null(), 0, &mut rep), CsfftStatus::Infeasible);
        assert!(rep.is_null());
        assert!(last_error().contains("infeasible"));
        csfft_signal_free(sig);
    }
}

#[test]
fn null_and_bad_arguments() {
    unsafe {
        let mut rep = ptr::null_mut();
        assert_eq!(csfft_recover(ptr::null(), 1, ptr::null(), 0, &mut rep), CsfftStatus::NullPointer);
        assert_eq!(last_error(), "sig is null");
        let mut sig = ptr::null_mut();
        let close = [CsfftTone { f: 0.0, re: 1.0, im: 0.0 }, CsfftTone { f: 1.0, re: 1.0, im: 0.0 }];
        assert_eq!(csfft_signal_new(close.as_ptr(), 2, 30.0, 10.0, 100.0, 0.0, 0, &mut sig), CsfftStatus::Config);
        assert!(sig.is_null());
        let cfg = csfft_config_new();
        assert_eq!(csfft_config_set_delta(cfg, 2.0), CsfftStatus::Config);
        assert_eq!(csfft_config_set_alpha(cfg, 0.1), CsfftStatus::Ok);
        csfft_config_free(cfg);
        csfft_config_free(ptr::null_mut());
        csfft_report_free(ptr::null_mut());
        assert_eq!(csfft_report_len(ptr::null()), 0);
    }
}

#[test]
fn sample_outside_domain() {
    unsafe {
        let tones = [CsfftTone { f: 3.0, re: 2.0, im: 0.0 }];
        let mut sig = ptr::null_mut();
        assert_eq!(csfft_signal_new(tones.as_ptr(), 1, 1.0, 2.0, 10.0, 0.0, 0, &mut sig), CsfftStatus::Ok);
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(csfft_signal_sample(sig, 0.0, &mut re, &mut im), CsfftStatus::Ok);
        assert_eq!((re, im), (2.0, 0.0));
        assert_eq!(csfft_signal_sample(sig, 3.0, &mut re, &mut im), CsfftStatus::Domain);
        assert_eq!(csfft_signal_samples_taken(sig), 1);
        csfft_signal_free(sig);
    }
}

#[test]
fn config_from_json() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let good = CString::new(r#"{"alpha": 0.1, "stages": {"fixed": 9}}"#).unwrap();
        assert_eq!(csfft_config_from_json(good.as_ptr(), &mut cfg), CsfftStatus::Ok);
        csfft_config_free(cfg);
        let bad = CString::new(r#"{"alpha": "x"}"#).unwrap();
        assert_eq!(csfft_config_from_json(bad.as_ptr(), &mut cfg), CsfftStatus::Io);
        let invalid = CString::new(r#"{"duration_factor": 0.5}"#).unwrap();
        assert_eq!(csfft_config_from_json(invalid.as_ptr(), &mut cfg), CsfftStatus::Config);
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(csfft_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/csfft.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["csfft_recover", "csfft_last_error", "CsfftStatus", "CsfftTone"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let probe = dir.path().join("probe.c");
    std::fs::write(&probe, "#include \"csfft.h\"\nint main(void) { return csfft_version() == 0; }\n").unwrap();
    let Ok(out) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&probe)
        .output()
    else {
        eprintln!("cc not available; skipping compile check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
