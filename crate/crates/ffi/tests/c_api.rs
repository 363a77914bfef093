use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use hwdemand::neuralnet::{save_model, LstmConfig, LstmModel, ScalerParams};
use hwdemand_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(hwd_last_error()) }.to_string_lossy().into_owned()
}

fn series_csv(n: usize) -> CString {
    let mut text = String::from("timestamp,t_mid\n");
    for i in 0..n {
        let ts = 1_704_067_200 + 60 * i as i64;
        let dt = hwdemand::timeseries::format_timestamp(ts);
        text.push_str(&format!("{dt},{}\n", 48.0 + (i as f64 / 20.0).sin()));
    }
    CString::new(text).unwrap()
}

fn load_series(csv: &CString) -> *mut HwdSeries {
    let id = CString::new("hh").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { hwd_series_from_csv(csv.as_ptr(), id.as_ptr(), &mut s) }, HwdStatus::Ok);
    assert!(!s.is_null());
    s
}

#[test]
fn series_round_trip_and_buffer_checks() {
    let csv = series_csv(30);
    let s = load_series(&csv);
    let mut n = 0;
    let mut start = 0;
    unsafe {
        assert_eq!(hwd_series_len(s, &mut n), HwdStatus::Ok);
        assert_eq!(hwd_series_start(s, &mut start), HwdStatus::Ok);
    }
    assert_eq!(n, 30);
    assert_eq!(start, 1_704_067_200);

    let mut small = [0.0; 10];
    let mut written = 7;
    let st = unsafe { hwd_series_values(s, small.as_mut_ptr(), small.len(), &mut written) };
    assert_eq!(st, HwdStatus::InvalidArgument);
    assert_eq!(written, 0);
    assert!(last_error().contains("buffer"));

    let mut buf = vec![0.0; 30];
    assert_eq!(unsafe { hwd_series_values(s, buf.as_mut_ptr(), buf.len(), &mut written) }, HwdStatus::Ok);
    assert_eq!(buf[0], 48.0);
    unsafe { hwd_series_free(s) };
}

#[test]
fn null_and_parse_errors() {
    let mut n = 0;
    assert_eq!(unsafe { hwd_series_len(ptr::null(), &mut n) }, HwdStatus::NullPointer);
    assert!(last_error().contains("series"));

    let bad = CString::new("time,value\n1,2\n").unwrap();
    let id = CString::new("x").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { hwd_series_from_csv(bad.as_ptr(), id.as_ptr(), &mut s) }, HwdStatus::Parse);
    assert!(s.is_null());
    assert!(last_error().contains("header"));

    let missing = CString::new("/nonexistent/model.json").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { hwd_model_load(missing.as_ptr(), &mut m) }, HwdStatus::Io);

    // Freeing null is a no-op.
    unsafe {
        hwd_series_free(ptr::null_mut());
        hwd_model_free(ptr::null_mut());
        hwd_string_free(ptr::null_mut());
    }
}

#[test]
fn metrics_match_core() {
    let a = [10.0, 20.0, 30.0];
    let p = [12.0, 18.0, 33.0];
    let mut m = HwdMetrics::default();
    assert_eq!(unsafe { hwd_metrics(a.as_ptr(), p.as_ptr(), 3, &mut m) }, HwdStatus::Ok);
    assert!((m.r2 - 0.915).abs() < 1e-12);
    assert!((m.rmse - (17.0f64 / 3.0).sqrt()).abs() < 1e-12);
    let flat = [3.0, 3.0];
    assert_eq!(unsafe { hwd_metrics(flat.as_ptr(), flat.as_ptr(), 2, &mut m) }, HwdStatus::Numeric);
}

#[test]
fn model_load_predict_save() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let cfg = LstmConfig {
        units: 3,
        lookback: 5,
        ..LstmConfig::default()
    };
    save_model(&LstmModel::new(cfg, ScalerParams::new(40.0, 56.0).unwrap()).unwrap(), &path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { hwd_model_load(cpath.as_ptr(), &mut model) }, HwdStatus::Ok);
    let mut lookback = 0;
    assert_eq!(unsafe { hwd_model_lookback(model, &mut lookback) }, HwdStatus::Ok);
    assert_eq!(lookback, 5);

    let csv = series_csv(40);
    let s = load_series(&csv);
    let mut pred = ptr::null_mut();
    assert_eq!(unsafe { hwd_model_predict(model, s, &mut pred) }, HwdStatus::Ok);
    let mut n = 0;
    unsafe { hwd_series_len(pred, &mut n) };
    assert_eq!(n, 35);

    let copy = dir.path().join("copy.json");
    let ccopy = CString::new(copy.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { hwd_model_save(model, ccopy.as_ptr()) }, HwdStatus::Ok);
    assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(&path).unwrap());

    let mut text = std::fs::read_to_string(&path).unwrap();
    text = text.replacen("\"version\":1", "\"version\":7", 1);
    std::fs::write(&path, text).unwrap();
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { hwd_model_load(cpath.as_ptr(), &mut again) }, HwdStatus::Checkpoint);
    assert!(last_error().contains("version 7"));

    unsafe {
        hwd_series_free(pred);
        hwd_series_free(s);
        hwd_model_free(model);
    }
}

#[test]
fn events_and_calendar_strings() {
    let mut text = String::from("timestamp,t_mid\n");
    // Slow cooling, a 12-minute draw at 07:00 each day, then reheating.
    let mut v: f64 = 50.0;
    for day in 0..3i64 {
        for minute in 0..1440i64 {
            if (420..432).contains(&minute) {
                v -= 0.6;
            } else if v < 50.0 {
                v = (v + 0.3).min(50.0);
            } else {
                v -= 0.002;
            }
            let ts = 1_704_067_200 + (day * 1440 + minute) * 60;
            text.push_str(&format!("{},{v}\n", hwdemand::timeseries::format_timestamp(ts)));
        }
    }
    let csv = CString::new(text).unwrap();
    let s = load_series(&csv);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { hwd_detect_events_csv(s, 0.02, 1, &mut out) }, HwdStatus::Ok);
    let events = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
    unsafe { hwd_string_free(out) };
    assert!(events.starts_with("household,start_iso8601,duration_min,peak_drop_c,score\n"));
    assert_eq!(events.lines().count(), 4, "{events}");

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { hwd_calendar_json(s, 0.02, 0, 1, &mut json) }, HwdStatus::Ok);
    let cal = hwdemand::calendar::parse_calendar_json(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    unsafe { hwd_string_free(json) };
    assert_eq!(cal.total(), 3);
    assert_eq!(cal.counts[0][7] + cal.counts[1][7] + cal.counts[2][7], 3);

    assert_eq!(unsafe { hwd_detect_events_csv(s, 1.5, 1, &mut out) }, HwdStatus::InvalidArgument);
    assert!(out.is_null());
    unsafe { hwd_series_free(s) };
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/hwdemand.h")).unwrap();
    let source = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exported: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 15);
    for name in exported {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("HWD_STATUS_NULL_POINTER = 1"));
    assert!(header.contains("typedef struct HwdSeries HwdSeries;"));
}

fn has_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

/// Static library built alongside the test binary, if any.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let deps = exe.parent()?;
    [deps.to_path_buf(), deps.parent()?.to_path_buf()]
        .into_iter()
        .map(|d| d.join("libhwdemand_ffi.a"))
        .find(|p| p.is_file())
}

#[test]
fn c_program_compiles_links_and_runs() {
    if !has_cc() {
        eprintln!("cc not found; skipping C smoke test");
        return;
    }
    let include = crate_dir().join("include");
    let src = crate_dir().join("examples/smoke.c");
    let syntax = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(syntax.status.success(), "{}", String::from_utf8_lossy(&syntax.stderr));

    let Some(lib) = static_lib() else {
        eprintln!("static library not built yet; checked header only");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let link = Command::new("cc")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(link.status.success(), "{}", String::from_utf8_lossy(&link.stderr));
    let run = Command::new(Path::new(&exe)).output().unwrap();
    assert!(run.status.success());
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.starts_with("len=6 rmse=0.500 null_status=1 version="), "{stdout}");
}
