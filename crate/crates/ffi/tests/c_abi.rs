use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use agentsearch_ffi::*;

fn take(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { as_string_free(s) };
    out
}

fn last_error() -> String {
    let p = as_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn run_lifecycle_through_handles() {
    let cfg = CString::new(r#"{"mcts_budget": 12, "ea_budget": 8, "rng_seed": 5}"#).unwrap();
    let mut run: *mut AsRun = ptr::null_mut();
    unsafe {
        assert_eq!(as_run_new(cfg.as_ptr(), ptr::null(), &mut run), AsStatus::Ok);
        let mut phase = AsPhase::Done;
        assert_eq!(as_run_phase(run, &mut phase), AsStatus::Ok);
        assert_eq!(phase, AsPhase::Mcts);
        assert_eq!(as_run_step(run), AsStatus::Ok);
        assert_eq!(as_run_until_done(run), AsStatus::Ok);
        assert_eq!(as_run_phase(run, &mut phase), AsStatus::Ok);
        assert_eq!(phase, AsPhase::Done);

        let mut s = ptr::null_mut();
        assert_eq!(as_run_best_json(run, &mut s), AsStatus::Ok);
        let best: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert!(best["source"].as_str().unwrap().starts_with("#!/bin/sh"));

        assert_eq!(as_run_leaderboard_csv(run, 3, &mut s), AsStatus::Ok);
        let csv = take(s);
        assert!(csv.starts_with("Rank,Gen,Node Value"));
        assert_eq!(csv.lines().count(), 4);

        assert_eq!(as_run_export_tree(run, AsTreeFormat::Dot, &mut s), AsStatus::Ok);
        assert!(take(s).starts_with("digraph"));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("r.agentsearch.json.gz").to_str().unwrap()).unwrap();
        assert_eq!(as_run_save(run, path.as_ptr()), AsStatus::Ok);
        let mut again: *mut AsRun = ptr::null_mut();
        assert_eq!(as_run_load(path.as_ptr(), &mut again), AsStatus::Ok);
        assert_eq!(as_run_best_json(again, &mut s), AsStatus::Ok);
        assert_eq!(serde_json::from_str::<serde_json::Value>(&take(s)).unwrap(), best);
        as_run_free(again);
        as_run_free(run);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut run: *mut AsRun = ptr::null_mut();
    unsafe {
        let bad = CString::new(r#"{"c_puct": -1}"#).unwrap();
        assert_eq!(as_run_new(bad.as_ptr(), ptr::null(), &mut run), AsStatus::Config);
        assert!(last_error().contains("c_puct"));
        assert!(run.is_null());

        let ab = CString::new("sideways").unwrap();
        assert_eq!(
            as_run_new(ptr::null(), ab.as_ptr(), &mut run),
            AsStatus::InvalidArgument
        );

        let missing = CString::new("/nonexistent/x.agentsearch.json.gz").unwrap();
        assert_eq!(as_run_load(missing.as_ptr(), &mut run), AsStatus::Persistence);

        assert_eq!(as_run_new(ptr::null(), ptr::null(), &mut run), AsStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(as_run_best_json(run, &mut s), AsStatus::Config);
        assert!(s.is_null());
        as_run_free(run);
    }
}

#[test]
fn metrics_over_raw_buffers() {
    let y = [1.0, 2.0, 3.0, 4.0];
    let mut m = AsMetrics::default();
    unsafe {
        assert_eq!(
            as_metrics_compute(y.as_ptr(), y.as_ptr(), 4, false, &mut m),
            AsStatus::Ok
        );
    }
    assert!((m.norm_gini - 1.0).abs() < 1e-12);
    assert!((m.spearman - 1.0).abs() < 1e-12);
    assert_eq!(m.rmse, 0.0);
    let p = [1.0, 1.0, 1.0];
    unsafe {
        assert_eq!(
            as_metrics_compute(p.as_ptr(), p.as_ptr(), 3, false, &mut m),
            AsStatus::UndefinedMetric
        );
        assert_eq!(
            as_metrics_compute(ptr::null(), p.as_ptr(), 3, false, &mut m),
            AsStatus::InvalidArgument
        );
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(as_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/agentsearch.h");
    let src = format!(
        "#include \"{header}\"\nint main(void) {{ AsRun *r = 0; AsStatus s = as_run_new(0, 0, &r); \
         as_run_free(r); return s == AS_STATUS_OK ? 0 : 1; }}\n"
    );
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("probe.c");
    std::fs::write(&c, src).unwrap();
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&c)
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
