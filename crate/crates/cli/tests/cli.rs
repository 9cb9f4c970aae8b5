use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn r2f2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_r2f2"))
        .args(args)
        .env("R2F2_THREADS", "2")
        .output()
        .expect("spawn r2f2")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn eq1_prints_exponent_width() {
    let dir = tempfile::tempdir().unwrap();
    let out = r2f2(&["eq1", "--vmax", "110", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "6");
    let inv = fs::read_to_string(dir.path().join("invocation.txt")).unwrap();
    assert!(inv.contains("--seed 2024"));
}

#[test]
fn profile_sweep_writes_error_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = r2f2(&[
        "profile-sweep",
        "--backend",
        "<3,9,3>",
        "--adaptive",
        "--baseline",
        "E5M10",
        "--intervals",
        "20",
        "--pairs",
        "10",
        "--seed",
        "7",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let expected = "interval_lo,interval_hi,mean_err_pct,max_err_pct,overflow_count";
    assert_eq!(header(&dir.path().join("errors.csv")), expected);
    assert_eq!(header(&dir.path().join("baseline_errors.csv")), expected);
    let rows = fs::read_to_string(dir.path().join("errors.csv")).unwrap().lines().count();
    assert_eq!(rows, 21);
    let reduction: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reduction.json")).unwrap()).unwrap();
    assert!(reduction.is_object());
}

#[test]
fn profile_sweep_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = r2f2(&[
            "profile-sweep", "--backend", "E5M10", "--intervals", "10", "--pairs", "20", "--seed", "3", "--out",
            &out_arg(dir.path()),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(
        fs::read(a.path().join("errors.csv")).unwrap(),
        fs::read(b.path().join("errors.csv")).unwrap()
    );
}

#[test]
fn grid_search_ranks_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = r2f2(&[
        "grid-search", "--lo", "1000", "--hi", "1100", "--samples", "500", "--out", &out_arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&dir.path().join("grid.csv")), "e,m,mean_err_pct");
}

#[test]
fn sim_heat_from_config_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("heat.json");
    fs::write(
        &cfg,
        r#"{"equation":"heat","n":64,"steps":50,"r":0.25,"init":"exp","backend":"<3,9,3>","snapshots":[0,25,50],"seed":1}"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = r2f2(&["sim-heat", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&run)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&run.join("snapshots.csv")), "step,index,value");
    assert_eq!(header(&run.join("events.csv")), "step_index,kind,old_k,new_k");
    assert!(run.join("run.json").exists());

    let reference = dir.path().join("ref");
    let out = r2f2(&["sim-heat", "--n", "64", "--steps", "50", "--snapshots", "0,25,50", "--out", &out_arg(&reference)]);
    assert_eq!(out.status.code(), Some(0));

    let cmp = dir.path().join("cmp");
    let out = r2f2(&[
        "compare",
        run.join("snapshots.csv").to_str().unwrap(),
        reference.join("snapshots.csv").to_str().unwrap(),
        "--out",
        &out_arg(&cmp),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(cmp.join("compare.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,rmse,linf_rel");
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn sim_swe_writes_grid_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = r2f2(&["sim-swe", "--nx", "16", "--ny", "16", "--steps", "5", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&dir.path().join("snapshots.csv")), "step,i,j,h,hu,hv");
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert_eq!(r2f2(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(r2f2(&["eq1", "--vmax", "-3", "--out", &out]).status.code(), Some(1));
    assert_eq!(r2f2(&["sim-heat", "--r", "0.9", "--out", &out]).status.code(), Some(1));
    assert_eq!(r2f2(&["sim-swe", "--dt", "50", "--out", &out]).status.code(), Some(1));
    assert_eq!(r2f2(&["profile-sweep", "--backend", "<9,9,9>", "--out", &out]).status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"equation":"heat","n":64,"bogus":1}"#).unwrap();
    assert_eq!(r2f2(&["sim-heat", "--config", bad.to_str().unwrap(), "--out", &out]).status.code(), Some(1));

    let threads = Command::new(env!("CARGO_BIN_EXE_r2f2"))
        .args(["eq1", "--vmax", "10", "--out", &out])
        .env("R2F2_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = r2f2(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("profile-sweep"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = r2f2(&["selftest", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("selftest.json").exists());
}
