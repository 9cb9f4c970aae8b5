use std::fs::File;

use r2f2::adjuster::write_events_csv;
use r2f2::pde::{heat1d_run, read_snapshots_csv, HeatConfig, HeatInit, SimConfig};
use r2f2::profiler::{distribution_histogram, sweep_error, HistogramOptions, SweepSpec};
use r2f2::{Backend, Execution, FixedFormat};

#[test]
fn half_precision_sweep_marks_overflowing_intervals() {
    let spec = SweepSpec::new(1e-4, 1e4, 200, 40, 11).unwrap();
    let report = sweep_error(&spec, Backend::Fixed(FixedFormat::E5M10), Execution::Parallel).unwrap();
    for s in &report.intervals {
        if s.lo * s.lo > 65520.0 {
            assert_eq!(s.mean_err_pct, 100.0);
            assert_eq!(s.overflow_count, 40);
        }
    }
    assert!(report.overflow_intervals() > 0);
}

#[test]
fn heat_stages_shrink() {
    let cfg = HeatConfig {
        n: 128,
        steps: 4000,
        amplitude: 500.0,
        snapshots: (0..=4000).step_by(100).collect(),
        ..HeatConfig::new(HeatInit::Sin, Backend::Binary32)
    };
    let run = heat1d_run(&cfg).unwrap();
    let d = distribution_histogram(&run.trace(), HistogramOptions::default()).unwrap();
    let widths: Vec<f64> = d.stage_ranges.iter().map(|(lo, hi)| hi - lo).collect();
    assert!(widths.windows(2).all(|w| w[1] < w[0]), "{widths:?}");
    assert_eq!(d.whole.total(), run.trace().len() as u64);
}

#[test]
fn artifacts_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimConfig::from_json(
        r#"{"equation":"heat","n":40,"steps":50,"r":0.25,"init":"exp","backend":"<3,9,3>+adaptive","snapshots":[10,20],"seed":5}"#,
    )
    .unwrap();
    let run = cfg.run().unwrap();

    let snap_path = dir.path().join("snapshots.csv");
    run.write_snapshots_csv(File::create(&snap_path).unwrap()).unwrap();
    assert_eq!(read_snapshots_csv(File::open(&snap_path).unwrap()).unwrap(), run.snapshots);

    let events_path = dir.path().join("events.csv");
    write_events_csv(&run.events, File::create(&events_path).unwrap()).unwrap();
    let text = std::fs::read_to_string(&events_path).unwrap();
    assert!(text.starts_with("step_index,kind,old_k,new_k\n"));
    assert_eq!(text.lines().count(), run.events.len() + 1);

    let spec = SweepSpec::new(0.5, 2.0, 4, 10, 1).unwrap();
    let report = sweep_error(&spec, Backend::Binary32, Execution::Sequential).unwrap();
    let err_path = dir.path().join("errors.csv");
    report.write_csv(File::create(&err_path).unwrap()).unwrap();
    let mut rdr = csv::Reader::from_path(&err_path).unwrap();
    assert_eq!(rdr.records().count(), 4);
}
