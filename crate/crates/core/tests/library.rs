use curveflow::config::{Config, RawConfig};
use curveflow::curvature::CurvatureFunctionSpec;
use curveflow::grid::Grid;
use curveflow::io::{load_snapshot_dir, parse_snapshot_csv, snapshot_csv, OutputDir};
use curveflow::ladder::{first_split, label_components, TimelineEntry};
use curveflow::monitors::{monitor_comparison, monitor_monotone};
use curveflow::solver::{initialize, run, InitialData, RunResult, Snapshot, StepperConfig};

fn tiny_run(offset: f64) -> RunResult {
    let grid = Grid::cube(2, 2.0, 25).unwrap();
    let init = InitialData::from_fn(grid, |x| 4.0 * (x[0] * x[0] + x[1] * x[1]) - 1.0 + offset).unwrap();
    let cfg = StepperConfig { t_end: 0.05, snapshot_every: 0.01, ..StepperConfig::default() };
    let spec = CurvatureFunctionSpec::mean(2);
    run(initialize(&init, 8.0, &cfg, &spec).unwrap(), &spec, &cfg, &mut []).unwrap()
}

#[test]
fn snapshot_csv_round_trip() {
    let r = tiny_run(0.0);
    let snap = r.final_snapshot();
    let loaded = parse_snapshot_csv(&snapshot_csv(&r.grid, snap, r.ceiling)).unwrap();
    assert_eq!(loaded.grid.len(), r.grid.len());
    assert_eq!(loaded.ceiling, r.ceiling);
    assert_eq!(loaded.snapshot.t, snap.t);
    assert_eq!(loaded.snapshot.u, snap.u);
}

#[test]
fn snapshot_dir_reload_keeps_monotonicity() {
    let r = tiny_run(0.0);
    let dir = tempfile::tempdir().unwrap();
    let mut out = OutputDir::create(dir.path()).unwrap();
    out.write_run_snapshots(&r).unwrap();
    out.finish(&"test").unwrap();
    let back = load_snapshot_dir(&dir.path().join("snapshots"), &StepperConfig::default()).unwrap();
    assert_eq!(back.snapshots.len(), r.snapshots.len());
    assert!(monitor_monotone(&back, 1e-12).ok());
}

#[test]
fn monotone_monitor_flags_a_decrease() {
    let mut r = tiny_run(0.0);
    let n = r.snapshots.len();
    let mut bad = r.snapshots[n - 1].clone();
    let idx = r.grid.nearest(&[0.0, 0.0]).unwrap();
    bad.u[idx] -= 1e-3;
    bad.t += 0.01;
    r.snapshots.push(Snapshot { t: bad.t, u: bad.u });
    r.worst_descent = -1e-3;
    assert!(!monitor_monotone(&r, 1e-12).passed);
}

#[test]
fn comparison_holds_for_lifted_data() {
    let low = tiny_run(0.0);
    let high = tiny_run(1.0);
    assert!(monitor_comparison(&low, &high).unwrap().ok());
    assert!(!monitor_comparison(&high, &low).unwrap().passed);
}

#[test]
fn components_and_split_detection() {
    let grid = Grid::cube(2, 1.0, 9).unwrap();
    let mask: Vec<bool> = (0..grid.len()).map(|i| grid.coords(i)[0].abs() > 0.3).collect();
    let (_, count) = label_components(&grid, &mask);
    assert_eq!(count, 2);
    let timeline: Vec<TimelineEntry> = [(0.0, 1), (0.1, 1), (0.2, 2), (0.3, 2)]
        .into_iter()
        .map(|(t, components)| TimelineEntry { t, components, volumes: Vec::new() })
        .collect();
    assert_eq!(first_split(&timeline), Some(0.2));
}

#[test]
fn config_text_and_overrides() {
    let mut raw = RawConfig::from_text("# demo\nspeed = quotient:k=2,l=1\nnodes = 65\n").unwrap();
    raw.set("ceiling=30").unwrap();
    let cfg = Config::from_raw(raw).unwrap();
    assert_eq!(cfg.speed.name(), "quotient:k=2,l=1");
    assert_eq!(cfg.nodes, vec![65, 65]);
    assert_eq!(cfg.ceiling, 30.0);
    assert!(RawConfig::from_text("nodes = 3\nnodes = 5\n").is_err());
    assert!(RawConfig::from_text("bogus = 1\n").and_then(Config::from_raw).is_err());
}
