use std::fs;

use rangeshift::cli::{dispatch, parse_config, Command, ConfigError};

/// Coarse and short so each dispatch takes well under a second.
const QUICK: &str = "north_extent=80\ndx=0.5\ndt=0.05\nend_time=3\n";

#[test]
fn run_writes_manifest_trajectory_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&format!("{QUICK}snapshot_times=1,3\n")).unwrap();
    let summary = dispatch(Command::Run, &cfg, dir.path()).unwrap();
    assert_eq!(summary.failed, 0);
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,P,P1,u_xc,clamped_mass\n"));
    assert_eq!(traj.lines().count(), 1 + 7);
    assert!(dir.path().join("snapshots/u_1.00.csv").exists());
    assert!(dir.path().join("snapshots/u_3.00.csv").exists());
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("dx=0.5\n"));
    assert!(!manifest.contains("workers"));
    let leftovers = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().to_string_lossy().ends_with(".partial"))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn manifest_reingestion_reproduces_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = parse_config(&format!("{QUICK}model=allee\ndomain=type3\nh=6\n")).unwrap();
    dispatch(Command::Run, &cfg, a.path()).unwrap();
    let manifest = fs::read_to_string(a.path().join("manifest.txt")).unwrap();
    let again = parse_config(&manifest).unwrap();
    dispatch(Command::Run, &again, b.path()).unwrap();
    for f in ["manifest.txt", "trajectory.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn sweep_csv_is_independent_of_workers() {
    let text = format!("{QUICK}sweep_values1=1,2.5\nsweep_values2=5,10\n");
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(&text).unwrap();
    dispatch(Command::Sweep, &cfg, one.path()).unwrap();
    cfg.workers = 2;
    dispatch(Command::Sweep, &cfg, two.path()).unwrap();
    let a = fs::read(one.path().join("sweep.csv")).unwrap();
    assert_eq!(a, fs::read(two.path().join("sweep.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("v,D,P30,outcome,flags\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn hstar_writes_none_when_everything_dies() {
    // A 1 km envelope cannot support a population: h* is none.
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&format!("{QUICK}model=allee\nL=1\nh_max=8\n")).unwrap();
    dispatch(Command::Hstar, &cfg, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("hstar.csv")).unwrap();
    assert_eq!(csv, "D,h_star\n10,none\n");
}

#[test]
fn validate_passes_on_a_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(QUICK).unwrap();
    let summary = dispatch(Command::Validate, &cfg, dir.path()).unwrap();
    assert_eq!(summary.failed, 0, "{:?}", summary.lines);
    let csv = fs::read_to_string(dir.path().join("validate.csv")).unwrap();
    assert!(csv.starts_with("check,value,limit,pass\n"));
    assert!(!csv.contains("false"));
}

#[test]
fn config_errors() {
    assert!(matches!(
        parse_config("model=allee\nrho=0.6").map(|c| c.warnings.len()),
        Ok(1)
    ));
    assert!(matches!(
        parse_config("domain=type3"),
        Err(ConfigError::InvalidValue { .. })
    ));
    assert!(matches!(
        parse_config("x=1"),
        Err(ConfigError::UnknownKey { line: 1, .. })
    ));
    assert!(matches!(
        parse_config("sweep_axis1=q"),
        Err(ConfigError::InvalidValue { .. })
    ));
}
