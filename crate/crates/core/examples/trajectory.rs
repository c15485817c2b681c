//! Full pipeline for one scenario: steady state, 30-year run, trajectory CSV
//! on stdout and optional density snapshots.
//!
//!     cargo run --release --example trajectory -- allee type3 25 > traj.csv

use rangeshift::diagnostics::SnapshotWriter;
use rangeshift::experiments::{Executor, Scenario};
use rangeshift::geometry::DomainSpec;
use rangeshift::model::GrowthModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut s = Scenario::default();
    if args.first().map(String::as_str) == Some("allee") {
        s.model = GrowthModel::allee(1.0, 2.0, 10.0, 0.25);
    }
    s.domain = match args.get(1).map(String::as_str) {
        Some("type2") => DomainSpec::type2(),
        Some("type3") => DomainSpec::type3(args.get(2).map(|h| h.parse()).transpose()?.unwrap_or(25.0)),
        _ => DomainSpec::type1(),
    };

    let mut snapshots = SnapshotWriter::new(
        std::env::temp_dir().join("rangeshift-snapshots"),
        vec![0.0, 10.0, 30.0],
        s.solver.dt,
    );
    let run = Executor::new(1).run(&s, &mut [&mut snapshots])?;
    run.trajectory.write_csv(std::io::stdout().lock())?;
    eprintln!(
        "P(0) = {:.1}, P(30) = {:.3}, {}",
        run.trajectory.initial_population(),
        run.outcome.p30,
        run.outcome.kind
    );
    for (t, path) in &snapshots.written {
        eprintln!("snapshot t = {t}: {}", path.display());
    }
    Ok(())
}
