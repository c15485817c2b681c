//! A (v, D) sweep for the logistic model on a Type2 domain. The grid is
//! coarsened to dx = 0.5 km so the nine cells finish quickly; the sweep CSV
//! goes to stdout.

use rangeshift::diagnostics::OutcomeKind;
use rangeshift::experiments::{Axis, Executor, Scenario, SweepParam, SweepSpec};
use rangeshift::geometry::DomainSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let workers: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(1);
    let mut base = Scenario::default();
    base.domain = DomainSpec::type2();
    base.dx = 0.5;

    let spec = SweepSpec {
        axis1: Axis::new(SweepParam::Speed, vec![1.0, 2.5, 6.0]),
        axis2: Axis::new(SweepParam::Diffusion, vec![2.0, 10.0, 50.0]),
        base,
    };
    let result = Executor::new(workers).sweep(&spec)?;
    result.write_csv(std::io::stdout().lock())?;

    for (i, row) in result.outcome_mask().iter().enumerate() {
        let cells: String = row
            .iter()
            .map(|k| match k {
                Some(OutcomeKind::Extinct) => 'x',
                Some(OutcomeKind::Persistent) => '.',
                None => '?',
            })
            .collect();
        eprintln!("v = {:<4} {cells}", spec.axis1.values[i]);
    }
    Ok(())
}
