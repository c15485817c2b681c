//! Conservation, positivity and refinement checks on a reduced scenario
//! (dx = 0.5 km, 10 years).

use rangeshift::experiments::{Executor, Scenario, CONSERVATION_TOLERANCE};
use rangeshift::geometry::DomainSpec;
use rangeshift::model::GrowthModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut s = Scenario::default();
    s.domain = DomainSpec::type2();
    s.model = GrowthModel::allee(1.0, 2.0, 10.0, 0.25);
    s.dx = 0.5;
    s.solver.end_time = 10.0;

    let ex = Executor::new(1);
    let drift = ex.conservation_drift(&s)?;
    println!(
        "conservation: drift {drift:.2e} (limit {CONSERVATION_TOLERANCE:.0e})"
    );
    for c in ex.positivity_checks(&s)?.into_iter().chain([ex.refinement_check(&s)?]) {
        println!(
            "{:<16} {:.3e} (limit {:.1e}) {}",
            c.name,
            c.value,
            c.limit,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
