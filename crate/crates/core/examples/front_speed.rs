//! Measures invasion front speeds on a fully suitable Type1 domain and
//! compares them with the analytic spreading speeds.

use rangeshift::experiments::{Executor, Scenario};
use rangeshift::model::GrowthModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ex = Executor::new(1);
    for (model, d) in [
        (GrowthModel::logistic(1.0, 2.0, 10.0), 1.0),
        (GrowthModel::logistic(1.0, 2.0, 10.0), 10.0),
        (GrowthModel::allee(1.0, 2.0, 10.0, 0.25), 10.0),
    ] {
        let mut s = Scenario::default();
        s.model = model;
        s.solver.diffusion = d;
        let c = ex.speed_check(&s, 20.0)?;
        println!(
            "{:<8} D = {d:>4}: measured {:.4}, predicted {:.4} ({:+.1}%) {}",
            model.variant,
            c.measured,
            c.predicted,
            100.0 * (c.measured - c.predicted) / c.predicted,
            if c.passed() { "ok" } else { "off" }
        );
    }
    Ok(())
}
