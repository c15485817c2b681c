//! Relaxes the frozen-envelope problem to its positive steady state on a
//! Type1 domain and reports the initial population of each growth law.

use rangeshift::diagnostics::total_population;
use rangeshift::geometry::{build_domain, rasterize, DomainSpec};
use rangeshift::model::{EnvelopeSpec, GrowthModel};
use rangeshift::solver::{relax_to_steady_state, InitialGuess, RelaxationSettings, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dx: f64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(0.25);
    let grid = rasterize(&build_domain(DomainSpec::type1())?, dx)?;
    let env = EnvelopeSpec::shifting(30.0, 2.5);
    let config = SolverConfig::default();

    for model in [
        GrowthModel::logistic(1.0, 2.0, 10.0),
        GrowthModel::allee(1.0, 2.0, 10.0, 0.25),
    ] {
        let report = relax_to_steady_state(
            &grid,
            &model,
            &env,
            &config,
            &InitialGuess::for_model(&model),
            RelaxationSettings::default(),
        )?;
        println!(
            "{:<8} P(0) = {:.1} after {} yr of relaxation (residual {:.1e}, max u {:.3})",
            model.variant,
            total_population(&grid, &report.field),
            report.relaxation_time,
            report.residual,
            report.field.max()
        );
    }
    Ok(())
}
