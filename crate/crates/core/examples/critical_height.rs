//! Searches the smallest taper height that lets an Allee population escape
//! through the corridor.
//!
//!     cargo run --release --example critical_height -- [D] [rho]

use rangeshift::experiments::{Executor, HSearch, Scenario};
use rangeshift::model::GrowthModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let d: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(10.0);
    let rho: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0.25);

    let mut base = Scenario::default();
    base.model = GrowthModel::allee(1.0, 2.0, 10.0, rho);
    base.solver.diffusion = d;

    let result = Executor::new(1).critical_h(&base, &HSearch::default())?;
    for e in &result.evaluations {
        println!(
            "h = {:>5}: P(30) = {:>12.4e} {}",
            e.h,
            e.result.p30.unwrap_or(f64::NAN),
            e.result.outcome.map(|k| k.to_string()).unwrap_or_default()
        );
    }
    match result.h_star {
        Some(h) => println!("h* = {h} km"),
        None => println!("extinct for every h up to 30 km"),
    }
    if !result.monotone {
        println!("warning: outcome is not monotone in h");
    }
    Ok(())
}
