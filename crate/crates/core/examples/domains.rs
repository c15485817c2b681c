//! Builds the three domain types, prints their areas and writes the Type3
//! mask as CSV.
//!
//!     cargo run --release --example domains -- [h] [dx] [mask.csv]

use std::fs::File;
use std::io::BufWriter;

use rangeshift::geometry::{build_domain, rasterize, DomainKind, DomainSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let h: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(25.0);
    let dx: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0.25);
    let mask = args.next();

    for spec in [DomainSpec::type1(), DomainSpec::type2(), DomainSpec::type3(h)] {
        let geom = build_domain(spec)?;
        let grid = rasterize(&geom, dx)?;
        println!(
            "{:<6} {:>5}x{:<5} cells, {:>7} active, area {:>8.2} km^2",
            spec.kind,
            grid.nx(),
            grid.ny(),
            grid.active_count(),
            grid.active_area()
        );
        for x2 in [20.0, 42.0, 44.0 + h / 2.0, 100.0] {
            if let Some(w) = geom.half_width_at(x2) {
                println!("         half-width at x2 = {x2:>5}: {w:.3} km");
            }
        }
        if let (Some(path), true) = (&mask, spec.kind == DomainKind::Type3) {
            grid.write_mask_csv(BufWriter::new(File::create(path)?))?;
            println!("         mask written to {path}");
        }
    }
    Ok(())
}
