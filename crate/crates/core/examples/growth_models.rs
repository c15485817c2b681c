//! Per-capita growth inside and outside the envelope, and the analytic
//! spreading speeds of both growth laws.

use rangeshift::model::{EnvelopeSpec, GrowthModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let logistic = GrowthModel::logistic(1.0, 2.0, 10.0);
    let allee = GrowthModel::allee(1.0, 2.0, 10.0, 0.25);

    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "u", "logistic", "outside", "allee", "outside");
    for u in [0.0, 1.0, 2.5, 5.0, 6.25, 10.0, 15.0] {
        println!(
            "{u:>6} {:>12.4} {:>12.4} {:>12.4} {:>12.4}",
            logistic.per_capita_growth(true, u),
            logistic.per_capita_growth(false, u),
            allee.per_capita_growth(true, u),
            allee.per_capita_growth(false, u),
        );
    }

    for d in [1.0, 10.0, 50.0] {
        println!(
            "D = {d:>4}: c_logistic = {:.4} km/yr, c_allee = {:.4} km/yr",
            logistic.spreading_speed(d)?,
            allee.spreading_speed(d)?
        );
    }
    for rho in [0.0, 0.1, 0.25, 0.4, 0.5] {
        let m = GrowthModel::allee(1.0, 2.0, 10.0, rho);
        match m.spreading_speed(10.0) {
            Ok(c) => println!("rho = {rho:<4}: c = {c:.4}"),
            Err(e) => println!("rho = {rho:<4}: {e}"),
        }
    }

    let env = EnvelopeSpec::shifting(30.0, 2.5);
    for t in [0.0, 10.0, 30.0] {
        let (lo, hi) = env.bounds(t);
        println!("t = {t:>4}: envelope [{lo}, {hi}]");
    }
    Ok(())
}
