//! Parses a flat key=value configuration, prints the resolved manifest and
//! dispatches the `run` subcommand into a temporary directory.

use rangeshift::cli::{dispatch, parse_config, Command};

const CONFIG: &str = "\
# Allee population, Type3 domain with a 25 km taper
domain = type3
h = 25
model = allee
dx = 0.5          # coarse, for a quick look
snapshot_times = 5,10
compare_type2 = true
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = parse_config(CONFIG)?;
    print!("{}", config.manifest());

    let out = std::env::temp_dir().join("rangeshift-config-example");
    let summary = dispatch(Command::Run, &config, &out)?;
    for line in &summary.lines {
        println!("# {line}");
    }
    for path in &summary.written {
        println!("# wrote {}", path.display());
    }
    Ok(())
}
