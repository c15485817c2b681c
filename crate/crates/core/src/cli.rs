//! Flat `key=value` configuration, the batch subcommands and their outputs.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::diagnostics::SnapshotWriter;
use crate::experiments::{
    format_flags, write_hstar_csv, Check, ExperimentError, Executor, HSearch, Scenario,
    SweepParam, SweepSpec, Axis, CONSERVATION_TOLERANCE,
};
use crate::geometry::DomainKind;
use crate::io::write_atomic;
use crate::model::{EnvelopeMode, GrowthVariant};
use crate::solver::{Boundary, Observer};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for `{field}`: {reason}")]
    InvalidValue { field: String, reason: String },
}

fn bad_value(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{failed} check(s) failed")]
    ChecksFailed { failed: usize },
}

impl CliError {
    /// 2 configuration, 3 invalid scenario, 4 numerical failure, 5 I/O,
    /// 6 a check did not pass.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Experiment(e) => match e {
                ExperimentError::Geometry(_)
                | ExperimentError::Model(_)
                | ExperimentError::InvalidSpec { .. } => 3,
                _ => 4,
            },
            CliError::Io { .. } => 5,
            CliError::ChecksFailed { .. } => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    Hstar,
    Speedcheck,
    Validate,
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "run" => Ok(Command::Run),
            "sweep" => Ok(Command::Sweep),
            "hstar" => Ok(Command::Hstar),
            "speedcheck" => Ok(Command::Speedcheck),
            "validate" => Ok(Command::Validate),
            other => Err(format!("unknown subcommand `{other}`")),
        }
    }
}

/// Which opening-height search `hstar` performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HStarMode {
    Single,
    Rho,
    RMinus,
}

impl fmt::Display for HStarMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HStarMode::Single => "single",
            HStarMode::Rho => "rho",
            HStarMode::RMinus => "r_minus",
        })
    }
}

impl FromStr for HStarMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(HStarMode::Single),
            "rho" => Ok(HStarMode::Rho),
            "r_minus" => Ok(HStarMode::RMinus),
            other => Err(format!("expected single, rho or r_minus, got `{other}`")),
        }
    }
}

/// Settings of the subcommands beyond the scenario itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sweep_axis1: SweepParam,
    pub sweep_values1: Vec<f64>,
    pub sweep_axis2: SweepParam,
    pub sweep_values2: Vec<f64>,
    pub hstar_mode: HStarMode,
    pub rho_values: Vec<f64>,
    pub r_minus_values: Vec<f64>,
    pub search: HSearch,
    pub snapshot_times: Vec<f64>,
    /// `run` on a type3 domain also writes the type2 comparison.
    pub compare_type2: bool,
    /// Speed check: the initial population fills `x2 < seed_extent`.
    pub seed_extent: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sweep_axis1: SweepParam::Speed,
            sweep_values1: vec![1.0, 1.8, 2.5, 4.0, 6.0],
            sweep_axis2: SweepParam::Diffusion,
            sweep_values2: vec![2.0, 5.0, 10.0, 25.0, 50.0],
            hstar_mode: HStarMode::Single,
            rho_values: vec![0.10, 0.16, 0.20, 0.25],
            r_minus_values: vec![1.2, 1.5, 2.0],
            search: HSearch::default(),
            snapshot_times: Vec::new(),
            compare_type2: false,
            seed_extent: 20.0,
        }
    }
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub experiment: ExperimentConfig,
    pub workers: usize,
    /// Non-fatal remarks collected while parsing.
    pub warnings: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            experiment: ExperimentConfig::default(),
            workers: 1,
            warnings: Vec::new(),
        }
    }
}

const KEYS: &[&str] = &[
    "domain",
    "h",
    "width",
    "south_length",
    "corridor_width",
    "corridor_length",
    "north_extent",
    "dx",
    "model",
    "r_plus",
    "r_minus",
    "K",
    "rho",
    "L",
    "v",
    "envelope",
    "D",
    "dt",
    "end_time",
    "boundary",
    "epsilon",
    "cg_tol",
    "cg_max_iter",
    "window_threshold",
    "window_margin",
    "relax_tol",
    "relax_max_time",
    "sample_every",
    "probe_x1",
    "probe_x2",
    "region_low",
    "region_high",
    "sweep_axis1",
    "sweep_values1",
    "sweep_axis2",
    "sweep_values2",
    "hstar_mode",
    "rho_values",
    "r_minus_values",
    "h_max",
    "h_step",
    "h_resolution",
    "h_full_scan",
    "snapshot_times",
    "compare_type2",
    "seed_extent",
    "workers",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| bad_value(key, format!("`{value}`: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn format_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses flat `key=value` lines. `#` starts a comment; blank lines are
/// ignored; missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: Vec<(&str, &str)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Parse {
                line,
                message: format!("expected key=value, got `{content}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        if entries.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        entries.push((key, value));
    }
    let get = |key: &str| entries.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);

    let mut cfg = RunConfig::default();
    let s = &mut cfg.scenario;
    let x = &mut cfg.experiment;
    let mut model_set = false;
    for &(key, value) in &entries {
        match key {
            "domain" => s.domain.kind = parse_value::<DomainKind>(key, value)?,
            "h" => s.domain.taper_height = parse_value(key, value)?,
            "width" => s.domain.width = parse_value(key, value)?,
            "south_length" => s.domain.south_length = parse_value(key, value)?,
            "corridor_width" => s.domain.corridor_width = parse_value(key, value)?,
            "corridor_length" => s.domain.corridor_length = parse_value(key, value)?,
            "north_extent" => s.domain.north_extent = parse_value(key, value)?,
            "dx" => s.dx = parse_value(key, value)?,
            "model" => {
                s.model.variant = parse_value::<GrowthVariant>(key, value)?;
                model_set = true;
            }
            "r_plus" => s.model.r_plus = parse_value(key, value)?,
            "r_minus" => s.model.r_minus = parse_value(key, value)?,
            "K" => s.model.carrying_capacity = parse_value(key, value)?,
            "rho" => s.model.rho = parse_value(key, value)?,
            "L" => s.envelope.thickness = parse_value(key, value)?,
            "v" => s.envelope.speed = parse_value(key, value)?,
            "envelope" => s.envelope.mode = parse_value::<EnvelopeMode>(key, value)?,
            "D" => s.solver.diffusion = parse_value(key, value)?,
            "dt" => s.solver.dt = parse_value(key, value)?,
            "end_time" => s.solver.end_time = parse_value(key, value)?,
            "boundary" | "epsilon" => {}
            "cg_tol" => s.numerics.linear.rel_tol = parse_value(key, value)?,
            "cg_max_iter" => s.numerics.linear.max_iterations = parse_value(key, value)?,
            "window_threshold" => {
                s.numerics.window.threshold = match value {
                    "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "window_margin" => s.numerics.window.margin_rows = parse_value(key, value)?,
            "relax_tol" => s.relax_tolerance = parse_value(key, value)?,
            "relax_max_time" => s.relax_max_time = parse_value(key, value)?,
            "sample_every" => s.sample_every = parse_value(key, value)?,
            "probe_x1" => s.probe.0 = parse_value(key, value)?,
            "probe_x2" => s.probe.1 = parse_value(key, value)?,
            "region_low" => s.region.0 = parse_value(key, value)?,
            "region_high" => s.region.1 = parse_value(key, value)?,
            "sweep_axis1" => x.sweep_axis1 = parse_value(key, value)?,
            "sweep_values1" => x.sweep_values1 = parse_list(key, value)?,
            "sweep_axis2" => x.sweep_axis2 = parse_value(key, value)?,
            "sweep_values2" => x.sweep_values2 = parse_list(key, value)?,
            "hstar_mode" => x.hstar_mode = parse_value(key, value)?,
            "rho_values" => x.rho_values = parse_list(key, value)?,
            "r_minus_values" => x.r_minus_values = parse_list(key, value)?,
            "h_max" => x.search.h_max = parse_value(key, value)?,
            "h_step" => x.search.coarse_step = parse_value(key, value)?,
            "h_resolution" => x.search.resolution = parse_value(key, value)?,
            "h_full_scan" => x.search.full_scan = parse_value(key, value)?,
            "snapshot_times" => x.snapshot_times = parse_list(key, value)?,
            "compare_type2" => x.compare_type2 = parse_value(key, value)?,
            "seed_extent" => x.seed_extent = parse_value(key, value)?,
            "workers" => cfg.workers = parse_value(key, value)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }

    let boundary = parse_value::<Boundary>("boundary", get("boundary").unwrap_or("neumann"))?;
    let epsilon: f64 = match get("epsilon") {
        Some(v) => parse_value("epsilon", v)?,
        None => 0.0,
    };
    s.solver.boundary = match boundary {
        Boundary::Neumann if epsilon != 0.0 => {
            return Err(bad_value("epsilon", "only applies to a robin boundary"))
        }
        Boundary::Neumann => Boundary::Neumann,
        Boundary::Robin { .. } => Boundary::Robin { epsilon },
    };

    match s.domain.kind {
        DomainKind::Type3 if get("h").is_none() => {
            return Err(bad_value("h", "required for a type3 domain"))
        }
        DomainKind::Type1 | DomainKind::Type2 if s.domain.taper_height != 0.0 => {
            return Err(bad_value("h", "only applies to a type3 domain"))
        }
        _ => {}
    }
    // Probe and region follow the corridor exit unless given.
    let exit = s.domain.corridor_exit();
    if get("probe_x1").is_none() {
        s.probe.0 = s.domain.width / 2.0;
    }
    if get("probe_x2").is_none() {
        s.probe.1 = exit + 2.0;
    }
    if get("region_low").is_none() {
        s.region.0 = exit;
    }
    if get("region_high").is_none() {
        s.region.1 = exit + 4.0;
    }
    if cfg.workers == 0 {
        return Err(bad_value("workers", "must be at least 1"));
    }
    if (model_set || get("rho").is_some())
        && s.model.variant == GrowthVariant::Allee
        && s.model.rho >= 0.5
    {
        cfg.warnings.push(format!(
            "rho = {} >= 0.5: the Allee threshold sits at or above K/2 and the population is expected to die out",
            s.model.rho
        ));
    }
    cfg.scenario.validate().map_err(|e| match e {
        ExperimentError::Model(crate::model::ModelError::NonPositiveSpeed { rho }) => {
            bad_value("rho", format!("{rho}"))
        }
        other => bad_value(invalid_field(&other), other.to_string()),
    })?;
    Ok(cfg)
}

fn invalid_field(e: &ExperimentError) -> &'static str {
    use crate::geometry::GeometryError;
    use crate::model::ModelError;
    use crate::solver::SolverError;
    match e {
        ExperimentError::Geometry(GeometryError::InvalidSpec { field, .. }) => field,
        ExperimentError::Model(ModelError::InvalidParameter { field, .. }) => field,
        ExperimentError::Solver(SolverError::InvalidConfig { field, .. }) => field,
        ExperimentError::InvalidSpec { field, .. } => field,
        _ => "config",
    }
}

impl RunConfig {
    /// Resolved `key=value` lines in a fixed order. The worker count is left
    /// out: it never changes results.
    pub fn manifest(&self) -> String {
        let x = &self.experiment;
        let mut pairs = self.scenario.pairs();
        pairs.extend([
            ("sweep_axis1", x.sweep_axis1.to_string()),
            ("sweep_values1", format_list(&x.sweep_values1)),
            ("sweep_axis2", x.sweep_axis2.to_string()),
            ("sweep_values2", format_list(&x.sweep_values2)),
            ("hstar_mode", x.hstar_mode.to_string()),
            ("rho_values", format_list(&x.rho_values)),
            ("r_minus_values", format_list(&x.r_minus_values)),
            ("h_max", x.search.h_max.to_string()),
            ("h_step", x.search.coarse_step.to_string()),
            ("h_resolution", x.search.resolution.to_string()),
            ("h_full_scan", x.search.full_scan.to_string()),
            ("snapshot_times", format_list(&x.snapshot_times)),
            ("compare_type2", x.compare_type2.to_string()),
            ("seed_extent", x.seed_extent.to_string()),
        ]);
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

/// Human-readable lines describing what a subcommand did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub lines: Vec<String>,
    pub written: Vec<PathBuf>,
    /// Checks that did not pass (speedcheck, validate).
    pub failed: usize,
}

impl Summary {
    /// Turns failed checks into an error so callers can pick an exit code.
    pub fn into_result(self) -> Result<Summary, CliError> {
        match self.failed {
            0 => Ok(self),
            failed => Err(CliError::ChecksFailed { failed }),
        }
    }
}

fn write_file(
    summary: &mut Summary,
    path: PathBuf,
    fill: impl FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>,
) -> Result<(), CliError> {
    write_atomic(&path, fill).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    summary.written.push(path);
    Ok(())
}

fn check_lines(summary: &mut Summary, checks: &[Check]) -> usize {
    let mut failed = 0;
    for c in checks {
        if !c.passed {
            failed += 1;
        }
        summary.lines.push(format!(
            "{} {}: {:.3e} (limit {:.3e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.limit
        ));
    }
    failed
}

/// Runs `command` and writes its outputs plus `manifest.txt` into `out`.
pub fn dispatch(command: Command, config: &RunConfig, out: &Path) -> Result<Summary, CliError> {
    let mut summary = Summary::default();
    summary
        .lines
        .extend(config.warnings.iter().map(|w| format!("warning: {w}")));
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let manifest = config.manifest();
    write_file(&mut summary, out.join("manifest.txt"), |w| {
        io::Write::write_all(w, manifest.as_bytes())
    })?;
    let ex = Executor::new(config.workers);
    let s = &config.scenario;
    let x = &config.experiment;
    match command {
        Command::Run => {
            let mut snapshots = SnapshotWriter::new(
                out.join("snapshots"),
                x.snapshot_times.clone(),
                s.solver.dt,
            );
            let mut observers: Vec<&mut dyn Observer> = Vec::new();
            if !x.snapshot_times.is_empty() {
                observers.push(&mut snapshots);
            }
            let run = ex.run(s, &mut observers)?;
            write_file(&mut summary, out.join("trajectory.csv"), |w| {
                run.trajectory.write_csv(w)
            })?;
            summary.written.extend(snapshots.written.iter().map(|(_, p)| p.clone()));
            summary.lines.push(format!(
                "P(0) = {}, P(end) = {}, outcome {}{}",
                run.trajectory.initial_population(),
                run.trajectory.final_population(),
                run.outcome.kind,
                match format_flags(&run.flags) {
                    f if f.is_empty() => String::new(),
                    f => format!(" [{f}]"),
                }
            ));
            if x.compare_type2 {
                let report = ex.corridor_exit_report(s)?;
                write_file(&mut summary, out.join("corridor_exit.csv"), |w| {
                    report.write_csv(w)
                })?;
                let show = |c: Option<f64>| c.map_or("never".to_string(), |t| format!("t = {t}"));
                summary.lines.push(format!(
                    "probe reaches {}: type2 {}, type3 {}",
                    report.threshold,
                    show(report.crossing_type2),
                    show(report.crossing_type3)
                ));
            }
        }
        Command::Sweep => {
            let spec = SweepSpec {
                axis1: Axis::new(x.sweep_axis1, x.sweep_values1.clone()),
                axis2: Axis::new(x.sweep_axis2, x.sweep_values2.clone()),
                base: s.clone(),
            };
            let result = ex.sweep(&spec)?;
            write_file(&mut summary, out.join("sweep.csv"), |w| result.write_csv(w))?;
            let extinct = result
                .cells
                .iter()
                .filter(|c| c.is_extinct() == Some(true))
                .count();
            summary.lines.push(format!(
                "{} cells, {} extinct, {} failed",
                result.cells.len(),
                extinct,
                result.failures()
            ));
        }
        Command::Hstar => {
            let (param, rows): (&str, Vec<(f64, Option<f64>)>) = match x.hstar_mode {
                HStarMode::Single => {
                    let r = ex.critical_h(s, &x.search)?;
                    ("D", vec![(s.solver.diffusion, r.h_star)])
                }
                HStarMode::Rho => (
                    "rho",
                    ex.rho_curve(s, &x.rho_values, &x.search)?
                        .into_iter()
                        .map(|(p, r)| (p, r.h_star))
                        .collect(),
                ),
                HStarMode::RMinus => (
                    "r_minus",
                    ex.r_minus_sensitivity(s, &x.r_minus_values, &x.search)?
                        .into_iter()
                        .map(|(p, r)| (p, r.h_star))
                        .collect(),
                ),
            };
            write_file(&mut summary, out.join("hstar.csv"), |w| {
                write_hstar_csv(w, param, &rows)
            })?;
            for (p, h) in rows {
                summary.lines.push(format!(
                    "{param} = {p}: h* = {}",
                    h.map_or("none".to_string(), |h| h.to_string())
                ));
            }
        }
        Command::Speedcheck => {
            let c = ex.speed_check(s, x.seed_extent)?;
            write_file(&mut summary, out.join("speedcheck.csv"), |w| {
                writeln_all(
                    w,
                    &[
                        "model,D,measured,predicted,relative_error,pass".to_string(),
                        format!(
                            "{},{},{},{},{},{}",
                            s.model.variant,
                            s.solver.diffusion,
                            c.measured,
                            c.predicted,
                            c.relative_error,
                            c.passed()
                        ),
                    ],
                )
            })?;
            summary.lines.push(format!(
                "{} front speed {:.4} vs predicted {:.4} ({:.1}%): {}",
                s.model.variant,
                c.measured,
                c.predicted,
                100.0 * c.relative_error,
                if c.passed() { "PASS" } else { "FAIL" }
            ));
            if !c.passed() {
                summary.failed += 1;
            }
        }
        Command::Validate => {
            let drift = ex.conservation_drift(s)?;
            let mut checks = vec![Check {
                name: "conservation".into(),
                value: drift,
                limit: CONSERVATION_TOLERANCE,
                passed: drift <= CONSERVATION_TOLERANCE,
            }];
            checks.extend(ex.positivity_checks(s)?);
            checks.push(ex.refinement_check(s)?);
            write_file(&mut summary, out.join("validate.csv"), |w| {
                let mut lines = vec!["check,value,limit,pass".to_string()];
                lines.extend(
                    checks
                        .iter()
                        .map(|c| format!("{},{},{},{}", c.name, c.value, c.limit, c.passed)),
                );
                writeln_all(w, &lines)
            })?;
            summary.failed += check_lines(&mut summary, &checks);
        }
    }
    Ok(summary)
}

fn writeln_all(w: &mut impl io::Write, lines: &[String]) -> io::Result<()> {
    for l in lines {
        writeln!(w, "{l}")?;
    }
    Ok(())
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.scenario.domain.kind, DomainKind::Type1);
        assert_eq!(cfg.scenario.model.variant, GrowthVariant::Logistic);
        assert_eq!(cfg.scenario.solver.diffusion, 10.0);
        assert_eq!(cfg.scenario.envelope.speed, 2.5);
        assert_eq!(cfg.scenario.model.rho, 0.25);
        assert_eq!(cfg.scenario.envelope.thickness, 30.0);
    }

    #[test]
    fn high_rho_warns() {
        let cfg = parse_config("model=allee\nrho=0.6").unwrap();
        assert_eq!(cfg.warnings.len(), 1);
        assert!(parse_config("model=allee").unwrap().warnings.is_empty());
    }

    #[test]
    fn type3_needs_h() {
        let err = parse_config("domain=type3").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { ref field, .. } if field == "h"));
        let cfg = parse_config("domain=type3\nh=25").unwrap();
        assert_eq!(cfg.scenario.domain.taper_height, 25.0);
        assert!(parse_config("domain=type2\nh=3").is_err());
    }

    #[test]
    fn errors_carry_lines_and_fields() {
        assert_eq!(
            parse_config("# c\nD=5\nfoo=1").unwrap_err(),
            ConfigError::UnknownKey {
                line: 3,
                key: "foo".into()
            }
        );
        assert!(matches!(
            parse_config("D=5\nnot a pair").unwrap_err(),
            ConfigError::Parse { line: 2, .. }
        ));
        assert!(matches!(
            parse_config("D=abc").unwrap_err(),
            ConfigError::InvalidValue { ref field, .. } if field == "D"
        ));
        assert!(matches!(
            parse_config("r_minus=0.5").unwrap_err(),
            ConfigError::InvalidValue { ref field, .. } if field == "r_minus"
        ));
        assert!(matches!(
            parse_config("D=1\nD=2").unwrap_err(),
            ConfigError::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn inline_comments_and_spaces() {
        let cfg = parse_config("  v = 1.8   # slower\n\nmodel = allee\n").unwrap();
        assert_eq!(cfg.scenario.envelope.speed, 1.8);
        assert_eq!(cfg.scenario.model.variant, GrowthVariant::Allee);
    }

    #[test]
    fn robin_epsilon() {
        let cfg = parse_config("boundary=robin\nepsilon=0.1").unwrap();
        assert_eq!(cfg.scenario.solver.boundary, Boundary::Robin { epsilon: 0.1 });
        assert!(parse_config("epsilon=0.1").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let text = "domain=type3\nh=12.5\nmodel=allee\nrho=0.2\nD=7\nv=1.8\nsweep_axis1=h\n\
                    sweep_values1=0,5,10\nsnapshot_times=1,2.5\nwindow_threshold=none\n\
                    boundary=robin\nepsilon=0.05\nworkers=3";
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&cfg.manifest()).unwrap();
        assert_eq!(again.scenario, cfg.scenario);
        assert_eq!(again.experiment, cfg.experiment);
        assert_eq!(again.manifest(), cfg.manifest());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            CliError::Config(bad_value("x", "y")).exit_code(),
            CliError::Experiment(ExperimentError::InvalidSpec {
                field: "x",
                reason: String::new(),
            })
            .exit_code(),
            CliError::Experiment(ExperimentError::Pool(String::new())).exit_code(),
            CliError::Io {
                path: PathBuf::new(),
                source: io::Error::other("x"),
            }
            .exit_code(),
            CliError::ChecksFailed { failed: 1 }.exit_code(),
        ];
        let mut sorted = codes.to_vec();
        sorted.dedup();
        assert_eq!(sorted.len(), codes.len());
        assert!(codes.iter().all(|&c| c != 0));
    }

    proptest::proptest! {
        #[test]
        fn manifest_round_trips_any_values(
            d in 0.01f64..500.0,
            v in 0.0f64..10.0,
            rho in 0.0f64..0.49,
            h in 0.0f64..300.0,
            dt in 1e-4f64..0.1,
        ) {
            let text = format!("model=allee\ndomain=type3\nh={h}\nD={d}\nv={v}\nrho={rho}\ndt={dt}");
            let cfg = parse_config(&text).unwrap();
            let again = parse_config(&cfg.manifest()).unwrap();
            proptest::prop_assert_eq!(&again.scenario, &cfg.scenario);
            proptest::prop_assert_eq!(again.manifest(), cfg.manifest());
        }
    }

}
