//! Scenario pipeline, parameter sweeps and the critical opening height search.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::{
    classify_outcome, total_population, DiagnosticsError, FrontTracker, Outcome, OutcomeKind,
    Trajectory,
};
use crate::geometry::{build_domain, rasterize, DomainKind, DomainSpec, GeometryError, Grid};
use crate::model::{EnvelopeSpec, GrowthModel, GrowthVariant, ModelError};
use crate::solver::{
    relax_to_steady_state, run_with_numerics, Boundary, Diffuser, Field, InitialGuess, Numerics,
    Observer, RelaxationSettings, Sampling, SolverConfig, SolverError, SteadyStateReport,
};

/// Allowed relative deviation of a measured front speed.
pub const SPEED_TOLERANCE: f64 = 0.10;
/// Allowed relative change of `P(30)` under grid refinement.
pub const REFINEMENT_TOLERANCE: f64 = 0.02;
/// Allowed relative drift of the population in a reaction-free no-flux run.
pub const CONSERVATION_TOLERANCE: f64 = 1e-8;
/// Allowed clamped mass as a fraction of `P(0)`.
pub const CLAMP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("steady state failed: {0}")]
    SteadyState(Arc<SolverError>),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("invalid {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidSpec {
        field,
        reason: reason.into(),
    }
}

/// Everything needed for one simulation, from geometry to observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub domain: DomainSpec,
    pub dx: f64,
    pub model: GrowthModel,
    pub envelope: EnvelopeSpec,
    pub solver: SolverConfig,
    pub numerics: Numerics,
    pub relax_tolerance: f64,
    pub relax_max_time: f64,
    /// Trajectory cadence in steps.
    pub sample_every: usize,
    /// Density probe `x_c`.
    pub probe: (f64, f64),
    /// Latitude band of the tracked region, open at both ends.
    pub region: (f64, f64),
}

impl Default for Scenario {
    fn default() -> Self {
        let domain = DomainSpec::type1();
        let exit = domain.corridor_exit();
        Self {
            domain,
            dx: 0.25,
            // Logistic growth ignores rho; it is kept ready for a switch to Allee.
            model: GrowthModel {
                rho: 0.25,
                ..GrowthModel::default()
            },
            envelope: EnvelopeSpec::default(),
            solver: SolverConfig::default(),
            numerics: Numerics::default(),
            relax_tolerance: RelaxationSettings::default().tolerance,
            relax_max_time: RelaxationSettings::default().max_time,
            sample_every: 10,
            probe: (domain.width / 2.0, exit + 2.0),
            region: (exit, exit + 4.0),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.domain.validate()?;
        if !(self.dx.is_finite() && self.dx > 0.0) {
            return Err(invalid("dx", "must be positive"));
        }
        self.model.validate()?;
        self.envelope.validate()?;
        self.solver.validate()?;
        if self.sample_every == 0 {
            return Err(invalid("sample_every", "must be at least 1"));
        }
        if !(self.region.0 < self.region.1) {
            return Err(invalid("region", "lower bound must be below upper bound"));
        }
        if !(self.relax_tolerance > 0.0 && self.relax_max_time > 0.0) {
            return Err(invalid("relax", "tolerance and max time must be positive"));
        }
        let l = &self.numerics.linear;
        if !(l.rel_tol > 0.0 && l.max_iterations > 0) {
            return Err(invalid("cg_tol", "tolerance and iteration cap must be positive"));
        }
        Ok(())
    }

    pub fn relaxation(&self) -> RelaxationSettings {
        RelaxationSettings {
            tolerance: self.relax_tolerance,
            max_time: self.relax_max_time,
            numerics: self.numerics,
        }
    }

    pub fn sampling(&self, grid: &Grid) -> Sampling {
        Sampling {
            every_steps: self.sample_every,
            region: Some(grid.region_mask(self.region.0, self.region.1)),
            probe: Some(self.probe),
        }
    }

    pub fn grid(&self) -> Result<Grid, ExperimentError> {
        Ok(rasterize(&build_domain(self.domain)?, self.dx)?)
    }

    /// Resolved `key=value` pairs; every field appears, floats in shortest
    /// round-trip form.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let d = &self.domain;
        let m = &self.model;
        let e = &self.envelope;
        let s = &self.solver;
        let epsilon = match s.boundary {
            Boundary::Neumann => 0.0,
            Boundary::Robin { epsilon } => epsilon,
        };
        let threshold = match self.numerics.window.threshold {
            Some(t) => t.to_string(),
            None => "none".into(),
        };
        vec![
            ("domain", d.kind.to_string()),
            ("h", d.taper_height.to_string()),
            ("width", d.width.to_string()),
            ("south_length", d.south_length.to_string()),
            ("corridor_width", d.corridor_width.to_string()),
            ("corridor_length", d.corridor_length.to_string()),
            ("north_extent", d.north_extent.to_string()),
            ("dx", self.dx.to_string()),
            ("model", m.variant.to_string()),
            ("r_plus", m.r_plus.to_string()),
            ("r_minus", m.r_minus.to_string()),
            ("K", m.carrying_capacity.to_string()),
            ("rho", m.rho.to_string()),
            ("L", e.thickness.to_string()),
            ("v", e.speed.to_string()),
            ("envelope", e.mode.to_string()),
            ("D", s.diffusion.to_string()),
            ("dt", s.dt.to_string()),
            ("end_time", s.end_time.to_string()),
            ("boundary", s.boundary.to_string()),
            ("epsilon", epsilon.to_string()),
            ("cg_tol", self.numerics.linear.rel_tol.to_string()),
            ("cg_max_iter", self.numerics.linear.max_iterations.to_string()),
            ("window_threshold", threshold),
            ("window_margin", self.numerics.window.margin_rows.to_string()),
            ("relax_tol", self.relax_tolerance.to_string()),
            ("relax_max_time", self.relax_max_time.to_string()),
            ("sample_every", self.sample_every.to_string()),
            ("probe_x1", self.probe.0.to_string()),
            ("probe_x2", self.probe.1.to_string()),
            ("region_low", self.region.0.to_string()),
            ("region_high", self.region.1.to_string()),
        ]
    }

    /// One-line `key=value;...` rendering of [`Scenario::pairs`].
    pub fn describe(&self) -> String {
        join_pairs(self.pairs().iter().map(|(k, v)| (*k, v.as_str())))
    }

    /// Cache key for the `t = 0` state. The envelope speed and the run length
    /// do not enter: relaxation freezes the band at its initial position.
    pub fn steady_state_key(&self) -> String {
        const SKIP: [&str; 8] = [
            "v",
            "end_time",
            "sample_every",
            "probe_x1",
            "probe_x2",
            "region_low",
            "region_high",
            "envelope",
        ];
        let mut key = join_pairs(
            self.pairs()
                .iter()
                .filter(|(k, _)| !SKIP.contains(k))
                .map(|(k, v)| (*k, v.as_str())),
        );
        // An expanding band starts where a shifting one does.
        key.push_str(&format!(";band={:?}", self.envelope.bounds(0.0)));
        key
    }
}

fn join_pairs<'a>(pairs: impl Iterator<Item = (&'a str, &'a str)>) -> String {
    pairs
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Annotations attached to a run result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunFlag {
    /// The steady state collapsed to zero, so the run was skipped.
    SteadyStateZero,
    /// Allee threshold at or above half the carrying capacity.
    RhoAtLeastHalf,
    /// The run ended before the extinction horizon; outcome uses the final population.
    OffHorizon,
}

impl fmt::Display for RunFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunFlag::SteadyStateZero => "steady_state_zero",
            RunFlag::RhoAtLeastHalf => "rho_ge_half",
            RunFlag::OffHorizon => "off_horizon",
        })
    }
}

pub fn format_flags(flags: &[RunFlag]) -> String {
    flags
        .iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub trajectory: Trajectory,
    pub outcome: Outcome,
    pub flags: Vec<RunFlag>,
    /// Relaxation time of the initial state (0 when it collapsed).
    pub relaxation_time: f64,
}

type CachedState = Result<Arc<SteadyStateReport>, Arc<SolverError>>;

/// Steady states keyed by [`Scenario::steady_state_key`]. Each key is computed
/// at most once, even under concurrent requests.
#[derive(Debug, Default)]
pub struct SteadyStateCache {
    entries: Mutex<HashMap<String, Arc<OnceLock<CachedState>>>>,
}

impl SteadyStateCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        if let Ok(mut m) = self.entries.lock() {
            m.clear();
        }
    }

    fn get_or_compute(&self, key: String, compute: impl FnOnce() -> CachedState) -> CachedState {
        let slot = {
            let mut map = self.entries.lock().unwrap_or_else(|p| p.into_inner());
            Arc::clone(map.entry(key).or_default())
        };
        slot.get_or_init(compute).clone()
    }

    pub fn steady_state(&self, scenario: &Scenario, grid: &Grid) -> CachedState {
        self.get_or_compute(scenario.steady_state_key(), || {
            relax_to_steady_state(
                grid,
                &scenario.model,
                &scenario.envelope,
                &scenario.solver,
                &InitialGuess::for_model(&scenario.model),
                scenario.relaxation(),
            )
            .map(Arc::new)
            .map_err(Arc::new)
        })
    }
}

/// Outcome summary of one sweep cell or search point.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub p30: Option<f64>,
    pub outcome: Option<OutcomeKind>,
    pub flags: Vec<RunFlag>,
    pub error: Option<String>,
    /// Resolved configuration of the cell.
    pub config: String,
}

impl CellResult {
    fn from_run(scenario: &Scenario, run: Result<ScenarioRun, ExperimentError>) -> Self {
        let config = scenario.describe();
        match run {
            Ok(r) => Self {
                p30: Some(r.outcome.p30),
                outcome: Some(r.outcome.kind),
                flags: r.flags,
                error: None,
                config,
            },
            Err(e) => Self {
                p30: None,
                outcome: None,
                flags: Vec::new(),
                error: Some(e.to_string()),
                config,
            },
        }
    }

    pub fn is_extinct(&self) -> Option<bool> {
        self.outcome.map(|k| k == OutcomeKind::Extinct)
    }
}

/// Parameters a sweep axis can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    Speed,
    Diffusion,
    TaperHeight,
    Rho,
    RMinus,
    Thickness,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Speed => "v",
            SweepParam::Diffusion => "D",
            SweepParam::TaperHeight => "h",
            SweepParam::Rho => "rho",
            SweepParam::RMinus => "r_minus",
            SweepParam::Thickness => "L",
        }
    }

    /// Writes `value` into `scenario`. A taper height turns the domain into
    /// a type3 domain.
    pub fn apply(&self, scenario: &mut Scenario, value: f64) {
        match self {
            SweepParam::Speed => scenario.envelope.speed = value,
            SweepParam::Diffusion => scenario.solver.diffusion = value,
            SweepParam::TaperHeight => {
                scenario.domain.kind = DomainKind::Type3;
                scenario.domain.taper_height = value;
            }
            SweepParam::Rho => scenario.model.rho = value,
            SweepParam::RMinus => scenario.model.r_minus = value,
            SweepParam::Thickness => scenario.envelope.thickness = value,
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "v" => Ok(SweepParam::Speed),
            "D" => Ok(SweepParam::Diffusion),
            "h" => Ok(SweepParam::TaperHeight),
            "rho" => Ok(SweepParam::Rho),
            "r_minus" => Ok(SweepParam::RMinus),
            "L" => Ok(SweepParam::Thickness),
            other => Err(format!(
                "unknown sweep parameter `{other}` (expected v, D, h, rho, r_minus or L)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(param: SweepParam, values: Vec<f64>) -> Self {
        Self { param, values }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.values.is_empty() {
            return Err(invalid("sweep", format!("axis {} has no values", self.param)));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sweep", format!("axis {} has a non-finite value", self.param)));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(
                "sweep",
                format!("axis {} must be strictly increasing", self.param),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis1: Axis,
    pub axis2: Axis,
    pub base: Scenario,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.axis1.validate()?;
        self.axis2.validate()?;
        if self.axis1.param == self.axis2.param {
            return Err(invalid("sweep", "the two axes must vary different parameters"));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.axis1.values.len(), self.axis2.values.len())
    }

    /// Scenario of cell `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> Scenario {
        let mut s = self.base.clone();
        self.axis1.param.apply(&mut s, self.axis1.values[i]);
        self.axis2.param.apply(&mut s, self.axis2.values[j]);
        s
    }
}

/// Row-major over `(axis1, axis2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis1: Axis,
    pub axis2: Axis,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn shape(&self) -> (usize, usize) {
        (self.axis1.values.len(), self.axis2.values.len())
    }

    pub fn cell(&self, i: usize, j: usize) -> &CellResult {
        &self.cells[i * self.axis2.values.len() + j]
    }

    pub fn p30_matrix(&self) -> Vec<Vec<Option<f64>>> {
        let (n1, n2) = self.shape();
        (0..n1)
            .map(|i| (0..n2).map(|j| self.cell(i, j).p30).collect())
            .collect()
    }

    pub fn outcome_mask(&self) -> Vec<Vec<Option<OutcomeKind>>> {
        let (n1, n2) = self.shape();
        (0..n1)
            .map(|i| (0..n2).map(|j| self.cell(i, j).outcome).collect())
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "{},{},P30,outcome,flags",
            self.axis1.param, self.axis2.param
        )?;
        let (n1, n2) = self.shape();
        for i in 0..n1 {
            for j in 0..n2 {
                let c = self.cell(i, j);
                let p30 = c.p30.map(|p| p.to_string()).unwrap_or_default();
                let outcome = c
                    .outcome
                    .map(|k| k.to_string())
                    .unwrap_or_else(|| "error".into());
                let mut flags = format_flags(&c.flags);
                if let Some(e) = &c.error {
                    if !flags.is_empty() {
                        flags.push('|');
                    }
                    flags.push_str(&format!("error: {}", e.replace([',', '\n'], ";")));
                }
                writeln!(
                    out,
                    "{},{},{p30},{outcome},{flags}",
                    self.axis1.values[i], self.axis2.values[j]
                )?;
            }
        }
        Ok(())
    }
}

/// Settings of the opening-height search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HSearch {
    pub h_max: f64,
    /// Spacing of the initial scan.
    pub coarse_step: f64,
    /// Bisection stops once the bracket is this narrow.
    pub resolution: f64,
    /// Evaluate the whole coarse grid instead of stopping at the first
    /// persistent height.
    pub full_scan: bool,
}

impl Default for HSearch {
    fn default() -> Self {
        Self {
            h_max: 30.0,
            coarse_step: 2.0,
            resolution: 0.5,
            full_scan: false,
        }
    }
}

impl HSearch {
    fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.h_max.is_finite() && self.h_max > 0.0) {
            return Err(invalid("h_max", "must be positive"));
        }
        if !(self.coarse_step > 0.0) {
            return Err(invalid("h_step", "must be positive"));
        }
        if !(self.resolution > 0.0) {
            return Err(invalid("h_resolution", "must be positive"));
        }
        Ok(())
    }

    fn coarse_grid(&self) -> Vec<f64> {
        let n = ((self.h_max - 1e-9) / self.coarse_step).floor() as usize;
        (0..=n).map(|k| k as f64 * self.coarse_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HEvaluation {
    pub h: f64,
    pub result: CellResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalH {
    /// Smallest persistent opening height found, `None` when even `h_max`
    /// goes extinct.
    pub h_star: Option<f64>,
    /// Every evaluated height, ascending.
    pub evaluations: Vec<HEvaluation>,
    /// False when a persistent height was followed by an extinct one.
    pub monotone: bool,
}

/// Front speed measured on a fully suitable domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedCheck {
    pub measured: f64,
    pub predicted: f64,
    pub relative_error: f64,
}

impl SpeedCheck {
    pub fn passed(&self) -> bool {
        self.relative_error <= SPEED_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorridorExitReport {
    pub threshold: f64,
    pub times: Vec<f64>,
    pub p1_type2: Vec<f64>,
    pub u_type2: Vec<f64>,
    pub p1_type3: Vec<f64>,
    pub u_type3: Vec<f64>,
    pub crossing_type2: Option<f64>,
    pub crossing_type3: Option<f64>,
}

impl CorridorExitReport {
    /// Largest `|a - b| / max(a, b)` between the two region populations on
    /// samples within `[t0, t1]`.
    pub fn max_p1_gap(&self, t0: f64, t1: f64) -> f64 {
        self.times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= t0 - 1e-9 && t <= t1 + 1e-9)
            .map(|(i, _)| {
                let (a, b) = (self.p1_type2[i], self.p1_type3[i]);
                let m = a.max(b);
                if m > 0.0 {
                    (a - b).abs() / m
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,P1_type2,u_xc_type2,P1_type3,u_xc_type3")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.times[i], self.p1_type2[i], self.u_type2[i], self.p1_type3[i], self.u_type3[i]
            )?;
        }
        Ok(())
    }
}

/// A named invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }
}

/// Runs scenarios on a bounded worker pool and shares steady states between them.
#[derive(Debug)]
pub struct Executor {
    workers: usize,
    cache: SteadyStateCache,
}

impl Default for Executor {
    fn default() -> Self {
        Self::new(1)
    }
}

impl Executor {
    pub fn new(workers: usize) -> Self {
        Self {
            workers: workers.max(1),
            cache: SteadyStateCache::new(),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn cache(&self) -> &SteadyStateCache {
        &self.cache
    }

    /// Build, rasterize, relax and run.
    pub fn run(
        &self,
        scenario: &Scenario,
        observers: &mut [&mut dyn Observer],
    ) -> Result<ScenarioRun, ExperimentError> {
        scenario.validate()?;
        let grid = scenario.grid()?;
        let mut flags = Vec::new();
        if scenario.model.variant == GrowthVariant::Allee && scenario.model.rho >= 0.5 {
            flags.push(RunFlag::RhoAtLeastHalf);
        }
        match self.cache.steady_state(scenario, &grid) {
            Ok(steady) => {
                let mut run =
                    self.run_on(scenario, &grid, steady.field.clone(), observers, flags)?;
                run.relaxation_time = steady.relaxation_time;
                Ok(run)
            }
            Err(e) if matches!(*e, SolverError::ConvergedToZero { .. }) => {
                flags.push(RunFlag::SteadyStateZero);
                let zero = Field::zeros(&grid);
                let mut trajectory = Trajectory::new(&grid, &scenario.sampling(&grid));
                trajectory.record(0.0, &grid, &zero, 0.0);
                trajectory.record(scenario.solver.end_time, &grid, &zero, 0.0);
                trajectory.final_field = Some(zero);
                let outcome = outcome_of(&trajectory, &mut flags);
                Ok(ScenarioRun {
                    trajectory,
                    outcome,
                    flags,
                    relaxation_time: 0.0,
                })
            }
            Err(e) => Err(ExperimentError::SteadyState(e)),
        }
    }

    /// Runs `scenario` from an explicit initial field, skipping relaxation.
    pub fn run_from(
        &self,
        scenario: &Scenario,
        initial: Field,
        observers: &mut [&mut dyn Observer],
    ) -> Result<ScenarioRun, ExperimentError> {
        scenario.validate()?;
        let grid = scenario.grid()?;
        self.run_on(scenario, &grid, initial, observers, Vec::new())
    }

    fn run_on(
        &self,
        scenario: &Scenario,
        grid: &Grid,
        initial: Field,
        observers: &mut [&mut dyn Observer],
        mut flags: Vec<RunFlag>,
    ) -> Result<ScenarioRun, ExperimentError> {
        let trajectory = run_with_numerics(
            grid,
            &scenario.model,
            &scenario.envelope,
            &scenario.solver,
            initial,
            &scenario.sampling(grid),
            observers,
            scenario.numerics,
        )?;
        let outcome = outcome_of(&trajectory, &mut flags);
        Ok(ScenarioRun {
            trajectory,
            outcome,
            flags,
            relaxation_time: 0.0,
        })
    }

    /// Evaluates every scenario, visiting them in `order`; results come back
    /// indexed like `scenarios`.
    pub fn evaluate(
        &self,
        scenarios: &[Scenario],
        order: &[usize],
    ) -> Result<Vec<CellResult>, ExperimentError> {
        let mut seen = vec![false; scenarios.len()];
        for &k in order {
            if k >= scenarios.len() || std::mem::replace(&mut seen[k], true) {
                return Err(invalid("order", "must be a permutation of the cell indices"));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(invalid("order", "must be a permutation of the cell indices"));
        }
        let one = |k: usize| (k, CellResult::from_run(&scenarios[k], self.run(&scenarios[k], &mut [])));
        let done: Vec<(usize, CellResult)> = if self.workers == 1 {
            order.iter().map(|&k| one(k)).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build()
                .map_err(|e| ExperimentError::Pool(e.to_string()))?;
            pool.install(|| order.par_iter().map(|&k| one(k)).collect())
        };
        let mut out: Vec<Option<CellResult>> = vec![None; scenarios.len()];
        for (k, r) in done {
            out[k] = Some(r);
        }
        Ok(out.into_iter().map(|r| r.expect("every index visited")).collect())
    }

    pub fn sweep(&self, spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
        let (n1, n2) = spec.shape();
        self.sweep_in_order(spec, &(0..n1 * n2).collect::<Vec<_>>())
    }

    /// Like [`Executor::sweep`] with an explicit execution order over the
    /// row-major cell indices.
    pub fn sweep_in_order(
        &self,
        spec: &SweepSpec,
        order: &[usize],
    ) -> Result<SweepResult, ExperimentError> {
        spec.validate()?;
        let (n1, n2) = spec.shape();
        let scenarios: Vec<Scenario> = (0..n1)
            .flat_map(|i| (0..n2).map(move |j| (i, j)))
            .map(|(i, j)| spec.cell(i, j))
            .collect();
        Ok(SweepResult {
            axis1: spec.axis1.clone(),
            axis2: spec.axis2.clone(),
            cells: self.evaluate(&scenarios, order)?,
        })
    }

    /// Smallest opening height of a type3 domain built from `base` that
    /// persists to the horizon.
    pub fn critical_h(&self, base: &Scenario, search: &HSearch) -> Result<CriticalH, ExperimentError> {
        search.validate()?;
        base.validate()?;
        let mut evaluations: Vec<HEvaluation> = Vec::new();
        let eval = |hs: &[f64], evals: &mut Vec<HEvaluation>| -> Result<Vec<bool>, ExperimentError> {
            let scenarios: Vec<Scenario> = hs
                .iter()
                .map(|&h| {
                    let mut s = base.clone();
                    SweepParam::TaperHeight.apply(&mut s, h);
                    s
                })
                .collect();
            let results = self.evaluate(&scenarios, &(0..hs.len()).collect::<Vec<_>>())?;
            let mut persists = Vec::with_capacity(hs.len());
            for (&h, r) in hs.iter().zip(results) {
                if let Some(e) = &r.error {
                    return Err(invalid("h", format!("run at h = {h} failed: {e}")));
                }
                persists.push(r.outcome == Some(OutcomeKind::Persistent));
                evals.push(HEvaluation { h, result: r });
            }
            Ok(persists)
        };

        let top = eval(&[search.h_max], &mut evaluations)?[0];
        if !top {
            return Ok(finish(None, evaluations));
        }
        let grid = search.coarse_grid();
        let mut status: Vec<Option<bool>> = vec![None; grid.len()];
        let batch = if search.full_scan { grid.len() } else { self.workers };
        let mut next = 0;
        while next < grid.len() {
            let end = (next + batch).min(grid.len());
            let got = eval(&grid[next..end], &mut evaluations)?;
            for (k, p) in got.into_iter().enumerate() {
                status[next + k] = Some(p);
            }
            next = end;
            if !search.full_scan && status.contains(&Some(true)) {
                break;
            }
        }
        // First index from which every evaluated coarse height persists.
        let evaluated = status.iter().take_while(|s| s.is_some()).count();
        let mut first = evaluated;
        while first > 0 && status[first - 1] == Some(true) {
            first -= 1;
        }
        if !search.full_scan {
            first = status
                .iter()
                .position(|s| *s == Some(true))
                .unwrap_or(grid.len());
        }
        if first == 0 {
            return Ok(finish(Some(0.0), evaluations));
        }
        let mut lo = grid[first - 1];
        let mut hi = grid.get(first).copied().unwrap_or(search.h_max);
        while hi - lo > search.resolution + 1e-9 {
            let mid = 0.5 * (lo + hi);
            if eval(&[mid], &mut evaluations)?[0] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(finish(Some(hi), evaluations))
    }

    /// Critical height for each Allee threshold in `rhos`.
    pub fn rho_curve(
        &self,
        base: &Scenario,
        rhos: &[f64],
        search: &HSearch,
    ) -> Result<Vec<(f64, CriticalH)>, ExperimentError> {
        if let Some(r) = rhos.iter().find(|r| !(0.0..0.5).contains(*r)) {
            return Err(invalid("rho", format!("{r} is outside [0, 0.5)")));
        }
        rhos.iter()
            .map(|&rho| {
                let mut s = base.clone();
                s.model.rho = rho;
                Ok((rho, self.critical_h(&s, search)?))
            })
            .collect()
    }

    /// Critical height for each exterior decay rate in `values`.
    pub fn r_minus_sensitivity(
        &self,
        base: &Scenario,
        values: &[f64],
        search: &HSearch,
    ) -> Result<Vec<(f64, CriticalH)>, ExperimentError> {
        for &r in values {
            GrowthModel {
                r_minus: r,
                ..base.model
            }
            .validate()?;
        }
        values
            .iter()
            .map(|&r| {
                let mut s = base.clone();
                s.model.r_minus = r;
                Ok((r, self.critical_h(&s, search)?))
            })
            .collect()
    }

    /// Runs `base` as a type3 domain and as its type2 counterpart and compares
    /// the region population and the probe density.
    pub fn corridor_exit_report(&self, base: &Scenario) -> Result<CorridorExitReport, ExperimentError> {
        let mut type3 = base.clone();
        if type3.domain.kind != DomainKind::Type3 {
            return Err(invalid("domain", "the corridor-exit report needs a type3 domain"));
        }
        type3.domain.kind = DomainKind::Type3;
        let mut type2 = base.clone();
        type2.domain.kind = DomainKind::Type2;
        type2.domain.taper_height = 0.0;
        let r2 = self.run(&type2, &mut [])?.trajectory;
        let r3 = self.run(&type3, &mut [])?.trajectory;
        let threshold = base.model.allee_threshold();
        let n = r2.len().min(r3.len());
        Ok(CorridorExitReport {
            threshold,
            times: r3.times[..n].to_vec(),
            p1_type2: r2.region_population[..n].to_vec(),
            u_type2: r2.probe_density[..n].to_vec(),
            p1_type3: r3.region_population[..n].to_vec(),
            u_type3: r3.probe_density[..n].to_vec(),
            crossing_type2: r2.probe_crossing(threshold),
            crossing_type3: r3.probe_crossing(threshold),
        })
    }

    /// Front speed on `base`'s domain with the whole domain suitable, seeded
    /// with `K` south of `seed_extent`.
    pub fn speed_check(&self, base: &Scenario, seed_extent: f64) -> Result<SpeedCheck, ExperimentError> {
        let mut s = base.clone();
        s.envelope = EnvelopeSpec::shifting(s.domain.north_extent + 1.0, 0.0);
        let predicted = s.model.spreading_speed(s.solver.diffusion)?;
        let k = s.model.carrying_capacity;
        s.validate()?;
        let grid = s.grid()?;
        let initial = Field::from_fn(&grid, |_, x2| if x2 < seed_extent { k } else { 0.0 });
        let every = ((0.25 / s.solver.dt).round() as usize).max(1);
        let mut tracker = FrontTracker::new(k / 2.0, every);
        self.run_on(&s, &grid, initial, &mut [&mut tracker], Vec::new())?;
        let measured = tracker.speed()?;
        Ok(SpeedCheck {
            measured,
            predicted,
            relative_error: (measured - predicted).abs() / predicted,
        })
    }

    /// Relative population drift of a reaction-free no-flux run started from
    /// the scenario's steady state, over the scenario's run length.
    pub fn conservation_drift(&self, scenario: &Scenario) -> Result<f64, ExperimentError> {
        scenario.validate()?;
        let grid = scenario.grid()?;
        let start = match self.cache.steady_state(scenario, &grid) {
            Ok(s) => s.field.clone(),
            Err(_) => Field::from_fn(&grid, |_, x2| {
                if scenario.envelope.contains(0.0, x2) {
                    scenario.model.carrying_capacity
                } else {
                    0.0
                }
            }),
        };
        let p0 = total_population(&grid, &start);
        let mut u = start.values().to_vec();
        let mut diffuser = Diffuser::with_policy(
            &grid,
            scenario.solver.diffusion,
            Boundary::Neumann,
            scenario.numerics.window,
            scenario.numerics.linear,
        );
        diffuser.reset_window(&mut u);
        for _ in 0..scenario.solver.step_count() {
            diffuser.step(&mut u, scenario.solver.dt)?;
        }
        let p1 = total_population(&grid, &Field::from_raster(&grid, u)?);
        Ok((p1 - p0).abs() / p0)
    }

    /// Positivity, the `2K` bound and clamped mass of one run.
    pub fn positivity_checks(&self, scenario: &Scenario) -> Result<Vec<Check>, ExperimentError> {
        let run = self.run(scenario, &mut [])?;
        Ok(positivity_checks(&run, scenario.model.carrying_capacity))
    }

    /// Relative change of `P(30)` when `dx` and `dt` are halved.
    pub fn refinement_check(&self, scenario: &Scenario) -> Result<Check, ExperimentError> {
        let coarse = self.run(scenario, &mut [])?;
        let mut fine_s = scenario.clone();
        fine_s.dx /= 2.0;
        fine_s.solver.dt /= 2.0;
        fine_s.sample_every *= 2;
        let fine = self.run(&fine_s, &mut [])?;
        Ok(refinement(&coarse, &fine))
    }
}

fn finish(h_star: Option<f64>, mut evaluations: Vec<HEvaluation>) -> CriticalH {
    evaluations.sort_by(|a, b| a.h.total_cmp(&b.h));
    let mut seen_persistent = false;
    let mut monotone = true;
    for e in &evaluations {
        match e.result.outcome {
            Some(OutcomeKind::Persistent) => seen_persistent = true,
            Some(OutcomeKind::Extinct) if seen_persistent => monotone = false,
            _ => {}
        }
    }
    CriticalH {
        h_star,
        evaluations,
        monotone,
    }
}

fn outcome_of(trajectory: &Trajectory, flags: &mut Vec<RunFlag>) -> Outcome {
    match classify_outcome(trajectory) {
        Ok(o) => o,
        Err(_) => {
            flags.push(RunFlag::OffHorizon);
            Outcome::from_population(trajectory.final_population())
        }
    }
}

pub fn positivity_checks(run: &ScenarioRun, carrying_capacity: f64) -> Vec<Check> {
    let t = &run.trajectory;
    let min = t.min_density.iter().copied().fold(f64::INFINITY, f64::min);
    let max = t.max_density.iter().copied().fold(0.0, f64::max);
    let p0 = t.initial_population().max(f64::MIN_POSITIVE);
    vec![
        Check::at_most("negativity", (-min).max(0.0), 0.0),
        Check::at_most("max_over_2K", max / (2.0 * carrying_capacity), 1.0),
        Check::at_most("clamped_over_P0", t.total_clamped() / p0, CLAMP_TOLERANCE),
    ]
}

/// Persistent runs compare `P(30)` relative to the coarse value. Runs that
/// end extinct on either grid compare relative to `P(0)`, since `P(30)` is
/// then close to zero.
pub fn refinement(coarse: &ScenarioRun, fine: &ScenarioRun) -> Check {
    let (a, b) = (coarse.outcome.p30, fine.outcome.p30);
    let scale = if coarse.outcome.is_extinct() || fine.outcome.is_extinct() {
        coarse.trajectory.initial_population()
    } else {
        a
    };
    Check::at_most("refinement", (a - b).abs() / scale.max(f64::MIN_POSITIVE), REFINEMENT_TOLERANCE)
}

/// `param,h_star` rows with `none` for missing values.
pub fn write_hstar_csv<W: Write>(
    mut out: W,
    param: &str,
    rows: &[(f64, Option<f64>)],
) -> io::Result<()> {
    writeln!(out, "{param},h_star")?;
    for (p, h) in rows {
        match h {
            Some(h) => writeln!(out, "{p},{h}")?,
            None => writeln!(out, "{p},none")?,
        }
    }
    Ok(())
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioRun, ExperimentError> {
    Executor::default().run(scenario, &mut [])
}

pub fn sweep(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    Executor::default().sweep(spec)
}

pub fn critical_h(base: &Scenario, search: &HSearch) -> Result<CriticalH, ExperimentError> {
    Executor::default().critical_h(base, search)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small and fast: coarse cells, short domain, a few years.
    fn quick() -> Scenario {
        let mut s = Scenario::default();
        s.domain.north_extent = 80.0;
        s.dx = 0.5;
        s.solver.dt = 0.05;
        s.solver.end_time = 2.0;
        s.sample_every = 10;
        s.relax_tolerance = 1e-4;
        s
    }

    #[test]
    fn default_scenario_probe_and_region() {
        let s = Scenario::default();
        assert_eq!(s.probe, (10.0, 46.0));
        assert_eq!(s.region, (44.0, 48.0));
        assert!(s.validate().is_ok());
    }

    #[test]
    fn speed_does_not_change_cache_key() {
        let a = Scenario::default();
        let mut b = a.clone();
        b.envelope.speed = 6.0;
        b.solver.end_time = 10.0;
        assert_eq!(a.steady_state_key(), b.steady_state_key());
        b.solver.diffusion = 5.0;
        assert_ne!(a.steady_state_key(), b.steady_state_key());
    }

    #[test]
    fn stationary_control_keeps_population() {
        let mut s = quick();
        s.envelope.speed = 0.0;
        let run = run_scenario(&s).unwrap();
        let p = &run.trajectory.population;
        let p0 = p[0];
        assert!(p.iter().all(|x| (x - p0).abs() / p0 < 1e-3), "{p:?}");
        assert!(run.flags.contains(&RunFlag::OffHorizon));
    }

    #[test]
    fn cache_is_write_once() {
        let ex = Executor::new(1);
        let s = quick();
        let a = ex.run(&s, &mut []).unwrap();
        let mut t = s.clone();
        t.envelope.speed = 1.0;
        ex.run(&t, &mut []).unwrap();
        assert_eq!(ex.cache().len(), 1);
        let again = ex.run(&s, &mut []).unwrap();
        assert_eq!(a.trajectory.population, again.trajectory.population);
    }

    #[test]
    fn collapsed_steady_state_is_extinct_with_flag() {
        let mut s = quick();
        s.envelope.thickness = 0.5;
        let run = run_scenario(&s).unwrap();
        assert!(run.flags.contains(&RunFlag::SteadyStateZero));
        assert!(run.outcome.is_extinct());
    }

    #[test]
    fn sweep_rejects_bad_axes() {
        let base = quick();
        let bad = SweepSpec {
            axis1: Axis::new(SweepParam::Speed, vec![1.0, 1.0]),
            axis2: Axis::new(SweepParam::Diffusion, vec![5.0]),
            base: base.clone(),
        };
        assert!(bad.validate().is_err());
        let same = SweepSpec {
            axis1: Axis::new(SweepParam::Speed, vec![1.0]),
            axis2: Axis::new(SweepParam::Speed, vec![2.0]),
            base: base.clone(),
        };
        assert!(same.validate().is_err());
        let empty = SweepSpec {
            axis1: Axis::new(SweepParam::Speed, vec![]),
            axis2: Axis::new(SweepParam::Diffusion, vec![5.0]),
            base,
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn failed_cell_is_recorded() {
        let spec = SweepSpec {
            axis1: Axis::new(SweepParam::Diffusion, vec![-1.0, 5.0]),
            axis2: Axis::new(SweepParam::Speed, vec![0.0]),
            base: quick(),
        };
        let r = Executor::new(1).sweep(&spec).unwrap();
        assert!(r.cell(0, 0).error.is_some());
        assert!(r.cell(1, 0).error.is_none());
        assert_eq!(r.failures(), 1);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("D,v,P30,outcome,flags\n"));
        assert!(text.lines().nth(1).unwrap().contains(",error,"));
    }

    #[test]
    fn permutation_must_be_complete() {
        let ex = Executor::new(1);
        let s = vec![quick(), quick()];
        assert!(ex.evaluate(&s, &[0]).is_err());
        assert!(ex.evaluate(&s, &[0, 0]).is_err());
    }

    #[test]
    fn coarse_grid_stops_below_h_max() {
        let g = HSearch::default().coarse_grid();
        assert_eq!(g.first(), Some(&0.0));
        assert_eq!(g.last(), Some(&28.0));
        assert_eq!(g.len(), 15);
    }

    #[test]
    fn r_minus_must_exceed_r_plus() {
        let err = Executor::new(1)
            .r_minus_sensitivity(&quick(), &[0.5], &HSearch::default())
            .unwrap_err();
        assert!(matches!(err, ExperimentError::Model(ModelError::InvalidParameter { .. })));
    }

    #[test]
    fn rho_outside_range_rejected() {
        let err = Executor::new(1)
            .rho_curve(&quick(), &[0.5], &HSearch::default())
            .unwrap_err();
        assert!(matches!(err, ExperimentError::InvalidSpec { field: "rho", .. }));
    }

    #[test]
    fn monotonicity_flag() {
        let cell = |k| CellResult {
            p30: Some(0.0),
            outcome: Some(k),
            flags: vec![],
            error: None,
            config: String::new(),
        };
        let e = |h, k| HEvaluation { h, result: cell(k) };
        let ok = finish(
            Some(2.0),
            vec![e(4.0, OutcomeKind::Persistent), e(0.0, OutcomeKind::Extinct)],
        );
        assert!(ok.monotone);
        assert_eq!(ok.evaluations[0].h, 0.0);
        let bad = finish(
            None,
            vec![e(0.0, OutcomeKind::Persistent), e(2.0, OutcomeKind::Extinct)],
        );
        assert!(!bad.monotone);
    }

    #[test]
    fn hstar_csv_format() {
        let mut out = Vec::new();
        write_hstar_csv(&mut out, "rho", &[(0.1, Some(0.0)), (0.3, None)]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "rho,h_star\n0.1,0\n0.3,none\n");
    }
}
