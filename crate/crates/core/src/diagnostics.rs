//! Observables over fields and trajectories.

use std::io::{self, Write};
use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::{Grid, Region};
use crate::io::write_atomic;
use crate::solver::{Field, Observer, Sample, Sampling};

/// Runs whose population at this horizon is below one individual are extinct.
pub const EXTINCTION_HORIZON: f64 = 30.0;
pub const EXTINCTION_THRESHOLD: f64 = 1.0;
/// Fraction of the tracked window discarded before fitting a front speed.
pub const FRONT_BURN_IN: f64 = 0.2;
pub const MIN_FRONT_SAMPLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("point ({0}, {1}) lies outside the domain")]
    PointOutsideDomain(f64, f64),
    #[error("need at least {needed} samples after burn-in, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("front absent at t = {0}")]
    AbsentFront(f64),
    #[error("trajectory ends at t = {reached}, before t = {needed}")]
    IncompleteTrajectory { reached: f64, needed: f64 },
}

/// `sum u dx^2` over active cells.
pub fn total_population(grid: &Grid, field: &Field) -> f64 {
    field.values().iter().sum::<f64>() * grid.cell_area()
}

pub fn region_population(grid: &Grid, field: &Field, region: &Region) -> f64 {
    let v = field.values();
    region.cells().iter().map(|&k| v[k]).sum::<f64>() * grid.cell_area()
}

/// Density of the cell holding `point`.
pub fn sample_density(
    grid: &Grid,
    field: &Field,
    point: (f64, f64),
) -> Result<f64, DiagnosticsError> {
    grid.locate(point.0, point.1)
        .map(|k| field.get(k))
        .ok_or(DiagnosticsError::PointOutsideDomain(point.0, point.1))
}

/// Northernmost active cell center with `u >= threshold`.
pub fn front_position(grid: &Grid, field: &Field, threshold: f64) -> Option<f64> {
    let nx = grid.nx();
    let v = field.values();
    (0..grid.ny())
        .rev()
        .find(|&j| {
            (j * nx..(j + 1) * nx).any(|k| grid.is_active(k) && v[k] >= threshold)
        })
        .map(|j| grid.row_center(j))
}

/// Least-squares slope of front position against time after discarding the
/// first [`FRONT_BURN_IN`] of the time span.
pub fn estimate_front_speed(samples: &[(f64, Option<f64>)]) -> Result<f64, DiagnosticsError> {
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Err(DiagnosticsError::InsufficientSamples {
            needed: MIN_FRONT_SAMPLES,
            got: 0,
        });
    };
    let cutoff = first.0 + FRONT_BURN_IN * (last.0 - first.0);
    let kept: Vec<_> = samples.iter().filter(|(t, _)| *t >= cutoff).collect();
    if kept.len() < MIN_FRONT_SAMPLES {
        return Err(DiagnosticsError::InsufficientSamples {
            needed: MIN_FRONT_SAMPLES,
            got: kept.len(),
        });
    }
    let mut pts = Vec::with_capacity(kept.len());
    for (t, x) in kept {
        match x {
            Some(x) => pts.push((*t, *x)),
            None => return Err(DiagnosticsError::AbsentFront(*t)),
        }
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Extinct,
    Persistent,
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutcomeKind::Extinct => "extinct",
            OutcomeKind::Persistent => "persistent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub p30: f64,
}

impl Outcome {
    pub fn from_population(p30: f64) -> Self {
        let kind = if p30 < EXTINCTION_THRESHOLD {
            OutcomeKind::Extinct
        } else {
            OutcomeKind::Persistent
        };
        Self { kind, p30 }
    }

    pub fn is_extinct(&self) -> bool {
        self.kind == OutcomeKind::Extinct
    }
}

/// Extinct iff `P(30) < 1`.
pub fn classify_outcome(trajectory: &Trajectory) -> Result<Outcome, DiagnosticsError> {
    trajectory
        .population_at(EXTINCTION_HORIZON)
        .map(Outcome::from_population)
        .ok_or(DiagnosticsError::IncompleteTrajectory {
            reached: trajectory.times.last().copied().unwrap_or(0.0),
            needed: EXTINCTION_HORIZON,
        })
}

/// Time series recorded during a run.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Total population `P(t)`.
    pub population: Vec<f64>,
    /// Population of the tracked region.
    pub region_population: Vec<f64>,
    /// Density at the probe point (NaN without a probe).
    pub probe_density: Vec<f64>,
    /// Cumulative population removed by clamping.
    pub clamped_mass: Vec<f64>,
    pub max_density: Vec<f64>,
    pub min_density: Vec<f64>,
    /// Written snapshots as `(time, path)`.
    pub snapshots: Vec<(f64, PathBuf)>,
    /// Population shed at the moving window edges over the run.
    pub shed_mass: f64,
    pub final_field: Option<Field>,
    region: Region,
    probe: Option<usize>,
}

impl Trajectory {
    pub fn new(grid: &Grid, sampling: &Sampling) -> Self {
        Self {
            region: sampling.region.clone().unwrap_or_default(),
            probe: sampling.probe.and_then(|(x1, x2)| grid.locate(x1, x2)),
            ..Default::default()
        }
    }

    pub fn record(&mut self, time: f64, grid: &Grid, field: &Field, clamped_mass: f64) {
        self.times.push(time);
        self.population.push(total_population(grid, field));
        self.region_population
            .push(region_population(grid, field, &self.region));
        self.probe_density
            .push(self.probe.map_or(f64::NAN, |k| field.get(k)));
        self.clamped_mass.push(clamped_mass);
        self.max_density.push(field.max());
        self.min_density.push(field.min());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial_population(&self) -> f64 {
        self.population.first().copied().unwrap_or(0.0)
    }

    pub fn final_population(&self) -> f64 {
        self.population.last().copied().unwrap_or(0.0)
    }

    pub fn total_clamped(&self) -> f64 {
        self.clamped_mass.last().copied().unwrap_or(0.0)
    }

    fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() < 1e-6)
    }

    pub fn population_at(&self, t: f64) -> Option<f64> {
        self.index_at(t).map(|i| self.population[i])
    }

    /// First sample time at which the probe density reaches `level`.
    pub fn probe_crossing(&self, level: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.probe_density)
            .find(|(_, u)| **u >= level)
            .map(|(t, _)| *t)
    }

    pub fn min_population(&self) -> f64 {
        self.population.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,P,P1,u_xc,clamped_mass")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.times[i],
                self.population[i],
                self.region_population[i],
                self.probe_density[i],
                self.clamped_mass[i]
            )?;
        }
        Ok(())
    }
}

/// Records the front position at a fixed cadence.
#[derive(Debug, Clone)]
pub struct FrontTracker {
    pub threshold: f64,
    pub every_steps: usize,
    pub samples: Vec<(f64, Option<f64>)>,
}

impl FrontTracker {
    pub fn new(threshold: f64, every_steps: usize) -> Self {
        Self {
            threshold,
            every_steps,
            samples: Vec::new(),
        }
    }

    pub fn speed(&self) -> Result<f64, DiagnosticsError> {
        estimate_front_speed(&self.samples)
    }
}

impl Observer for FrontTracker {
    fn cadence(&self) -> usize {
        self.every_steps
    }

    fn observe(&mut self, sample: &Sample<'_>) -> Result<(), String> {
        self.samples.push((
            sample.time,
            front_position(sample.grid, sample.field, self.threshold),
        ));
        Ok(())
    }
}

/// Writes `snapshots/u_<time>.csv` (x1, x2, u over active cells) at the
/// requested times.
#[derive(Debug, Clone)]
pub struct SnapshotWriter {
    dir: PathBuf,
    times: Vec<f64>,
    tolerance: f64,
    pub written: Vec<(f64, PathBuf)>,
}

impl SnapshotWriter {
    /// `dt` is the run's step; a snapshot fires on the step closest to each time.
    pub fn new(dir: impl Into<PathBuf>, times: Vec<f64>, dt: f64) -> Self {
        Self {
            dir: dir.into(),
            times,
            tolerance: dt / 2.0,
            written: Vec::new(),
        }
    }
}

pub fn write_field_csv<W: Write>(grid: &Grid, field: &Field, mut out: W) -> io::Result<()> {
    writeln!(out, "x1,x2,u")?;
    for k in 0..grid.len() {
        if grid.is_active(k) {
            let (x1, x2) = grid.center(grid.cell_of(k));
            writeln!(out, "{x1},{x2},{}", field.get(k))?;
        }
    }
    Ok(())
}

impl Observer for SnapshotWriter {
    fn cadence(&self) -> usize {
        1
    }

    fn observe(&mut self, sample: &Sample<'_>) -> Result<(), String> {
        let due: Vec<f64> = self
            .times
            .iter()
            .copied()
            .filter(|t| (t - sample.time).abs() <= self.tolerance * (1.0 + 1e-9))
            .filter(|t| !self.written.iter().any(|(w, _)| w == t))
            .collect();
        for t in due {
            let path = self.dir.join(format!("u_{t:.2}.csv"));
            write_atomic(&path, |w| write_field_csv(sample.grid, sample.field, w))
                .map_err(|e| format!("{}: {e}", path.display()))?;
            self.written.push((t, path));
        }
        Ok(())
    }
}
