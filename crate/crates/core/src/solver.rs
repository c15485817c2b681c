//! Time integration of `u_t = D lap(u) + u g(t, x, u)` on a masked grid.
//!
//! Each step applies the reaction explicitly and then one Crank-Nicolson
//! diffusion substep (Lie splitting). The diffusion substep is written in
//! midpoint form: solve `(I - dt D/2 L) w = u_n` with preconditioned
//! conjugate gradients, then set `u_{n+1} = u_n + dt D L w`. Because the last
//! update is a sum of antisymmetric face fluxes, the total population is
//! conserved under zero-flux boundaries whatever the solver tolerance.
//!
//! Work is restricted to a band of rows (the active window) outside of which
//! the density is exactly zero. The window follows the population: it grows
//! whenever rows near its edge exceed [`WindowPolicy::threshold`] and it
//! sheds rows that fall below it. Window edges are zero-flux.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::diagnostics::{total_population, Trajectory};
use crate::geometry::{Grid, Region};
use crate::model::{EnvelopeSpec, GrowthModel};

/// Population below which a relaxation is declared to have collapsed.
pub const ZERO_POPULATION: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolveFailure { iterations: usize, residual: f64 },
    #[error("invalid solver configuration: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("field length {got} does not match grid size {expected}")]
    FieldMismatch { expected: usize, got: usize },
    #[error("relaxation collapsed to zero after {time} years (no positive steady state found)")]
    ConvergedToZero { time: f64 },
    #[error("relaxation did not converge within {time} years (relative change {residual:.3e}/year)")]
    NotConverged {
        time: f64,
        residual: f64,
        report: Box<SteadyStateReport>,
    },
    #[error("non-finite density at t = {time}")]
    NonFinite { time: f64 },
    #[error("run failed at t = {time}: {source}")]
    RunFailed {
        time: f64,
        #[source]
        source: Box<SolverError>,
    },
    #[error("observer failed at t = {time}: {message}")]
    Observer { time: f64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Zero flux on every exterior face.
    Neumann,
    /// `du/dn + epsilon u = 0`: exterior faces lose `D epsilon u` per unit length.
    Robin { epsilon: f64 },
}

impl Boundary {
    fn epsilon(&self) -> f64 {
        match *self {
            Boundary::Neumann => 0.0,
            Boundary::Robin { epsilon } => epsilon,
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Neumann => f.write_str("neumann"),
            Boundary::Robin { .. } => f.write_str("robin"),
        }
    }
}

impl FromStr for Boundary {
    type Err = String;

    /// Parses the boundary kind; Robin starts with `epsilon = 0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "neumann" => Ok(Boundary::Neumann),
            "robin" => Ok(Boundary::Robin { epsilon: 0.0 }),
            other => Err(format!("unknown boundary `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Diffusion coefficient, km^2/year.
    pub diffusion: f64,
    /// Time step, years.
    pub dt: f64,
    pub boundary: Boundary,
    /// Simulated horizon, years.
    pub end_time: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            diffusion: 10.0,
            dt: 0.01,
            boundary: Boundary::Neumann,
            end_time: 30.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |field, reason: &str| {
            Err(SolverError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.diffusion.is_finite() && self.diffusion > 0.0) {
            return bad("D", "must be positive");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if !(self.end_time.is_finite() && self.end_time >= 0.0) {
            return bad("end_time", "must be non-negative");
        }
        if let Boundary::Robin { epsilon } = self.boundary {
            if !(epsilon.is_finite() && epsilon >= 0.0) {
                return bad("epsilon", "must be non-negative");
            }
        }
        Ok(())
    }

    /// Number of steps to reach `end_time`.
    pub fn step_count(&self) -> usize {
        (self.end_time / self.dt).round() as usize
    }
}

/// Population density, one value per raster slot. Inactive slots hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
        }
    }

    pub fn uniform(grid: &Grid, value: f64) -> Self {
        Self::from_fn(grid, |_, _| value)
    }

    /// Evaluates `f(x1, x2)` at the center of every active cell.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        for (k, v) in values.iter_mut().enumerate() {
            if grid.is_active(k) {
                let (x1, x2) = grid.center(grid.cell_of(k));
                *v = f(x1, x2);
            }
        }
        Self { values }
    }

    /// Wraps raster values; inactive slots are forced to zero.
    pub fn from_raster(grid: &Grid, mut values: Vec<f64>) -> Result<Self, SolverError> {
        if values.len() != grid.len() {
            return Err(SolverError::FieldMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        for (k, v) in values.iter_mut().enumerate() {
            if !grid.is_active(k) {
                *v = 0.0;
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_valid(&self) -> bool {
        self.values.iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    fn check_len(&self, grid: &Grid) -> Result<(), SolverError> {
        if self.values.len() != grid.len() {
            return Err(SolverError::FieldMismatch {
                expected: grid.len(),
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Controls the active row window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPolicy {
    /// Densities at or below this value (individuals/km^2) count as empty.
    /// `None` keeps the whole grid active.
    pub threshold: Option<f64>,
    /// Rows inspected and added or shed at each window edge.
    pub margin_rows: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self {
            threshold: Some(1e-9),
            margin_rows: 8,
        }
    }
}

impl WindowPolicy {
    pub fn full_grid() -> Self {
        Self {
            threshold: None,
            margin_rows: 8,
        }
    }
}

/// Numerical knobs that do not change the discretized equations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Numerics {
    pub window: WindowPolicy,
    pub linear: LinearSolverSettings,
}

impl Numerics {
    /// Whole grid active and a tight linear tolerance.
    pub fn reference() -> Self {
        Self {
            window: WindowPolicy::full_grid(),
            linear: LinearSolverSettings {
                rel_tol: 1e-12,
                max_iterations: 5000,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolverSettings {
    /// Stop when `||r|| <= rel_tol * ||b||`.
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for LinearSolverSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iterations: 1000,
        }
    }
}

/// Crank-Nicolson diffusion operator with reusable buffers.
#[derive(Debug, Clone)]
pub struct Diffuser {
    nx: usize,
    ny: usize,
    dx: f64,
    diffusion: f64,
    east: Vec<f64>,
    west: Vec<f64>,
    north: Vec<f64>,
    south: Vec<f64>,
    /// `epsilon * dx * (exterior faces)` per cell.
    robin: Vec<f64>,
    /// Rows whose cells and both neighbouring rows are fully active with no
    /// Robin loss; these use the coefficient-free kernel.
    plain_row: Vec<bool>,
    policy: WindowPolicy,
    settings: LinearSolverSettings,
    lo: usize,
    hi: usize,
    w: Vec<f64>,
    r: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    /// `w - u` from the previous substep, used to warm-start the next solve.
    lag: Vec<f64>,
    /// `w - u` from two substeps back.
    lag_prev: Vec<f64>,
    last_iterations: usize,
}

impl Diffuser {
    pub fn new(grid: &Grid, diffusion: f64, boundary: Boundary) -> Self {
        Self::with_policy(
            grid,
            diffusion,
            boundary,
            WindowPolicy::default(),
            LinearSolverSettings::default(),
        )
    }

    pub fn with_policy(
        grid: &Grid,
        diffusion: f64,
        boundary: Boundary,
        policy: WindowPolicy,
        settings: LinearSolverSettings,
    ) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let n = nx * ny;
        let east = grid.east_links().to_vec();
        let north = grid.north_links().to_vec();
        let mut west = vec![0.0; n];
        let mut south = vec![0.0; n];
        for k in 0..n {
            if k % nx > 0 {
                west[k] = east[k - 1];
            }
            if k >= nx {
                south[k] = north[k - nx];
            }
        }
        let eps = boundary.epsilon();
        let robin: Vec<f64> = grid
            .exterior_face_counts()
            .iter()
            .enumerate()
            .map(|(k, &f)| {
                if grid.is_active(k) {
                    eps * grid.dx() * f as f64
                } else {
                    0.0
                }
            })
            .collect();
        let full_row = |j: usize| (j * nx..(j + 1) * nx).all(|k| grid.is_active(k));
        let plain_row = (0..ny)
            .map(|j| {
                full_row(j)
                    && (j == 0 || full_row(j - 1))
                    && (j + 1 == ny || full_row(j + 1))
                    && robin[j * nx..(j + 1) * nx].iter().all(|r| *r == 0.0)
            })
            .collect();
        Self {
            nx,
            ny,
            dx: grid.dx(),
            diffusion,
            east,
            west,
            north,
            south,
            robin,
            plain_row,
            policy,
            settings,
            lo: 0,
            hi: ny,
            w: vec![0.0; n],
            r: vec![0.0; n],
            p: vec![0.0; n],
            q: vec![0.0; n],
            lag: vec![0.0; n],
            lag_prev: vec![0.0; n],
            last_iterations: 0,
        }
    }

    /// Current active rows `[lo, hi)`.
    pub fn window(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    pub fn last_iterations(&self) -> usize {
        self.last_iterations
    }

    fn row_max(u: &[f64], nx: usize, j: usize) -> f64 {
        u[j * nx..(j + 1) * nx]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sets the window from scratch to cover every row above the threshold.
    /// Values outside are zeroed; returns the removed density sum (multiply
    /// by the cell area for a population).
    pub fn reset_window(&mut self, u: &mut [f64]) -> f64 {
        self.lag.fill(0.0);
        self.lag_prev.fill(0.0);
        let Some(eps) = self.policy.threshold else {
            self.lo = 0;
            self.hi = self.ny;
            return 0.0;
        };
        let nx = self.nx;
        let occupied: Vec<usize> = (0..self.ny)
            .filter(|&j| Self::row_max(u, nx, j) > eps)
            .collect();
        let (lo, hi) = match (occupied.first(), occupied.last()) {
            (Some(&a), Some(&b)) => (
                a.saturating_sub(self.policy.margin_rows),
                (b + 1 + self.policy.margin_rows).min(self.ny),
            ),
            _ => (0, 0),
        };
        let mut removed = 0.0;
        for (k, v) in u.iter_mut().enumerate() {
            let j = k / nx;
            if (j < lo || j >= hi) && *v != 0.0 {
                removed += *v;
                *v = 0.0;
            }
        }
        self.lo = lo;
        self.hi = hi;
        removed
    }

    /// Grows or shrinks the window after a step. Returns the density shed.
    fn adjust_window(&mut self, u: &mut [f64]) -> f64 {
        let Some(eps) = self.policy.threshold else {
            return 0.0;
        };
        if self.lo >= self.hi {
            return 0.0;
        }
        let nx = self.nx;
        let m = self.policy.margin_rows.max(1);
        let mut removed = 0.0;
        let busy = |u: &[f64], rows: std::ops::Range<usize>| {
            rows.into_iter().any(|j| Self::row_max(u, nx, j) > eps)
        };
        if busy(u, self.lo..(self.lo + m).min(self.hi)) {
            let new_lo = self.lo.saturating_sub(m);
            self.lag[new_lo * nx..self.lo * nx].fill(0.0);
            self.lag_prev[new_lo * nx..self.lo * nx].fill(0.0);
            self.lo = new_lo;
        } else if self.hi - self.lo > 4 * m && !busy(u, self.lo..self.lo + 2 * m) {
            for v in &mut u[self.lo * nx..(self.lo + m) * nx] {
                removed += *v;
                *v = 0.0;
            }
            self.lo += m;
        }
        if busy(u, self.hi.saturating_sub(m).max(self.lo)..self.hi) {
            let new_hi = (self.hi + m).min(self.ny);
            self.lag[self.hi * nx..new_hi * nx].fill(0.0);
            self.lag_prev[self.hi * nx..new_hi * nx].fill(0.0);
            self.hi = new_hi;
        } else if self.hi - self.lo > 4 * m && !busy(u, self.hi - 2 * m..self.hi) {
            for v in &mut u[(self.hi - m) * nx..self.hi * nx] {
                removed += *v;
                *v = 0.0;
            }
            self.hi -= m;
        }
        removed
    }

    /// `out = a * lap(v) + b * v` on the window, with `lap` the unscaled
    /// five-point operator (face differences minus Robin loss). Window edges
    /// and domain edges reflect. Returns `sum(v * out)` over the window.
    fn apply(&self, v: &[f64], out: &mut [f64], a: f64, b: f64) -> f64 {
        let nx = self.nx;
        let mut dot = 0.0;
        for j in self.lo..self.hi {
            let base = j * nx;
            let c = &v[base..base + nx];
            let s = if j > self.lo { &v[base - nx..base] } else { c };
            let n = if j + 1 < self.hi {
                &v[base + nx..base + 2 * nx]
            } else {
                c
            };
            let o = &mut out[base..base + nx];
            if self.plain_row[j] {
                dot += plain_row_kernel(c, s, n, o, a, b);
            } else {
                let ce = &self.east[base..base + nx];
                let cw = &self.west[base..base + nx];
                let cn = &self.north[base..base + nx];
                let cs = &self.south[base..base + nx];
                let rb = &self.robin[base..base + nx];
                for i in 0..nx {
                    let e = if i + 1 < nx { c[i + 1] } else { c[i] };
                    let w = if i > 0 { c[i - 1] } else { c[i] };
                    let lap = ce[i] * (e - c[i])
                        + cw[i] * (w - c[i])
                        + cn[i] * (n[i] - c[i])
                        + cs[i] * (s[i] - c[i])
                        - rb[i] * c[i];
                    o[i] = a * lap + b * c[i];
                    dot += c[i] * o[i];
                }
            }
        }
        dot
    }

    /// One Crank-Nicolson substep of length `dt`, in place. Negative values
    /// are clamped to zero; returns the clamped and shed density sums.
    pub fn step(&mut self, u: &mut [f64], dt: f64) -> Result<(f64, f64), SolverError> {
        if self.lo >= self.hi {
            return Ok((0.0, 0.0));
        }
        let nx = self.nx;
        let range = self.lo * nx..self.hi * nx;
        let a = self.diffusion * dt / (2.0 * self.dx * self.dx);

        // Conjugate gradients on (I - a lap) w = u, warm-started by extrapolating w - u.
        let mut w = std::mem::take(&mut self.w);
        let mut r = std::mem::take(&mut self.r);
        let mut p = std::mem::take(&mut self.p);
        let mut q = std::mem::take(&mut self.q);
        for k in range.clone() {
            w[k] = u[k] + 2.0 * self.lag[k] - self.lag_prev[k];
        }
        self.apply(&w, &mut q, -a, 1.0);
        let mut b_norm2 = 0.0;
        let mut rr = 0.0;
        for k in range.clone() {
            let res = u[k] - q[k];
            r[k] = res;
            p[k] = res;
            rr += res * res;
            b_norm2 += u[k] * u[k];
        }
        let tol2 = self.settings.rel_tol * self.settings.rel_tol * b_norm2;
        let mut iterations = 0;
        let mut failure = None;
        while rr > tol2 {
            if iterations >= self.settings.max_iterations || !rr.is_finite() {
                failure = Some(SolverError::LinearSolveFailure {
                    iterations,
                    residual: (rr / b_norm2).sqrt(),
                });
                break;
            }
            let pq = self.apply(&p, &mut q, -a, 1.0);
            let alpha = rr / pq;
            let mut rr_new = 0.0;
            for (((wk, rk), pk), qk) in w[range.clone()]
                .iter_mut()
                .zip(&mut r[range.clone()])
                .zip(&p[range.clone()])
                .zip(&q[range.clone()])
            {
                *wk += alpha * pk;
                *rk -= alpha * qk;
                rr_new += *rk * *rk;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for (pk, rk) in p[range.clone()].iter_mut().zip(&r[range.clone()]) {
                *pk = rk + beta * *pk;
            }
            iterations += 1;
        }
        self.last_iterations = iterations;
        if let Some(e) = failure {
            self.w = w;
            self.r = r;
            self.p = p;
            self.q = q;
            return Err(e);
        }

        // u_{n+1} = u_n + 2a lap(w)
        self.apply(&w, &mut q, 2.0 * a, 0.0);
        let mut clamped = 0.0;
        for k in range {
            self.lag_prev[k] = self.lag[k];
            self.lag[k] = w[k] - u[k];
            let v = u[k] + q[k];
            if v < 0.0 {
                clamped -= v;
                u[k] = 0.0;
            } else {
                u[k] = v;
            }
        }
        self.w = w;
        self.r = r;
        self.p = p;
        self.q = q;
        let shed = self.adjust_window(u);
        Ok((clamped, shed))
    }
}

/// Fully active row: every face open except the row ends, which reflect.
#[inline]
fn plain_row_kernel(c: &[f64], s: &[f64], n: &[f64], o: &mut [f64], a: f64, b: f64) -> f64 {
    let nx = c.len();
    let mut dot = 0.0;
    let last = nx - 1;
    // i = 0 and i = nx-1 have a single horizontal neighbour
    let lap0 = (c[1] - c[0]) + (n[0] - c[0]) + (s[0] - c[0]);
    o[0] = a * lap0 + b * c[0];
    dot += c[0] * o[0];
    for i in 1..last {
        let lap = c[i + 1] + c[i - 1] + n[i] + s[i] - 4.0 * c[i];
        let val = a * lap + b * c[i];
        o[i] = val;
        dot += c[i] * val;
    }
    let lapn = (c[last - 1] - c[last]) + (n[last] - c[last]) + (s[last] - c[last]);
    o[last] = a * lapn + b * c[last];
    dot += c[last] * o[last];
    dot
}

/// Result of a single diffusion substep.
#[derive(Debug, Clone)]
pub struct DiffusionOutcome {
    pub field: Field,
    /// Population removed by clamping negative values.
    pub clamped_mass: f64,
    pub iterations: usize,
}

/// One Crank-Nicolson diffusion substep over the whole grid.
pub fn diffusion_step(
    grid: &Grid,
    field: &Field,
    diffusion: f64,
    dt: f64,
    boundary: Boundary,
) -> Result<DiffusionOutcome, SolverError> {
    field.check_len(grid)?;
    let mut d = Diffuser::with_policy(
        grid,
        diffusion,
        boundary,
        WindowPolicy::full_grid(),
        LinearSolverSettings {
            rel_tol: 1e-12,
            ..Default::default()
        },
    );
    let mut values = field.values.clone();
    d.reset_window(&mut values);
    let (clamped, _) = d.step(&mut values, dt)?;
    Ok(DiffusionOutcome {
        field: Field { values },
        clamped_mass: clamped * grid.cell_area(),
        iterations: d.last_iterations(),
    })
}

/// Explicit Euler reaction on rows `rows`; returns the clamped density sum.
fn react_rows(
    grid: &Grid,
    u: &mut [f64],
    model: &GrowthModel,
    envelope: &EnvelopeSpec,
    t: f64,
    dt: f64,
    rows: std::ops::Range<usize>,
) -> f64 {
    let nx = grid.nx();
    let mut clamped = 0.0;
    for j in rows {
        let inside = envelope.contains(t, grid.row_center(j));
        for v in &mut u[j * nx..(j + 1) * nx] {
            if *v == 0.0 {
                continue;
            }
            let next = *v + dt * model.reaction_rate(inside, *v);
            if next < 0.0 {
                clamped -= next;
                *v = 0.0;
            } else {
                *v = next;
            }
        }
    }
    clamped
}

/// `u <- u + dt u g(t, x, u)` per cell, clamped at zero. Returns the new field
/// and the population removed by clamping.
pub fn reaction_step(
    grid: &Grid,
    field: &Field,
    model: &GrowthModel,
    envelope: &EnvelopeSpec,
    t: f64,
    dt: f64,
) -> (Field, f64) {
    let mut values = field.values.clone();
    let clamped = react_rows(grid, &mut values, model, envelope, t, dt, 0..grid.ny());
    (Field { values }, clamped * grid.cell_area())
}

/// Sufficient condition for a positive logistic steady state:
/// `D pi^2 / (4 L^2) < r_plus`.
pub fn persistence_condition(diffusion: f64, thickness: f64, r_plus: f64) -> bool {
    diffusion * std::f64::consts::PI * std::f64::consts::PI / (4.0 * thickness * thickness)
        < r_plus
}

/// Mutable state of a running simulation.
#[derive(Debug, Clone)]
pub struct SimState {
    pub step: usize,
    pub time: f64,
    pub field: Field,
    /// Cumulative population removed by clamping.
    pub clamped_mass: f64,
    /// Cumulative population shed at window edges.
    pub shed_mass: f64,
}

/// A reaction-diffusion integrator bound to one grid and parameter set.
#[derive(Debug, Clone)]
pub struct Simulation<'g> {
    grid: &'g Grid,
    model: GrowthModel,
    envelope: EnvelopeSpec,
    config: SolverConfig,
    diffuser: Diffuser,
    state: SimState,
}

impl<'g> Simulation<'g> {
    pub fn new(
        grid: &'g Grid,
        model: GrowthModel,
        envelope: EnvelopeSpec,
        config: SolverConfig,
        initial: Field,
    ) -> Result<Self, SolverError> {
        Self::with_numerics(grid, model, envelope, config, initial, Numerics::default())
    }

    pub fn with_numerics(
        grid: &'g Grid,
        model: GrowthModel,
        envelope: EnvelopeSpec,
        config: SolverConfig,
        initial: Field,
        numerics: Numerics,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        initial.check_len(grid)?;
        if !initial.is_valid() {
            return Err(SolverError::NonFinite { time: 0.0 });
        }
        let mut diffuser = Diffuser::with_policy(
            grid,
            config.diffusion,
            config.boundary,
            numerics.window,
            numerics.linear,
        );
        let mut field = initial;
        let shed = diffuser.reset_window(&mut field.values) * grid.cell_area();
        Ok(Self {
            grid,
            model,
            envelope,
            config,
            diffuser,
            state: SimState {
                step: 0,
                time: 0.0,
                field,
                clamped_mass: 0.0,
                shed_mass: shed,
            },
        })
    }

    pub fn grid(&self) -> &'g Grid {
        self.grid
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn field(&self) -> &Field {
        &self.state.field
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn window(&self) -> (usize, usize) {
        self.diffuser.window()
    }

    /// Conjugate-gradient iterations used by the last diffusion substep.
    pub fn last_iterations(&self) -> usize {
        self.diffuser.last_iterations()
    }

    pub fn into_field(self) -> Field {
        self.state.field
    }

    /// Advances by one step: reaction at the step's start time, then diffusion.
    pub fn step(&mut self) -> Result<(), SolverError> {
        let dt = self.config.dt;
        let t = self.state.time;
        let area = self.grid.cell_area();
        let (lo, hi) = self.diffuser.window();
        let u = &mut self.state.field.values;
        let clamped_r = react_rows(self.grid, u, &self.model, &self.envelope, t, dt, lo..hi);
        let (clamped_d, shed) = self.diffuser.step(u, dt)?;
        self.state.clamped_mass += (clamped_r + clamped_d) * area;
        self.state.shed_mass += shed * area;
        self.state.step += 1;
        self.state.time = self.state.step as f64 * dt;
        let (lo, hi) = self.diffuser.window();
        let nx = self.grid.nx();
        if self.state.field.values[lo * nx..hi * nx]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(SolverError::NonFinite {
                time: self.state.time,
            });
        }
        Ok(())
    }
}

pub fn step(sim: &mut Simulation<'_>) -> Result<(), SolverError> {
    sim.step()
}

/// What a relaxation starts from.
#[derive(Debug, Clone)]
pub enum InitialGuess {
    /// `K` inside the envelope at `t = 0`, zero outside.
    CapacityInsideEnvelope,
    /// A constant density everywhere.
    Uniform(f64),
    Field(Field),
}

impl InitialGuess {
    /// The customary starting point for `model`: `K` in the envelope for
    /// logistic growth, `2K` everywhere for Allee growth.
    pub fn for_model(model: &GrowthModel) -> Self {
        match model.variant {
            crate::model::GrowthVariant::Logistic => InitialGuess::CapacityInsideEnvelope,
            crate::model::GrowthVariant::Allee => {
                InitialGuess::Uniform(2.0 * model.carrying_capacity)
            }
        }
    }

    fn realize(&self, grid: &Grid, model: &GrowthModel, envelope: &EnvelopeSpec) -> Field {
        match self {
            InitialGuess::CapacityInsideEnvelope => Field::from_fn(grid, |_, x2| {
                if envelope.contains(0.0, x2) {
                    model.carrying_capacity
                } else {
                    0.0
                }
            }),
            InitialGuess::Uniform(c) => Field::uniform(grid, *c),
            InitialGuess::Field(f) => f.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationSettings {
    /// Relative change of the total population per simulated year.
    pub tolerance: f64,
    pub max_time: f64,
    pub numerics: Numerics,
}

impl Default for RelaxationSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_time: 500.0,
            numerics: Numerics::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyStateReport {
    pub field: Field,
    pub converged: bool,
    pub relaxation_time: f64,
    /// Relative change of the population over the last simulated year.
    pub residual: f64,
    pub population: f64,
}

/// Integrates the equation with the envelope frozen at its `t = 0` position
/// until the population changes by less than `tolerance` per year.
pub fn relax_to_steady_state(
    grid: &Grid,
    model: &GrowthModel,
    envelope: &EnvelopeSpec,
    config: &SolverConfig,
    initial_guess: &InitialGuess,
    settings: RelaxationSettings,
) -> Result<SteadyStateReport, SolverError> {
    let frozen = envelope.frozen();
    let start = initial_guess.realize(grid, model, &frozen);
    let mut sim =
        Simulation::with_numerics(grid, *model, frozen, *config, start, settings.numerics)?;
    let steps_per_year = ((1.0 / config.dt).round() as usize).max(1);
    let mut previous = total_population(grid, sim.field());
    let mut residual = f64::INFINITY;
    loop {
        for _ in 0..steps_per_year {
            sim.step()?;
        }
        let p = total_population(grid, sim.field());
        let t = sim.time();
        if p < ZERO_POPULATION {
            return Err(SolverError::ConvergedToZero { time: t });
        }
        residual = if previous > 0.0 {
            (p - previous).abs() / previous
        } else {
            residual
        };
        previous = p;
        if residual < settings.tolerance {
            return Ok(SteadyStateReport {
                field: sim.into_field(),
                converged: true,
                relaxation_time: t,
                residual,
                population: p,
            });
        }
        if t >= settings.max_time - 1e-9 {
            let report = SteadyStateReport {
                field: sim.into_field(),
                converged: false,
                relaxation_time: t,
                residual,
                population: p,
            };
            return Err(SolverError::NotConverged {
                time: t,
                residual,
                report: Box::new(report),
            });
        }
    }
}

/// Values handed to observers.
#[derive(Debug)]
pub struct Sample<'a> {
    pub step: usize,
    pub time: f64,
    pub grid: &'a Grid,
    pub field: &'a Field,
    pub clamped_mass: f64,
}

/// Something that watches a run at a fixed step cadence.
pub trait Observer {
    /// Observe every `cadence()` steps (including step 0 and the last step).
    fn cadence(&self) -> usize;

    fn observe(&mut self, sample: &Sample<'_>) -> Result<(), String>;
}

/// What the built-in trajectory recorder samples.
#[derive(Debug, Clone)]
pub struct Sampling {
    /// Record every this many steps.
    pub every_steps: usize,
    /// Region for the regional count.
    pub region: Option<Region>,
    /// Probe point for the density series.
    pub probe: Option<(f64, f64)>,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            every_steps: 10,
            region: None,
            probe: None,
        }
    }
}

/// Integrates from `t = 0` to `config.end_time`, recording a trajectory and
/// feeding every observer at its cadence.
pub fn run(
    grid: &Grid,
    model: &GrowthModel,
    envelope: &EnvelopeSpec,
    config: &SolverConfig,
    initial: Field,
    sampling: &Sampling,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory, SolverError> {
    run_with_numerics(
        grid,
        model,
        envelope,
        config,
        initial,
        sampling,
        observers,
        Numerics::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn run_with_numerics(
    grid: &Grid,
    model: &GrowthModel,
    envelope: &EnvelopeSpec,
    config: &SolverConfig,
    initial: Field,
    sampling: &Sampling,
    observers: &mut [&mut dyn Observer],
    numerics: Numerics,
) -> Result<Trajectory, SolverError> {
    let mut sim = Simulation::with_numerics(grid, *model, *envelope, *config, initial, numerics)?;
    let mut traj = Trajectory::new(grid, sampling);
    let steps = config.step_count();
    let every = sampling.every_steps.max(1);
    let notify = |sim: &Simulation<'_>,
                  traj: &mut Trajectory,
                  observers: &mut [&mut dyn Observer]|
     -> Result<(), SolverError> {
        let s = sim.state();
        let last = s.step == steps;
        if s.step.is_multiple_of(every) || last {
            traj.record(s.time, grid, &s.field, s.clamped_mass);
        }
        let sample = Sample {
            step: s.step,
            time: s.time,
            grid,
            field: &s.field,
            clamped_mass: s.clamped_mass,
        };
        for obs in observers.iter_mut() {
            let c = obs.cadence().max(1);
            if s.step.is_multiple_of(c) || last {
                obs.observe(&sample).map_err(|message| SolverError::Observer {
                    time: s.time,
                    message,
                })?;
            }
        }
        Ok(())
    };
    notify(&sim, &mut traj, observers)?;
    for _ in 0..steps {
        if let Err(e) = sim.step() {
            return Err(SolverError::RunFailed {
                time: sim.time(),
                source: Box::new(e),
            });
        }
        notify(&sim, &mut traj, observers)?;
    }
    traj.shed_mass = sim.state().shed_mass;
    traj.final_field = Some(sim.into_field());
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, rasterize, DomainSpec};

    fn small_grid(kind: DomainSpec, dx: f64) -> Grid {
        rasterize(&build_domain(kind).unwrap(), dx).unwrap()
    }

    fn tiny_rect() -> Grid {
        let spec = DomainSpec {
            width: 6.0,
            north_extent: 40.0,
            south_length: 10.0,
            corridor_width: 2.0,
            ..DomainSpec::type1()
        };
        small_grid(spec, 0.5)
    }

    #[test]
    fn uniform_field_is_fixed_by_diffusion() {
        let g = small_grid(DomainSpec::type2(), 0.5);
        let f = Field::uniform(&g, 3.0);
        let out = diffusion_step(&g, &f, 10.0, 0.01, Boundary::Neumann).unwrap();
        for k in 0..g.len() {
            assert!((out.field.get(k) - f.get(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn stencil_on_quadratic() {
        // Hand-evaluated five-point stencil of x1^2: (u_{i+1} - 2u_i + u_{i-1})/dx^2 = 2.
        let g = tiny_rect();
        let d = Diffuser::with_policy(
            &g,
            1.0,
            Boundary::Neumann,
            WindowPolicy::full_grid(),
            LinearSolverSettings::default(),
        );
        let f = Field::from_fn(&g, |x1, _| x1 * x1);
        let mut out = vec![0.0; g.len()];
        let dx = g.dx();
        d.apply(f.values(), &mut out, 1.0 / (dx * dx), 0.0);
        for k in 0..g.len() {
            let c = g.cell_of(k);
            if c.i > 0 && c.i + 1 < g.nx() {
                assert!((out[k] - 2.0).abs() < 1e-9, "cell {c:?}: {}", out[k]);
            }
        }
    }

    #[test]
    fn diffusion_conserves_mass() {
        let g = small_grid(DomainSpec::type3(10.0), 0.5);
        let f = Field::from_fn(&g, |x1, x2| {
            (-(x2 - 42.0).powi(2) / 8.0).exp() * (1.0 + 0.1 * x1)
        });
        let before = total_population(&g, &f);
        let out = diffusion_step(&g, &f, 50.0, 0.01, Boundary::Neumann).unwrap();
        let after = total_population(&g, &out.field);
        assert_eq!(out.clamped_mass, 0.0);
        assert!((after - before).abs() / before < 1e-10);
    }

    #[test]
    fn robin_loses_mass_neumann_does_not() {
        let g = tiny_rect();
        let f = Field::uniform(&g, 1.0);
        let p0 = total_population(&g, &f);
        let n = diffusion_step(&g, &f, 1.0, 0.01, Boundary::Neumann).unwrap();
        assert!((total_population(&g, &n.field) - p0).abs() < 1e-10 * p0);
        let r = diffusion_step(&g, &f, 1.0, 0.01, Boundary::Robin { epsilon: 0.0 }).unwrap();
        assert_eq!(r.field, n.field);
        let r = diffusion_step(&g, &f, 1.0, 0.01, Boundary::Robin { epsilon: 0.5 }).unwrap();
        let p1 = total_population(&g, &r.field);
        // Perimeter 2 * (6 + 40) km, loss rate ~ D eps u per unit length.
        let expected = 1.0 * 0.5 * 1.0 * 92.0 * 0.01;
        assert!(p1 < p0);
        assert!(((p0 - p1) - expected).abs() / expected < 0.05);
    }

    #[test]
    fn reaction_substitution() {
        let g = tiny_rect();
        let model = GrowthModel::logistic(1.0, 2.0, 10.0);
        let env = EnvelopeSpec::shifting(30.0, 0.0);
        // Row centers above 30 km are outside the envelope.
        let f = Field::uniform(&g, 1.0);
        let (out, clamped) = reaction_step(&g, &f, &model, &env, 0.0, 0.01);
        assert_eq!(clamped, 0.0);
        let k_out = g.locate(3.0, 35.0).unwrap();
        assert!((out.get(k_out) - 0.989).abs() < 1e-12);
        let k_in = g.locate(3.0, 10.0).unwrap();
        assert!((out.get(k_in) - 1.009).abs() < 1e-12);

        let at_k = Field::uniform(&g, 10.0);
        let everywhere = EnvelopeSpec::shifting(40.0, 0.0);
        let allee = GrowthModel::allee(1.0, 2.0, 10.0, 0.25);
        for m in [model, allee] {
            let (o, _) = reaction_step(&g, &at_k, &m, &everywhere, 0.0, 0.01);
            assert_eq!(o, at_k);
        }
    }

    #[test]
    fn zero_and_capacity_are_fixed_points() {
        let g = tiny_rect();
        let env = EnvelopeSpec::shifting(40.0, 0.0);
        let cfg = SolverConfig {
            end_time: 1.0,
            ..Default::default()
        };
        for m in [
            GrowthModel::default(),
            GrowthModel::allee(1.0, 2.0, 10.0, 0.25),
        ] {
            let mut z = Simulation::new(&g, m, env, cfg, Field::zeros(&g)).unwrap();
            let mut k = Simulation::new(&g, m, env, cfg, Field::uniform(&g, 10.0)).unwrap();
            for _ in 0..100 {
                z.step().unwrap();
                k.step().unwrap();
            }
            assert!(z.field().values().iter().all(|v| *v == 0.0));
            for v in k.field().values().iter().zip(g.active_mask()) {
                if *v.1 {
                    assert!((v.0 - 10.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn persistence_inequality() {
        assert!(persistence_condition(10.0, 30.0, 1.0));
        assert!(!persistence_condition(365.0, 30.0, 1.0));
        assert!(persistence_condition(364.0, 30.0, 1.0));
        assert!(persistence_condition(1e-12, 0.1, 1e-3));
    }

    #[test]
    fn window_tracks_compact_support() {
        let g = small_grid(DomainSpec::type1(), 0.5);
        let f = Field::from_fn(&g, |_, x2| if (100.0..110.0).contains(&x2) { 5.0 } else { 0.0 });
        let mut sim = Simulation::new(
            &g,
            GrowthModel::default(),
            EnvelopeSpec::shifting(400.0, 0.0),
            SolverConfig::default(),
            f,
        )
        .unwrap();
        let (lo, hi) = sim.window();
        assert!(lo > 0 && hi < g.ny());
        for _ in 0..50 {
            sim.step().unwrap();
        }
        let (lo2, hi2) = sim.window();
        assert!(lo2 <= lo && hi2 >= hi);
        // nothing outside the window
        let nx = g.nx();
        assert!(sim.field().values()[..lo2 * nx].iter().all(|v| *v == 0.0));
        assert!(sim.field().values()[hi2 * nx..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn collapsed_envelope_relaxes_to_zero() {
        let g = small_grid(DomainSpec::type1(), 0.5);
        let m = GrowthModel::allee(1.0, 2.0, 10.0, 0.25);
        let env = EnvelopeSpec::shifting(1e-6, 0.0);
        let r = relax_to_steady_state(
            &g,
            &m,
            &env,
            &SolverConfig::default(),
            &InitialGuess::for_model(&m),
            RelaxationSettings::default(),
        );
        assert!(matches!(r, Err(SolverError::ConvergedToZero { .. })));
    }
}
