//! Domain shapes and their rasterization onto a uniform cell-centered grid.
//!
//! Coordinates are in kilometres. `x1` runs across the domain in
//! `[0, width]`, `x2` runs northward in `[0, north_extent]` with `x2 = 0` the
//! southern boundary. The corridor and the taper are centered on
//! `x1 = width / 2`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

/// Slack used by the closed-set membership test so that cell centers lying
/// exactly on a boundary are classified identically on both mirror sides.
const MEMBERSHIP_SLACK: f64 = 1e-9;

/// Minimum number of cells across the corridor.
pub const MIN_CELLS_ACROSS_CORRIDOR: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid domain spec: `{field}` {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error(
        "grid spacing {dx} km too coarse: corridor of width {corridor_width} km spans {cells:.2} cells, need at least {MIN_CELLS_ACROSS_CORRIDOR}"
    )]
    ResolutionTooCoarse {
        dx: f64,
        corridor_width: f64,
        cells: f64,
    },
    #[error("invalid grid spacing {0}")]
    InvalidSpacing(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainKind {
    /// Straight rectangle.
    Type1,
    /// Two rectangles joined by a narrow corridor.
    Type2,
    /// Corridor followed by a linear widening of height `taper_height`.
    Type3,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::Type1 => "type1",
            DomainKind::Type2 => "type2",
            DomainKind::Type3 => "type3",
        })
    }
}

impl FromStr for DomainKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "type1" | "1" => Ok(DomainKind::Type1),
            "type2" | "2" => Ok(DomainKind::Type2),
            "type3" | "3" => Ok(DomainKind::Type3),
            other => Err(format!("unknown domain type `{other}`")),
        }
    }
}

/// Parameterized shape of the habitat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub width: f64,
    /// Length of the southern rectangle (types 2 and 3).
    pub south_length: f64,
    pub corridor_width: f64,
    pub corridor_length: f64,
    /// Height of the widening after the corridor (type 3 only).
    pub taper_height: f64,
    /// Total north-south span of the domain.
    pub north_extent: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            kind: DomainKind::Type1,
            width: 20.0,
            south_length: 40.0,
            corridor_width: 2.0,
            corridor_length: 4.0,
            taper_height: 0.0,
            north_extent: 400.0,
        }
    }
}

impl DomainSpec {
    pub fn type1() -> Self {
        Self::default()
    }

    pub fn type2() -> Self {
        Self {
            kind: DomainKind::Type2,
            ..Self::default()
        }
    }

    pub fn type3(taper_height: f64) -> Self {
        Self {
            kind: DomainKind::Type3,
            taper_height,
            ..Self::default()
        }
    }

    /// Northern end of the corridor.
    pub fn corridor_exit(&self) -> f64 {
        self.south_length + self.corridor_length
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |field, reason: &str| {
            Err(GeometryError::InvalidSpec {
                field,
                reason: reason.to_string(),
            })
        };
        let all_finite = [
            self.width,
            self.south_length,
            self.corridor_width,
            self.corridor_length,
            self.taper_height,
            self.north_extent,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("spec", "contains a non-finite value");
        }
        if self.width <= 0.0 {
            return bad("width", "must be positive");
        }
        if self.north_extent <= 0.0 {
            return bad("north_extent", "must be positive");
        }
        if self.corridor_width <= 0.0 || self.corridor_width > self.width {
            return bad("corridor_width", "must lie in (0, width]");
        }
        if self.corridor_length <= 0.0 {
            return bad("corridor_length", "must be positive");
        }
        if self.south_length <= 0.0 {
            return bad("south_length", "must be positive");
        }
        if self.taper_height < 0.0 {
            return bad("taper_height", "must be non-negative");
        }
        if self.kind == DomainKind::Type2 && self.taper_height != 0.0 {
            return bad("taper_height", "must be 0 for a type2 domain");
        }
        if self.corridor_exit() + self.taper_height >= self.north_extent {
            return bad(
                "north_extent",
                "must exceed south_length + corridor_length + taper_height",
            );
        }
        Ok(())
    }
}

/// A validated domain with a point-membership predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGeometry {
    spec: DomainSpec,
}

pub fn build_domain(spec: DomainSpec) -> Result<DomainGeometry, GeometryError> {
    spec.validate()?;
    Ok(DomainGeometry { spec })
}

impl DomainGeometry {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    /// `(x1_min, x2_min, x1_max, x2_max)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        (0.0, 0.0, self.spec.width, self.spec.north_extent)
    }

    /// Half-width of the habitable band at latitude `x2`, measured from the
    /// centerline. `None` outside the latitude range.
    pub fn half_width_at(&self, x2: f64) -> Option<f64> {
        let s = &self.spec;
        if !(0.0..=s.north_extent).contains(&x2) {
            return None;
        }
        let full = s.width / 2.0;
        if s.kind == DomainKind::Type1 || x2 <= s.south_length {
            return Some(full);
        }
        let narrow = s.corridor_width / 2.0;
        let exit = s.corridor_exit();
        if x2 <= exit {
            return Some(narrow);
        }
        let h = if s.kind == DomainKind::Type3 {
            s.taper_height
        } else {
            0.0
        };
        if h > 0.0 && x2 <= exit + h {
            return Some(narrow + (full - narrow) * (x2 - exit) / h);
        }
        Some(full)
    }

    pub fn contains(&self, x1: f64, x2: f64) -> bool {
        if !(0.0..=self.spec.width).contains(&x1) {
            return false;
        }
        match self.half_width_at(x2) {
            Some(hw) => (x1 - self.spec.width / 2.0).abs() <= hw + MEMBERSHIP_SLACK,
            None => false,
        }
    }
}

/// Cell index on the raster, `i` across and `j` northward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
}

/// Uniform cell-centered raster of a domain. Storage is row-major with rows
/// running south to north: cell `(i, j)` lives at `j * nx + i`.
#[derive(Debug, Clone)]
pub struct Grid {
    geometry: DomainGeometry,
    dx: f64,
    nx: usize,
    ny: usize,
    active: Vec<bool>,
    active_count: usize,
    /// 1.0 where both the cell and its east neighbor are active.
    east: Vec<f64>,
    /// 1.0 where both the cell and its north neighbor are active.
    north: Vec<f64>,
    /// Faces of an active cell that border an inactive cell or the box edge.
    exterior_faces: Vec<u8>,
}

pub fn rasterize(geometry: &DomainGeometry, dx: f64) -> Result<Grid, GeometryError> {
    if !(dx.is_finite() && dx > 0.0) {
        return Err(GeometryError::InvalidSpacing(dx));
    }
    let spec = geometry.spec;
    let cells = spec.corridor_width / dx;
    if cells < MIN_CELLS_ACROSS_CORRIDOR - 1e-12 {
        return Err(GeometryError::ResolutionTooCoarse {
            dx,
            corridor_width: spec.corridor_width,
            cells,
        });
    }
    let nx = (spec.width / dx).round() as usize;
    let ny = (spec.north_extent / dx).round() as usize;
    if nx == 0 || ny == 0 {
        return Err(GeometryError::InvalidSpacing(dx));
    }
    let mut active = vec![false; nx * ny];
    for j in 0..ny {
        let x2 = (j as f64 + 0.5) * dx;
        for i in 0..nx {
            let x1 = (i as f64 + 0.5) * dx;
            active[j * nx + i] = geometry.contains(x1, x2);
        }
    }
    let active_count = active.iter().filter(|a| **a).count();
    let mut east = vec![0.0; nx * ny];
    let mut north = vec![0.0; nx * ny];
    let mut exterior_faces = vec![0u8; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if !active[k] {
                continue;
            }
            if i + 1 < nx && active[k + 1] {
                east[k] = 1.0;
            }
            if j + 1 < ny && active[k + nx] {
                north[k] = 1.0;
            }
            let neighbours = [
                i + 1 < nx && active[k + 1],
                i > 0 && active[k - 1],
                j + 1 < ny && active[k + nx],
                j > 0 && active[k - nx],
            ];
            exterior_faces[k] = neighbours.iter().filter(|n| !**n).count() as u8;
        }
    }
    Ok(Grid {
        geometry: geometry.clone(),
        dx,
        nx,
        ny,
        active,
        active_count,
        east,
        north,
        exterior_faces,
    })
}

impl Grid {
    pub fn geometry(&self) -> &DomainGeometry {
        &self.geometry
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of raster slots (active or not).
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.active_count == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dx
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    pub fn active_area(&self) -> f64 {
        self.active_count as f64 * self.cell_area()
    }

    pub fn index(&self, cell: CellIndex) -> usize {
        cell.j * self.nx + cell.i
    }

    pub fn cell_of(&self, k: usize) -> CellIndex {
        CellIndex {
            i: k % self.nx,
            j: k / self.nx,
        }
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn center(&self, cell: CellIndex) -> (f64, f64) {
        (
            (cell.i as f64 + 0.5) * self.dx,
            (cell.j as f64 + 0.5) * self.dx,
        )
    }

    /// Latitude of the centers of row `j`.
    pub fn row_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx
    }

    pub(crate) fn east_links(&self) -> &[f64] {
        &self.east
    }

    pub(crate) fn north_links(&self) -> &[f64] {
        &self.north
    }

    pub(crate) fn exterior_face_counts(&self) -> &[u8] {
        &self.exterior_faces
    }

    /// Active face-neighbors of an active cell (east, west, north, south order).
    pub fn neighbours(&self, cell: CellIndex) -> Vec<CellIndex> {
        let k = self.index(cell);
        let mut out = Vec::with_capacity(4);
        if !self.active[k] {
            return out;
        }
        if self.east[k] > 0.0 {
            out.push(CellIndex { i: cell.i + 1, ..cell });
        }
        if cell.i > 0 && self.east[k - 1] > 0.0 {
            out.push(CellIndex { i: cell.i - 1, ..cell });
        }
        if self.north[k] > 0.0 {
            out.push(CellIndex { j: cell.j + 1, ..cell });
        }
        if cell.j > 0 && self.north[k - self.nx] > 0.0 {
            out.push(CellIndex { j: cell.j - 1, ..cell });
        }
        out
    }

    /// Active cells with center latitude strictly inside `(y_low, y_high)`.
    pub fn region_mask(&self, y_low: f64, y_high: f64) -> Region {
        let mut cells = Vec::new();
        if y_low < y_high {
            for j in 0..self.ny {
                let y = self.row_center(j);
                if y > y_low && y < y_high {
                    let base = j * self.nx;
                    cells.extend((base..base + self.nx).filter(|&k| self.active[k]));
                }
            }
        }
        Region { cells }
    }

    /// All active cells.
    pub fn full_region(&self) -> Region {
        Region {
            cells: (0..self.len()).filter(|&k| self.active[k]).collect(),
        }
    }

    /// Raster slot holding `(x1, x2)`. Points on a shared edge go to the
    /// northern/eastern cell; if that slot is inactive the nearest active
    /// cell among its 3x3 neighbourhood is used.
    pub fn locate(&self, x1: f64, x2: f64) -> Option<usize> {
        if !self.geometry.contains(x1, x2) {
            return None;
        }
        let i = ((x1 / self.dx).floor() as usize).min(self.nx - 1);
        let j = ((x2 / self.dx).floor() as usize).min(self.ny - 1);
        let k = j * self.nx + i;
        if self.active[k] {
            return Some(k);
        }
        let mut best: Option<(f64, usize)> = None;
        for jj in j.saturating_sub(1)..=(j + 1).min(self.ny - 1) {
            for ii in i.saturating_sub(1)..=(i + 1).min(self.nx - 1) {
                let kk = jj * self.nx + ii;
                if !self.active[kk] {
                    continue;
                }
                let (cx, cy) = self.center(CellIndex { i: ii, j: jj });
                let d = (cx - x1).powi(2) + (cy - x2).powi(2);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, kk));
                }
            }
        }
        best.map(|(_, k)| k)
    }

    /// Writes `i,j,x1,x2,active` for every raster slot.
    pub fn write_mask_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "i,j,x1,x2,active")?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (x1, x2) = self.center(CellIndex { i, j });
                let a = u8::from(self.active[j * self.nx + i]);
                writeln!(out, "{i},{j},{x1},{x2},{a}")?;
            }
        }
        Ok(())
    }
}

/// A subset of active cells, stored as raster indices in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Region {
    cells: Vec<usize>,
}

impl Region {
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}
