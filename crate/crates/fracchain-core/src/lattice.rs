//! Geometry layer: lattice domains, conditioning sets and the
//! height-dependent conductance field.
//!
//! Diamond-graph domains (the pi/4-rotated lattice) are stored in rotated
//! integer coordinates. A diamond site with doubled coordinates `(u, v)`
//! (standing for the plane point `(u/2, v/2)`, with `u + v` even) maps to
//! the grid cell `(a, b) = ((u + v)/2, (v - u)/2)`; diamond adjacency
//! becomes nearest-neighbour adjacency of `(a, b)` and the height is
//! `v = a + b`. The baseline `Z x {0}` is the anti-diagonal `a + b = 0`,
//! with chain coordinate `k = a`. This keeps site identity integral and
//! lets every two-dimensional solve run on one masked rectangular grid
//! type, at the price of masking out the rotated square's corners.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Cell status on a masked grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CellState {
    /// Not part of the graph: no edges reach it.
    Outside = 0,
    /// Dirichlet: edges reach it and kill the walk (field pinned to zero).
    Dead = 1,
    Alive = 2,
}

/// Edge weights of a masked grid.
#[derive(Debug, Clone)]
pub enum EdgeWeights {
    Unit,
    /// Diamond-graph conductances: the edge from `(a, b)` towards `+a` or
    /// `+b` carries `a(v, v+1)` with `v = a + b`.
    Height(ConductanceField),
}

/// Rectangular grid with a cell mask, optionally periodic.
#[derive(Debug, Clone)]
pub struct MaskedGrid {
    pub nx: usize,
    pub ny: usize,
    /// World coordinate of cell `(0, 0)`.
    pub x0: i64,
    pub y0: i64,
    pub periodic: bool,
    state: Vec<u8>,
    pub weights: EdgeWeights,
}

impl MaskedGrid {
    pub fn new(nx: usize, ny: usize, x0: i64, y0: i64, periodic: bool, weights: EdgeWeights) -> Self {
        MaskedGrid {
            nx,
            ny,
            x0,
            y0,
            periodic,
            state: vec![CellState::Outside as u8; nx * ny],
            weights,
        }
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Cell index of a world coordinate, if it lies on the grid.
    pub fn cell(&self, x: i64, y: i64) -> Option<usize> {
        let ix = x - self.x0;
        let iy = y - self.y0;
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            None
        } else {
            Some(self.idx(ix as usize, iy as usize))
        }
    }

    pub fn world(&self, cell: usize) -> (i64, i64) {
        let ix = (cell % self.nx) as i64;
        let iy = (cell / self.nx) as i64;
        (self.x0 + ix, self.y0 + iy)
    }

    #[inline]
    pub fn state(&self, cell: usize) -> CellState {
        match self.state[cell] {
            0 => CellState::Outside,
            1 => CellState::Dead,
            _ => CellState::Alive,
        }
    }

    pub fn set_state(&mut self, cell: usize, s: CellState) {
        self.state[cell] = s as u8;
    }

    #[inline]
    pub fn is_alive(&self, cell: usize) -> bool {
        self.state[cell] == CellState::Alive as u8
    }

    pub fn alive_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.state.len()).filter(|&c| self.is_alive(c))
    }

    pub fn alive_count(&self) -> usize {
        self.state.iter().filter(|&&s| s == CellState::Alive as u8).count()
    }

    /// Weight of the edge leaving `(x, y)` in the `+x`/`+y` direction.
    #[inline]
    pub fn weight_up(&self, x: i64, y: i64) -> f64 {
        match &self.weights {
            EdgeWeights::Unit => 1.0,
            EdgeWeights::Height(f) => f.level(x + y),
        }
    }

    /// Weight of the edge leaving `(x, y)` in the `-x`/`-y` direction.
    #[inline]
    pub fn weight_down(&self, x: i64, y: i64) -> f64 {
        match &self.weights {
            EdgeWeights::Unit => 1.0,
            EdgeWeights::Height(f) => f.level(x + y - 1),
        }
    }
}

/// Height-dependent conductances of the diamond graph.
///
/// `a(0, 1) = a(-1, 0) = 1/4` on the edges crossing the baseline, the ratio
/// `a(r, r+1) / (a(r-1, r) + a(r, r+1))` equals the Bessel up-probability
/// `Q_s(r, r+1)`, and the field is symmetric under vertical reflection.
/// For `s` in `[0, 1)` and `r >= 1` the kernel's `max(..., 1/4)` clamp
/// never binds (`s/(4r) < 1/4`), so the ratio constraint is equivalent to
/// the recursion `a(r, r+1) = (1 - s/2r) / (1 + s/2r) a(r-1, r)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConductanceField {
    pub s: f64,
    /// `levels[r] = a(r, r+1)` for `r >= 0`.
    levels: Vec<f64>,
    pub max_height: usize,
}

impl ConductanceField {
    /// `a(r, r+1)` for any integer `r`, via reflection symmetry.
    #[inline]
    pub fn level(&self, r: i64) -> f64 {
        let idx = if r >= 0 { r as usize } else { (-r - 1) as usize };
        self.levels[idx.min(self.levels.len() - 1)]
    }
}

pub fn conductance_field(s: f64, max_height: usize) -> Result<ConductanceField> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!(
            "conductance field requires s in [0, 1), got {s}"
        )));
    }
    if max_height < 1 {
        return Err(Error::InvalidParameter("max_height must be >= 1".into()));
    }
    let mut levels = Vec::with_capacity(max_height + 1);
    levels.push(0.25);
    for r in 1..=max_height {
        let rf = r as f64;
        debug_assert!(s / (4.0 * rf) < 0.25);
        let prev = *levels.last().unwrap();
        levels.push(prev * (1.0 - s / (2.0 * rf)) / (1.0 + s / (2.0 * rf)));
    }
    Ok(ConductanceField { s, levels, max_height })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainKind {
    /// 1D interval `{-n..n}` with long-range Dirichlet exterior.
    Interval { n: usize },
    /// `{-n..n}^2` with Dirichlet boundary on the adjacent exterior ring.
    Box2d { n: usize },
    Torus2d { n: usize },
    /// Diamond graph minus the slit `{|k| >= n+1} x {0}`, truncated to the
    /// sup-norm box of radius `box_factor * n` with a Dirichlet outer ring.
    SlitDiamond { n: usize, box_factor: usize },
    /// Sites of the slit domain with `|z|_inf <= m n` and
    /// `dist_inf(z, slit) >= n / m`.
    SmoothedSlit { n: usize, m: usize },
    /// `{-n..n} x {0..n}`: Dirichlet top/left/right, free bottom.
    HalfPlaneFreeBottom { n: usize },
}

/// Which part of the smoothed-slit boundary a dead cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPart {
    /// The outer square of radius `m n`.
    OuterSquare,
    /// The layer at distance `n / m` around the slit.
    SlitCollar,
}

#[derive(Debug, Clone)]
pub struct LatticeDomain {
    pub kind: DomainKind,
    pub grid: MaskedGrid,
    /// Baseline sites as `(chain coordinate k, cell index)`, sorted by `k`.
    pub line: Vec<(i64, usize)>,
}

impl LatticeDomain {
    pub fn is_diamond(&self) -> bool {
        matches!(
            self.kind,
            DomainKind::SlitDiamond { .. } | DomainKind::SmoothedSlit { .. }
        )
    }

    /// Cell index of the baseline site with chain coordinate `k`.
    pub fn line_cell(&self, k: i64) -> Option<usize> {
        self.line
            .binary_search_by_key(&k, |&(kk, _)| kk)
            .ok()
            .map(|i| self.line[i].1)
    }

    /// Doubled distance from a baseline site `k` to the slit `|x| >= n+1`,
    /// in lattice units (`2 * dist`).
    pub fn doubled_slit_distance(&self, k: i64) -> Option<i64> {
        match self.kind {
            DomainKind::SlitDiamond { n, .. } | DomainKind::SmoothedSlit { n, .. } => {
                Some(2 * (n as i64 + 1 - k.abs()))
            }
            _ => None,
        }
    }

    /// Boundary classification for smoothed-slit domains.
    pub fn boundary_part(&self, cell: usize) -> Option<BoundaryPart> {
        let DomainKind::SmoothedSlit { n, m } = self.kind else {
            return None;
        };
        if self.grid.state(cell) != CellState::Dead {
            return None;
        }
        let (a, b) = self.grid.world(cell);
        let (du, v) = slit_gap(a, b, n as i64);
        if (m as i64) * du.max(v.abs()) < 2 * n as i64 {
            Some(BoundaryPart::SlitCollar)
        } else {
            Some(BoundaryPart::OuterSquare)
        }
    }

    pub fn with_killed_cell(mut self, x: i64, y: i64) -> Result<Self> {
        let cell = self
            .grid
            .cell(x, y)
            .ok_or_else(|| Error::InvalidParameter(format!("cell ({x}, {y}) not on grid")))?;
        self.grid.set_state(cell, CellState::Dead);
        self.line.retain(|&(_, c)| c != cell);
        Ok(self)
    }
}

/// Doubled horizontal gap to the slit and doubled height of a rotated cell.
fn slit_gap(a: i64, b: i64, n: i64) -> (i64, i64) {
    let u = a - b;
    let v = a + b;
    let du = if u.abs() >= 2 * n + 2 {
        u.abs() % 2
    } else {
        2 * n + 2 - u.abs()
    };
    (du, v)
}

pub fn build_domain(kind: DomainKind) -> Result<LatticeDomain> {
    match kind {
        DomainKind::Interval { n } => {
            let width = 2 * n + 1;
            let mut grid = MaskedGrid::new(width, 1, -(n as i64), 0, false, EdgeWeights::Unit);
            let mut line = Vec::with_capacity(width);
            for k in -(n as i64)..=(n as i64) {
                let cell = grid.cell(k, 0).unwrap();
                grid.set_state(cell, CellState::Alive);
                line.push((k, cell));
            }
            Ok(LatticeDomain { kind, grid, line })
        }
        DomainKind::Box2d { n } => {
            if n < 1 {
                return Err(Error::InvalidParameter("box2d requires n >= 1".into()));
            }
            let half = n as i64 + 1;
            let width = 2 * half as usize + 1;
            let mut grid = MaskedGrid::new(width, width, -half, -half, false, EdgeWeights::Unit);
            let mut line = Vec::new();
            for y in -half..=half {
                for x in -half..=half {
                    let cell = grid.cell(x, y).unwrap();
                    if x.abs() <= n as i64 && y.abs() <= n as i64 {
                        grid.set_state(cell, CellState::Alive);
                        if y == 0 {
                            line.push((x, cell));
                        }
                    } else {
                        grid.set_state(cell, CellState::Dead);
                    }
                }
            }
            Ok(LatticeDomain { kind, grid, line })
        }
        DomainKind::Torus2d { n } => {
            if n < 1 {
                return Err(Error::InvalidParameter("torus2d requires n >= 1".into()));
            }
            let width = 2 * n + 1;
            let mut grid = MaskedGrid::new(
                width,
                width,
                -(n as i64),
                -(n as i64),
                true,
                EdgeWeights::Unit,
            );
            let mut line = Vec::new();
            for y in -(n as i64)..=(n as i64) {
                for x in -(n as i64)..=(n as i64) {
                    let cell = grid.cell(x, y).unwrap();
                    grid.set_state(cell, CellState::Alive);
                    if y == 0 {
                        line.push((x, cell));
                    }
                }
            }
            Ok(LatticeDomain { kind, grid, line })
        }
        DomainKind::SlitDiamond { n, box_factor } => {
            if n < 1 || box_factor < 2 {
                return Err(Error::InvalidParameter(
                    "slit domain requires n >= 1 and box_factor >= 2".into(),
                ));
            }
            let field = conductance_field(0.0, 1)?; // replaced by callers needing s > 0
            build_diamond(kind, n, (box_factor * n) as i64, None, EdgeWeights::Height(field))
        }
        DomainKind::SmoothedSlit { n, m } => {
            if n < 1 || m < 2 {
                return Err(Error::InvalidParameter(
                    "smoothed slit requires n >= 1 and m >= 2".into(),
                ));
            }
            let field = conductance_field(0.0, 1)?;
            build_diamond(kind, n, (m * n) as i64, Some(m as i64), EdgeWeights::Height(field))
        }
        DomainKind::HalfPlaneFreeBottom { n } => {
            if n < 1 {
                return Err(Error::InvalidParameter("half plane requires n >= 1".into()));
            }
            let half = n as i64 + 1;
            let width = 2 * half as usize + 1;
            let ny = n + 2;
            let mut grid = MaskedGrid::new(width, ny, -half, 0, false, EdgeWeights::Unit);
            let mut line = Vec::new();
            for y in 0..ny as i64 {
                for x in -half..=half {
                    let cell = grid.cell(x, y).unwrap();
                    if x.abs() <= n as i64 && y <= n as i64 {
                        grid.set_state(cell, CellState::Alive);
                        if y == 0 {
                            line.push((x, cell));
                        }
                    } else {
                        grid.set_state(cell, CellState::Dead);
                    }
                }
            }
            // no cells below y = 0: the bottom boundary is free
            Ok(LatticeDomain { kind, grid, line })
        }
    }
}

/// Builds a slit or smoothed-slit domain with outer radius `r_out`
/// (original units). `collar` is Some(M) for the smoothed variant.
fn build_diamond(
    kind: DomainKind,
    n: usize,
    r_out: i64,
    collar: Option<i64>,
    weights: EdgeWeights,
) -> Result<LatticeDomain> {
    let l1 = 2 * r_out; // |a| + |b| <= l1
    let lb = l1 + 1; // bounding box includes the Dirichlet rim
    let width = (2 * lb + 1) as usize;
    let mut grid = MaskedGrid::new(width, width, -lb, -lb, false, weights);
    let nn = n as i64;
    let mut line = Vec::new();
    for b in -lb..=lb {
        for a in -lb..=lb {
            let cell = grid.cell(a, b).unwrap();
            if a.abs() + b.abs() > l1 {
                // outside the rotated square; keep a one-cell Dirichlet rim
                if a.abs() + b.abs() <= l1 + 1 {
                    grid.set_state(cell, CellState::Dead);
                }
                continue;
            }
            let v = a + b;
            let on_slit = v == 0 && a.abs() >= nn + 1;
            let alive = if let Some(m) = collar {
                let (du, vv) = slit_gap(a, b, nn);
                !on_slit && m * du.max(vv.abs()) >= 2 * nn
            } else {
                !on_slit
            };
            if alive {
                grid.set_state(cell, CellState::Alive);
                if v == 0 {
                    line.push((a, cell));
                }
            } else {
                grid.set_state(cell, CellState::Dead);
            }
        }
    }
    line.sort_by_key(|&(k, _)| k);
    Ok(LatticeDomain { kind, grid, line })
}

/// Attaches a conductance field to a diamond domain.
pub fn with_conductances(mut domain: LatticeDomain, field: ConductanceField) -> Result<LatticeDomain> {
    if !domain.is_diamond() {
        return Err(Error::InvalidParameter(
            "conductance fields apply to diamond-graph domains".into(),
        ));
    }
    let needed = match domain.kind {
        DomainKind::SlitDiamond { n, box_factor } => 2 * box_factor * n + 2,
        DomainKind::SmoothedSlit { n, m } => 2 * m * n + 2,
        _ => unreachable!(),
    };
    if field.max_height < needed {
        return Err(Error::InvalidParameter(format!(
            "conductance field covers heights up to {}, domain needs {needed}",
            field.max_height
        )));
    }
    domain.grid.weights = EdgeWeights::Height(field);
    Ok(domain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConditioningKind {
    Line,
    Strip { offset: i64, width: usize },
    Fractal { level: u32, mask: [bool; 9] },
}

#[derive(Debug, Clone)]
pub struct ConditioningSet {
    pub kind: ConditioningKind,
    /// Cell indices within the host domain.
    pub cells: Vec<usize>,
}

/// The 3x3 subdivision mask used when the caller does not supply one: the
/// middle row plus one recursing block above and below the centre. It keeps
/// the middle line at every level, is reflection symmetric, and spans a
/// polynomial fraction of the box (dimension log 5 / log 3).
pub const DEFAULT_FRACTAL_MASK: [bool; 9] = [
    false, true, false, // dy = -1
    true, true, true, // dy = 0 (middle row)
    false, true, false, // dy = +1
];

/// Self-similar Monge-type subset of the centred box of side `3^level`.
#[derive(Debug, Clone)]
pub struct FractalSet {
    pub level: u32,
    pub mask: [bool; 9],
    /// Member sites in centred world coordinates.
    pub sites: Vec<(i64, i64)>,
    /// Occupied cell count after each subdivision step.
    pub cells_per_level: Vec<usize>,
}

impl FractalSet {
    /// `log(occupied cells) / log(3^depth)` after each subdivision step;
    /// constant across depths by exact self-similarity.
    pub fn dimension_estimates(&self) -> Vec<f64> {
        self.cells_per_level
            .iter()
            .enumerate()
            .map(|(i, &c)| (c as f64).ln() / ((i + 1) as f64 * 3f64.ln()))
            .collect()
    }
}

pub fn fractal_set(level: u32, mask: [bool; 9]) -> Result<FractalSet> {
    if level == 0 {
        return Err(Error::InvalidParameter("fractal level must be >= 1".into()));
    }
    if !mask[4] {
        return Err(Error::InvalidParameter(
            "fractal mask must keep the centre cell".into(),
        ));
    }
    let side = 3i64.pow(level);
    let mut cells: Vec<(i64, i64)> = vec![(0, 0)]; // lower-left corners, scale 3^level
    let mut cells_per_level = Vec::new();
    for l in (0..level).rev() {
        let sub = 3i64.pow(l);
        let mut next = Vec::with_capacity(cells.len() * 5);
        for &(cx, cy) in &cells {
            for dy in 0..3i64 {
                for dx in 0..3i64 {
                    if mask[(dy * 3 + dx) as usize] {
                        next.push((cx + dx * sub, cy + dy * sub));
                    }
                }
            }
        }
        cells = next;
        cells_per_level.push(cells.len());
    }
    let shift = (side - 1) / 2;
    let sites: Vec<(i64, i64)> = cells.iter().map(|&(x, y)| (x - shift, y - shift)).collect();
    Ok(FractalSet {
        level,
        mask,
        sites,
        cells_per_level,
    })
}

/// Materialises a conditioning set inside a host domain.
pub fn conditioning_set(domain: &LatticeDomain, kind: ConditioningKind) -> Result<ConditioningSet> {
    match kind {
        ConditioningKind::Line => Ok(ConditioningSet {
            cells: domain.line.iter().map(|&(_, c)| c).collect(),
            kind,
        }),
        ConditioningKind::Strip { offset, width } => {
            if width == 0 {
                return Err(Error::InvalidParameter("strip width must be >= 1".into()));
            }
            if width > domain.grid.ny {
                return Err(Error::InvalidParameter(format!(
                    "strip width {width} exceeds host height {}",
                    domain.grid.ny
                )));
            }
            let mut cells = Vec::new();
            for cell in domain.grid.alive_cells() {
                let (x, y) = domain.grid.world(cell);
                let level = if domain.is_diamond() { x + y } else { y };
                if level >= offset && level < offset + width as i64 {
                    cells.push(cell);
                }
            }
            if cells.is_empty() {
                return Err(Error::InvalidParameter("strip misses the domain".into()));
            }
            Ok(ConditioningSet { kind, cells })
        }
        ConditioningKind::Fractal { level, mask } => {
            let set = fractal_set(level, mask)?;
            let mut cells = Vec::with_capacity(set.sites.len());
            for &(x, y) in &set.sites {
                let cell = domain.grid.cell(x, y).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "fractal site ({x}, {y}) outside host; need a box with 2n+1 = 3^{level}"
                    ))
                })?;
                if domain.grid.is_alive(cell) {
                    cells.push(cell);
                }
            }
            Ok(ConditioningSet { kind, cells })
        }
    }
}
