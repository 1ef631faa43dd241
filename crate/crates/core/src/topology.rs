//! Spatial population structures: the 2D toroidal grid with Von Neumann
//! neighborhoods of radius 1, and the ring with neighborhood radius `r`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub usize);

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Topology {
    Grid { rows: usize, cols: usize },
    Ring { size: usize, radius: usize },
}

impl Topology {
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let t = Topology::Grid { rows, cols };
        t.validate()?;
        Ok(t)
    }

    pub fn ring(size: usize, radius: usize) -> Result<Self> {
        let t = Topology::Ring { size, radius };
        t.validate()?;
        Ok(t)
    }

    /// Rings need `2r + 1 <= Z`; rings of one or two cells with `r = 1`
    /// are accepted as degenerate cases whose aliased neighbors collapse.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Topology::Grid { rows, cols } => {
                if rows == 0 || cols == 0 {
                    return Err(Error::Topology(format!("grid needs rows, cols >= 1, got {rows}x{cols}")));
                }
            }
            Topology::Ring { size, radius } => {
                if size == 0 {
                    return Err(Error::Topology("ring needs at least one cell".into()));
                }
                if radius == 0 {
                    return Err(Error::Topology("ring radius must be >= 1".into()));
                }
                if 2 * radius + 1 > size && !(radius == 1 && size <= 2) {
                    return Err(Error::Topology(format!(
                        "ring radius {radius} violates r <= floor((Z-1)/2) = {} for Z = {size}",
                        (size - 1) / 2
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of cells `Z`.
    pub fn population_size(&self) -> usize {
        match *self {
            Topology::Grid { rows, cols } => rows * cols,
            Topology::Ring { size, .. } => size,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> {
        (0..self.population_size()).map(CellId)
    }

    fn check_cell(&self, c: CellId) -> Result<()> {
        if c.0 >= self.population_size() {
            return Err(Error::Topology(format!(
                "cell {} outside a population of {}",
                c.0,
                self.population_size()
            )));
        }
        Ok(())
    }

    /// `(row, col)` of a grid cell; rings are a single row.
    pub fn coords(&self, c: CellId) -> (usize, usize) {
        match *self {
            Topology::Grid { cols, .. } => (c.0 / cols, c.0 % cols),
            Topology::Ring { .. } => (0, c.0),
        }
    }

    pub fn grid_cell(&self, row: usize, col: usize) -> CellId {
        match *self {
            Topology::Grid { cols, .. } => CellId(row * cols + col),
            Topology::Ring { .. } => CellId(col),
        }
    }

    /// Neighborhood of `c`, center first.
    ///
    /// Grid order is `[self, N, S, W, E]`, ring order `[self, -1, +1, ..., -r, +r]`,
    /// both with wraparound. Aliased cells on tiny populations appear once.
    pub fn neighbors(&self, c: CellId) -> Result<Vec<CellId>> {
        self.validate()?;
        self.check_cell(c)?;
        let mut out = vec![c];
        let mut push = |id: usize| {
            let id = CellId(id);
            if !out.contains(&id) {
                out.push(id);
            }
        };
        match *self {
            Topology::Grid { rows, cols } => {
                let (r, col) = self.coords(c);
                push(((r + rows - 1) % rows) * cols + col);
                push(((r + 1) % rows) * cols + col);
                push(r * cols + (col + cols - 1) % cols);
                push(r * cols + (col + 1) % cols);
            }
            Topology::Ring { size, radius } => {
                for k in 1..=radius {
                    push((c.0 + size - k % size) % size);
                    push((c.0 + k) % size);
                }
            }
        }
        Ok(out)
    }

    /// Sub-population size `s`: 5 for grids of at least 3x3, `2r + 1` for
    /// valid rings. Degenerate populations report their deduplicated size.
    pub fn subpopulation_size(&self) -> usize {
        self.neighbors(CellId(0)).map_or(0, |n| n.len())
    }

    /// Generations needed for a center update at `from` to reach `to`.
    pub fn propagation_hops(&self, from: CellId, to: CellId) -> usize {
        match *self {
            Topology::Grid { rows, cols } => {
                let (r1, c1) = self.coords(from);
                let (r2, c2) = self.coords(to);
                let dr = r1.abs_diff(r2);
                let dc = c1.abs_diff(c2);
                dr.min(rows - dr) + dc.min(cols - dc)
            }
            Topology::Ring { size, radius } => {
                let d = from.0.abs_diff(to.0);
                d.min(size - d).div_ceil(radius)
            }
        }
    }

    /// Largest hop count from `origin` to any cell: the takeover time of a
    /// dominant genome starting there.
    pub fn takeover_time(&self, origin: CellId) -> usize {
        self.cells().map(|c| self.propagation_hops(origin, c)).max().unwrap_or(0)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Topology::Grid { rows, cols } => write!(f, "grid {rows}x{cols}"),
            Topology::Ring { size, radius } => write!(f, "ring Z={size} r={radius}"),
        }
    }
}
