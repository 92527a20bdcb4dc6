//! Axis-aligned box domains and the MAC staggered layout.
//!
//! Velocity component `i` lives on faces normal to axis `i`; scalars live at
//! cell centers. Along a periodic axis there are `n` faces (face `0` and face
//! `n` coincide); along a wall axis there are `n + 1` faces and the two
//! boundary faces carry the impermeability constraint `u·n = 0`.
//!
//! Two-dimensional grids are stored with a trailing axis of extent one so
//! that every array is indexed as `[i0, i1, i2]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    Periodic,
    Wall,
}

impl AxisKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "periodic" => Some(AxisKind::Periodic),
            "wall" => Some(AxisKind::Wall),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AxisKind::Periodic => "periodic",
            AxisKind::Wall => "wall",
        }
    }
}

/// Where a discrete quantity lives on the staggered grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    /// Cell centers (pressure, potentials, divergence, diagonal of tensors).
    Cell,
    /// Faces normal to the given axis (velocity component of that axis).
    Face(usize),
    /// Edges staggered in both axes (off-diagonal velocity gradients).
    Edge(usize, usize),
}

impl Location {
    fn staggered(self, axis: usize) -> bool {
        match self {
            Location::Cell => false,
            Location::Face(i) => i == axis,
            Location::Edge(i, j) => i == axis || j == axis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: [usize; 3],
    lengths: [f64; 3],
    kinds: [AxisKind; 3],
    h: [f64; 3],
}

/// Number of ghost layers implied by the stencils (second-order, centered).
pub const GHOST_WIDTH: usize = 1;

impl Grid {
    pub fn new(dim: usize, n_cells: &[usize], lengths: &[f64], kinds: &[AxisKind]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if n_cells.len() != dim || lengths.len() != dim || kinds.len() != dim {
            return Err(Error::InvalidGrid(format!("expected {dim} entries for n_cells, lengths and axis_kinds")));
        }
        let mut n = [1usize; 3];
        let mut l = [1.0f64; 3];
        let mut k = [AxisKind::Periodic; 3];
        let mut h = [1.0f64; 3];
        for a in 0..dim {
            if n_cells[a] < 4 {
                return Err(Error::GridTooCoarse { axis: a, n: n_cells[a] });
            }
            if !(lengths[a] > 0.0 && lengths[a].is_finite()) {
                return Err(Error::InvalidGrid(format!("length on axis {a} must be positive, got {}", lengths[a])));
            }
            n[a] = n_cells[a];
            l[a] = lengths[a];
            k[a] = kinds[a];
            h[a] = lengths[a] / n_cells[a] as f64;
        }
        Ok(Grid { dim, n, lengths: l, kinds: k, h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn n_cells(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.lengths[axis]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn kind(&self, axis: usize) -> AxisKind {
        self.kinds[axis]
    }

    pub fn kinds(&self) -> &[AxisKind] {
        &self.kinds[..self.dim]
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn min_h(&self) -> f64 {
        self.h[..self.dim].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_wall(&self, axis: usize) -> bool {
        axis < self.dim && self.kinds[axis] == AxisKind::Wall
    }

    pub fn has_walls(&self) -> bool {
        (0..self.dim).any(|a| self.is_wall(a))
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    pub fn num_cells(&self) -> usize {
        self.n.iter().product()
    }

    /// Extent of an array at `loc` along `axis`.
    pub fn extent(&self, loc: Location, axis: usize) -> usize {
        if axis >= self.dim {
            return 1;
        }
        if loc.staggered(axis) && self.is_wall(axis) {
            self.n[axis] + 1
        } else {
            self.n[axis]
        }
    }

    pub fn shape(&self, loc: Location) -> [usize; 3] {
        [self.extent(loc, 0), self.extent(loc, 1), self.extent(loc, 2)]
    }

    pub fn len(&self, loc: Location) -> usize {
        self.shape(loc).iter().product()
    }

    /// Coordinate of index `k` along `axis` for an array at `loc`.
    pub fn coord(&self, loc: Location, axis: usize, k: usize) -> f64 {
        if loc.staggered(axis) {
            k as f64 * self.h[axis]
        } else {
            (k as f64 + 0.5) * self.h[axis]
        }
    }

    /// One-dimensional quadrature weights along `axis` for `loc`: `h`
    /// everywhere except the two boundary faces of a wall axis, which get
    /// `h/2` so that the weights sum to the axis length.
    pub fn axis_weights(&self, loc: Location, axis: usize) -> Vec<f64> {
        let m = self.extent(loc, axis);
        if axis >= self.dim {
            return vec![1.0];
        }
        let h = self.h[axis];
        let mut w = vec![h; m];
        if loc.staggered(axis) && self.is_wall(axis) {
            w[0] = 0.5 * h;
            w[m - 1] = 0.5 * h;
        }
        w
    }

    /// Full tensor-product quadrature weights for `loc`, row-major.
    pub fn weights(&self, loc: Location) -> Vec<f64> {
        let w: Vec<Vec<f64>> = (0..3).map(|a| self.axis_weights(loc, a)).collect();
        let mut out = Vec::with_capacity(self.len(loc));
        for &w0 in &w[0] {
            for &w1 in &w[1] {
                for &w2 in &w[2] {
                    out.push(w0 * w1 * w2);
                }
            }
        }
        out
    }

    /// Boundary curvature tensor ∇n on a wall face. Walls are flat.
    pub fn shape_operator(&self) -> [[f64; 3]; 3] {
        [[0.0; 3]; 3]
    }
}

pub fn make_grid(dim: usize, n_cells: &[usize], lengths: &[f64], kinds: &[AxisKind]) -> Result<Grid> {
    Grid::new(dim, n_cells, lengths, kinds)
}

#[inline]
pub fn index(shape: &[usize; 3], i: usize, j: usize, k: usize) -> usize {
    (i * shape[1] + j) * shape[2] + k
}

/// Outward normal and tangent basis on one boundary face.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFrame {
    pub normal: [f64; 3],
    pub tangents: Vec<[f64; 3]>,
}

/// A wall face: the normal axis, which side (`false` = low, `true` = high),
/// and the face index `[i0, i1, i2]` in the velocity array of that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub axis: usize,
    pub high: bool,
    pub index: [usize; 3],
    pub area: f64,
    pub frame: BoundaryFrame,
}

pub fn boundary_faces(grid: &Grid) -> Vec<BoundaryFace> {
    let mut out = Vec::new();
    for axis in 0..grid.dim() {
        if !grid.is_wall(axis) {
            continue;
        }
        let shape = grid.shape(Location::Face(axis));
        let area: f64 = (0..grid.dim()).filter(|&a| a != axis).map(|a| grid.h(a)).product();
        for high in [false, true] {
            let mut normal = [0.0; 3];
            normal[axis] = if high { 1.0 } else { -1.0 };
            let tangents = (0..grid.dim())
                .filter(|&a| a != axis)
                .map(|a| {
                    let mut t = [0.0; 3];
                    t[a] = 1.0;
                    t
                })
                .collect::<Vec<_>>();
            let kb = if high { grid.n(axis) } else { 0 };
            for i in 0..shape[0] {
                for j in 0..shape[1] {
                    for k in 0..shape[2] {
                        let mut idx = [i, j, k];
                        if idx[axis] != 0 {
                            continue;
                        }
                        idx[axis] = kb;
                        out.push(BoundaryFace {
                            axis,
                            high,
                            index: idx,
                            area,
                            frame: BoundaryFrame { normal, tangents: tangents.clone() },
                        });
                    }
                }
            }
        }
    }
    out
}
