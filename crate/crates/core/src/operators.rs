//! Second-order MAC operators.
//!
//! Every operator is composed from two primitive stencils along one axis: a
//! difference and an average, each mapping between centered and staggered
//! positions. Wall boundaries follow the free-slip ghost convention:
//! centered data is mirrored evenly (zero normal difference at the wall) and
//! staggered normal components vanish on the wall faces. Because gradient
//! and divergence are built from the same difference stencil they are exact
//! negative adjoints under the quadrature in [`crate::fields`].

use std::sync::Arc;

use crate::fields::{ScalarField, Staggered, VelocityField};
use crate::geometry::{index, Grid, Location};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Rule {
    Diff,
    Avg,
}

fn is_staggered(loc: Location, axis: usize) -> bool {
    match loc {
        Location::Cell => false,
        Location::Face(i) => i == axis,
        Location::Edge(i, j) => i == axis || j == axis,
    }
}

fn edge(a: usize, b: usize) -> Location {
    Location::Edge(a.min(b), a.max(b))
}

/// Location obtained by toggling staggering along `axis`.
fn toggle(loc: Location, axis: usize) -> Location {
    match loc {
        Location::Cell => Location::Face(axis),
        Location::Face(i) if i == axis => Location::Cell,
        Location::Face(i) => edge(i, axis),
        Location::Edge(i, j) if i == axis => Location::Face(j),
        Location::Edge(i, j) if j == axis => Location::Face(i),
        Location::Edge(..) => panic!("no triple-staggered locations"),
    }
}

fn stencil(grid: &Grid, src: &Staggered, axis: usize, rule: Rule) -> Staggered {
    let to_stag = !is_staggered(src.loc, axis);
    let mut out = Staggered::zeros(grid, toggle(src.loc, axis));
    let n = grid.n(axis);
    let wall = grid.is_wall(axis);
    let inv_h = 1.0 / grid.h(axis);
    let so = out.shape;
    let ss = src.shape;
    let stride = [ss[1] * ss[2], ss[2], 1][axis];
    let mut o = 0;
    for i in 0..so[0] {
        for j in 0..so[1] {
            for k in 0..so[2] {
                let idx = [i, j, k];
                let kk = idx[axis];
                let mut base = idx;
                base[axis] = 0;
                let b = index(&ss, base[0], base[1], base[2]);
                let pair = if to_stag {
                    if wall {
                        if kk == 0 || kk == n {
                            None
                        } else {
                            Some((kk - 1, kk))
                        }
                    } else {
                        Some(((kk + n - 1) % n, kk))
                    }
                } else if wall {
                    Some((kk, kk + 1))
                } else {
                    Some((kk, (kk + 1) % n))
                };
                out.data[o] = match (pair, rule) {
                    (Some((lo, hi)), Rule::Diff) => (src.data[b + hi * stride] - src.data[b + lo * stride]) * inv_h,
                    (Some((lo, hi)), Rule::Avg) => 0.5 * (src.data[b + hi * stride] + src.data[b + lo * stride]),
                    (None, Rule::Diff) => 0.0,
                    (None, Rule::Avg) => {
                        let c = if kk == 0 { 0 } else { n - 1 };
                        src.data[b + c * stride]
                    }
                };
                o += 1;
            }
        }
    }
    out
}

/// Centered difference along `axis`, toggling the staggering.
pub fn diff(grid: &Grid, src: &Staggered, axis: usize) -> Staggered {
    stencil(grid, src, axis, Rule::Diff)
}

/// Two-point average along `axis`, toggling the staggering.
pub fn avg(grid: &Grid, src: &Staggered, axis: usize) -> Staggered {
    stencil(grid, src, axis, Rule::Avg)
}

fn add_into(acc: &mut Staggered, x: &Staggered, a: f64) {
    debug_assert_eq!(acc.loc, x.loc);
    for (y, v) in acc.data.iter_mut().zip(&x.data) {
        *y += a * v;
    }
}

fn zero_wall_faces(grid: &Grid, comp: &mut Staggered, i: usize) {
    if !grid.is_wall(i) {
        return;
    }
    let s = comp.shape;
    let n = grid.n(i);
    for a in 0..s[0] {
        for b in 0..s[1] {
            for c in 0..s[2] {
                let k = [a, b, c][i];
                if k == 0 || k == n {
                    *comp.at_mut(a, b, c) = 0.0;
                }
            }
        }
    }
}

pub fn gradient(s: &ScalarField) -> VelocityField {
    let grid = s.grid().clone();
    let comps = (0..grid.dim()).map(|i| diff(&grid, &s.values, i)).collect();
    VelocityField::from_staggered(&grid, comps)
}

pub fn divergence(u: &VelocityField) -> ScalarField {
    let grid = u.grid().clone();
    let mut out = ScalarField::zeros(&grid);
    for (i, c) in u.comps.iter().enumerate() {
        add_into(&mut out.values, &diff(&grid, c, i), 1.0);
    }
    out
}

/// Scalar Laplacian `div ∘ grad` with homogeneous Neumann data on walls.
pub fn laplacian(s: &ScalarField) -> ScalarField {
    divergence(&gradient(s))
}

/// Velocity gradient entries `∂_j u_i` at their native locations:
/// cells for `i = j`, edges otherwise.
pub fn velocity_gradient(u: &VelocityField) -> Vec<Vec<Staggered>> {
    let grid = u.grid();
    u.comps.iter().map(|c| (0..grid.dim()).map(|j| diff(grid, c, j)).collect()).collect()
}

/// Componentwise vector Laplacian on faces.
pub fn vector_laplacian(u: &VelocityField) -> VelocityField {
    let grid = u.grid().clone();
    let g = velocity_gradient(u);
    let comps = (0..grid.dim())
        .map(|i| {
            let mut acc = Staggered::zeros(&grid, Location::Face(i));
            for j in 0..grid.dim() {
                add_into(&mut acc, &diff(&grid, &g[i][j], j), 1.0);
            }
            zero_wall_faces(&grid, &mut acc, i);
            acc
        })
        .collect();
    VelocityField::from_staggered(&grid, comps)
}

/// Twice the symmetric gradient, `S_ij = ∂_j u_i + ∂_i u_j`, at native
/// locations. `S_ij` and `S_ji` are the same array.
pub fn strain(u: &VelocityField) -> Vec<Vec<Staggered>> {
    let g = velocity_gradient(u);
    let d = u.dim();
    let mut s: Vec<Vec<Option<Staggered>>> = vec![vec![None; d]; d];
    for i in 0..d {
        let mut sii = g[i][i].clone();
        for v in &mut sii.data {
            *v *= 2.0;
        }
        s[i][i] = Some(sii);
        for j in (i + 1)..d {
            let mut sij = g[i][j].clone();
            add_into(&mut sij, &g[j][i], 1.0);
            s[j][i] = Some(sij.clone());
            s[i][j] = Some(sij);
        }
    }
    s.into_iter().map(|row| row.into_iter().map(|x| x.expect("filled")).collect()).collect()
}

/// `2 div D u`, on faces. Equals `Δu + ∇ div u` exactly in exact arithmetic.
pub fn div_deformation(u: &VelocityField) -> VelocityField {
    let grid = u.grid().clone();
    let s = strain(u);
    let comps = (0..grid.dim())
        .map(|i| {
            let mut acc = Staggered::zeros(&grid, Location::Face(i));
            for j in 0..grid.dim() {
                add_into(&mut acc, &diff(&grid, &s[i][j], j), 1.0);
            }
            zero_wall_faces(&grid, &mut acc, i);
            acc
        })
        .collect();
    VelocityField::from_staggered(&grid, comps)
}

/// Cell-centered tensor field (dim × dim arrays).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: Arc<Grid>,
    pub comps: Vec<Vec<Staggered>>,
}

impl TensorField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> &Staggered {
        &self.comps[i][j]
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0f64, |m, c| m.max(c.max_abs()))
    }
}

/// `D u = ½(∇u + ∇uᵀ)` averaged to cell centers.
pub fn deformation(u: &VelocityField) -> TensorField {
    let grid = u.grid().clone();
    let s = strain(u);
    let d = grid.dim();
    let mut comps: Vec<Vec<Staggered>> = vec![Vec::with_capacity(d); d];
    for i in 0..d {
        for j in 0..d {
            let mut c = if i == j { s[i][i].clone() } else { avg(&grid, &avg(&grid, &s[i][j], i.min(j)), i.max(j)) };
            for v in &mut c.data {
                *v *= 0.5;
            }
            comps[i].push(c);
        }
    }
    TensorField { grid, comps }
}

/// `2‖Du‖²` with every entry of `D` on its native location. On flat walls
/// this equals `‖∇u‖² + ‖div u‖²` exactly for `u·n = 0`.
pub fn deformation_energy(u: &VelocityField) -> f64 {
    let grid = u.grid();
    let s = strain(u);
    let d = grid.dim();
    let mut total = 0.0;
    for i in 0..d {
        total += 0.5 * s[i][i].power_sum(grid, 2.0);
        for j in (i + 1)..d {
            total += s[i][j].power_sum(grid, 2.0);
        }
    }
    total
}

/// `‖∇u‖²` at native locations.
pub fn gradient_energy(u: &VelocityField) -> f64 {
    let grid = u.grid();
    velocity_gradient(u).iter().flatten().map(|c| c.power_sum(grid, 2.0)).sum()
}

/// Energy-conserving discretization of `nl(u,u) = div(u⊗u) − ½ u div u`.
pub fn nonlinear_term(u: &VelocityField) -> VelocityField {
    nonlinear_term_with(u, -0.5)
}

/// Divergence-form advection plus `correction · u · div u`, where the
/// divergence is the one implied by the advecting fluxes (the average of the
/// two adjacent cell divergences). Only `correction = -0.5` makes the
/// operator skew; other values exist for negative controls.
pub fn nonlinear_term_with(u: &VelocityField, correction: f64) -> VelocityField {
    let grid = u.grid().clone();
    let d = grid.dim();
    let comps = (0..d)
        .map(|i| {
            let ui = &u.comps[i];
            let mut flux_div = Staggered::zeros(&grid, Location::Face(i));
            let mut adv_div = Staggered::zeros(&grid, Location::Face(i));
            for j in 0..d {
                let (advecting, transported) = if j == i {
                    let a = avg(&grid, ui, i);
                    (a.clone(), a)
                } else {
                    (avg(&grid, &u.comps[j], i), avg(&grid, ui, j))
                };
                let mut flux = advecting.clone();
                for (f, t) in flux.data.iter_mut().zip(&transported.data) {
                    *f *= t;
                }
                add_into(&mut flux_div, &diff(&grid, &flux, j), 1.0);
                add_into(&mut adv_div, &diff(&grid, &advecting, j), 1.0);
            }
            for ((f, a), v) in flux_div.data.iter_mut().zip(&adv_div.data).zip(&ui.data) {
                *f += correction * v * a;
            }
            zero_wall_faces(&grid, &mut flux_div, i);
            flux_div
        })
        .collect();
    VelocityField::from_staggered(&grid, comps)
}

/// Tangential velocity reconstructed on each wall face (normal component
/// from the face itself, tangential ones from the adjacent cell).
fn wall_face_velocity(u: &VelocityField, axis: usize, idx: [usize; 3]) -> [f64; 3] {
    let grid = u.grid();
    let mut v = [0.0; 3];
    v[axis] = u.comps[axis].at(idx[0], idx[1], idx[2]);
    let mut cell = idx;
    if cell[axis] == grid.n(axis) {
        cell[axis] -= 1;
    }
    for t in 0..grid.dim() {
        if t == axis {
            continue;
        }
        let c = &u.comps[t];
        let lo = cell;
        let mut hi = cell;
        hi[t] = if grid.is_wall(t) { cell[t] + 1 } else { (cell[t] + 1) % grid.n(t) };
        v[t] = 0.5 * (c.at(lo[0], lo[1], lo[2]) + c.at(hi[0], hi[1], hi[2]));
    }
    v
}

/// `∫_Γ u·∇n·u dS` with a caller-supplied shape operator per wall face.
pub fn boundary_energy_term_with(
    u: &VelocityField,
    shape_operator: impl Fn(&crate::geometry::BoundaryFace) -> [[f64; 3]; 3],
) -> f64 {
    let mut total = 0.0;
    for face in crate::geometry::boundary_faces(u.grid()) {
        let dn = shape_operator(&face);
        let v = wall_face_velocity(u, face.axis, face.index);
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += v[i] * dn[i][j] * v[j];
            }
        }
        total += face.area * q;
    }
    total
}

/// `∫_Γ u·∇n·u dS` for the grid's own (flat) walls: identically zero.
pub fn boundary_energy_term(u: &VelocityField) -> f64 {
    let dn = u.grid().shape_operator();
    boundary_energy_term_with(u, |_| dn)
}
