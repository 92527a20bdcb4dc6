//! Staggered velocity fields, cell-centered scalars and the norms used by the
//! estimates.
//!
//! Norms are midpoint quadratures on each array's native locations. For a
//! vector field and `p != 2` the norm is `(Σ_i ∫|u_i|^p)^{1/p}`, which is
//! equivalent to the pointwise Euclidean one and avoids interpolation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{index, Grid, Location};

/// A single array at one staggered location.
#[derive(Debug, Clone, PartialEq)]
pub struct Staggered {
    pub loc: Location,
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

impl Staggered {
    pub fn zeros(grid: &Grid, loc: Location) -> Self {
        let shape = grid.shape(loc);
        Staggered { loc, shape, data: vec![0.0; shape.iter().product()] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[index(&self.shape, i, j, k)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize, k: usize) -> &mut f64 {
        &mut self.data[index(&self.shape, i, j, k)]
    }

    /// Fill by evaluating `f` at the physical coordinates of every entry.
    pub fn from_fn(grid: &Grid, loc: Location, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut out = Staggered::zeros(grid, loc);
        let s = out.shape;
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let x = [grid.coord(loc, 0, i), grid.coord(loc, 1, j), grid.coord(loc, 2, k)];
                    out.data[index(&s, i, j, k)] = f(x);
                }
            }
        }
        out
    }

    /// Weighted sum `Σ w |f|^p`.
    pub fn power_sum(&self, grid: &Grid, p: f64) -> f64 {
        let w = grid.weights(self.loc);
        if p == 2.0 {
            w.iter().zip(&self.data).map(|(w, v)| w * v * v).sum()
        } else if p == 1.0 {
            w.iter().zip(&self.data).map(|(w, v)| w * v.abs()).sum()
        } else {
            w.iter().zip(&self.data).map(|(w, v)| w * v.abs().powf(p)).sum()
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Staggered, grid: &Grid) -> f64 {
        debug_assert_eq!(self.loc, other.loc);
        let w = grid.weights(self.loc);
        w.iter().zip(self.data.iter().zip(&other.data)).map(|(w, (a, b))| w * a * b).sum()
    }
}

/// Cell-centered scalar (pressure, potentials, divergence).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    pub values: Staggered,
    pub mean_zero: bool,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarField { grid: grid.clone(), values: Staggered::zeros(grid, Location::Cell), mean_zero: false }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> f64) -> Self {
        ScalarField { grid: grid.clone(), values: Staggered::from_fn(grid, Location::Cell, f), mean_zero: false }
    }

    pub fn from_vec(grid: &Arc<Grid>, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.num_cells() {
            return Err(Error::LayoutMismatch(format!(
                "scalar field needs {} values, got {}",
                grid.num_cells(),
                data.len()
            )));
        }
        Ok(ScalarField {
            grid: grid.clone(),
            values: Staggered { loc: Location::Cell, shape: grid.shape(Location::Cell), data },
            mean_zero: false,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.values.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.values.data
    }

    /// Volume-weighted mean.
    pub fn mean(&self) -> f64 {
        self.values.data.iter().sum::<f64>() / self.values.data.len() as f64
    }

    pub fn subtract_mean(&mut self) -> f64 {
        let m = self.mean();
        for v in &mut self.values.data {
            *v -= m;
        }
        self.mean_zero = true;
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.values.data.iter().all(|v| v.is_finite())
    }

    /// Checks the zero-mean invariant if the flag is set.
    pub fn check_mean_zero(&self) -> bool {
        !self.mean_zero || self.mean().abs() <= 1e-12 * self.max_abs().max(f64::MIN_POSITIVE)
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values.data {
            *v *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        for (y, x) in self.values.data.iter_mut().zip(&x.values.data) {
            *y += a * x;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values.data {
            *v = f(*v);
        }
        out.mean_zero = false;
        out
    }
}

/// Face-centered velocity; component `i` on faces normal to axis `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: Arc<Grid>,
    pub comps: Vec<Staggered>,
}

impl VelocityField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VelocityField {
            grid: grid.clone(),
            comps: (0..grid.dim()).map(|i| Staggered::zeros(grid, Location::Face(i))).collect(),
        }
    }

    /// Evaluate an analytic field; component `i` of `f(x)` is sampled on the
    /// `i`-faces. Boundary constraints are not applied.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        VelocityField {
            grid: grid.clone(),
            comps: (0..grid.dim()).map(|i| Staggered::from_fn(grid, Location::Face(i), |x| f(x)[i])).collect(),
        }
    }

    pub fn from_components(grid: &Arc<Grid>, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return Err(Error::LayoutMismatch(format!(
                "velocity needs {} components, got {}",
                grid.dim(),
                comps.len()
            )));
        }
        let mut out = Vec::with_capacity(comps.len());
        for (i, data) in comps.into_iter().enumerate() {
            let loc = Location::Face(i);
            if data.len() != grid.len(loc) {
                return Err(Error::LayoutMismatch(format!(
                    "component {i} needs {} values, got {}",
                    grid.len(loc),
                    data.len()
                )));
            }
            out.push(Staggered { loc, shape: grid.shape(loc), data });
        }
        Ok(VelocityField { grid: grid.clone(), comps: out })
    }

    pub fn from_staggered(grid: &Arc<Grid>, comps: Vec<Staggered>) -> Self {
        debug_assert!(comps.iter().enumerate().all(|(i, c)| c.loc == Location::Face(i)));
        VelocityField { grid: grid.clone(), comps }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0f64, |m, c| m.max(c.max_abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.data.iter().all(|v| v.is_finite()))
    }

    pub fn axpy(&mut self, a: f64, x: &VelocityField) {
        for (c, xc) in self.comps.iter_mut().zip(&x.comps) {
            for (y, x) in c.data.iter_mut().zip(&xc.data) {
                *y += a * x;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.comps {
            for v in &mut c.data {
                *v *= s;
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn sub(&self, other: &VelocityField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Largest |u·n| over wall faces.
    pub fn max_wall_normal(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0f64;
        for (i, c) in self.comps.iter().enumerate() {
            if !g.is_wall(i) {
                continue;
            }
            let s = c.shape;
            for a in 0..s[0] {
                for b in 0..s[1] {
                    for d in 0..s[2] {
                        let k = [a, b, d][i];
                        if k == 0 || k == g.n(i) {
                            m = m.max(c.at(a, b, d).abs());
                        }
                    }
                }
            }
        }
        m
    }

    /// Kinetic energy ½‖u‖².
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * inner_product(self, self).expect("same layout")
    }
}

/// Fields that can be integrated with the midpoint quadrature.
pub trait Quadrature {
    fn grid(&self) -> &Grid;
    fn parts(&self) -> Vec<&Staggered>;
}

impl Quadrature for ScalarField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn parts(&self) -> Vec<&Staggered> {
        vec![&self.values]
    }
}

impl Quadrature for VelocityField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn parts(&self) -> Vec<&Staggered> {
        self.comps.iter().collect()
    }
}

/// `Σ ∫ |f|^p` over all parts, `p` finite.
pub fn power_integral<F: Quadrature>(field: &F, p: f64) -> f64 {
    field.parts().iter().map(|s| s.power_sum(field.grid(), p)).sum()
}

pub fn lp_norm<F: Quadrature>(field: &F, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("lp_norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(field.parts().iter().fold(0.0f64, |m, s| m.max(s.max_abs())));
    }
    Ok(power_integral(field, p).powf(1.0 / p))
}

pub fn inner_product<F: Quadrature>(a: &F, b: &F) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::LayoutMismatch("inner product of fields on different grids".into()));
    }
    let (pa, pb) = (a.parts(), b.parts());
    if pa.len() != pb.len() || pa.iter().zip(&pb).any(|(x, y)| x.loc != y.loc) {
        return Err(Error::LayoutMismatch("inner product of differently staggered fields".into()));
    }
    Ok(pa.iter().zip(&pb).map(|(x, y)| x.dot(y, a.grid())).sum())
}

/// Zero the normal velocity on every wall face. The free-slip ghost
/// convention (even mirror for tangential components, odd for normal ones)
/// is built into the operator stencils, so no ghost storage is needed and
/// periodic wrap is implicit in the index maps.
pub fn enforce_boundary(u: &mut VelocityField) {
    let grid = u.grid.clone();
    for i in 0..grid.dim() {
        if !grid.is_wall(i) {
            continue;
        }
        let c = &mut u.comps[i];
        let s = c.shape;
        let last = grid.n(i);
        for a in 0..s[0] {
            for b in 0..s[1] {
                for d in 0..s[2] {
                    let k = [a, b, d][i];
                    if k == 0 || k == last {
                        *c.at_mut(a, b, d) = 0.0;
                    }
                }
            }
        }
    }
}

pub fn enforced(mut u: VelocityField) -> VelocityField {
    enforce_boundary(&mut u);
    u
}

/// Bookkeeping for `L^r(0,T; L^s)` quantities: accumulates `dt·‖f‖_s^r`
/// (rectangle rule), or the running maximum when `r = ∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeNorm {
    pub time_exponent: f64,
    pub space_exponent: f64,
    pub accumulated: f64,
    pub sample_times: Vec<f64>,
}

impl SpaceTimeNorm {
    pub fn new(time_exponent: f64, space_exponent: f64) -> Self {
        SpaceTimeNorm { time_exponent, space_exponent, accumulated: 0.0, sample_times: Vec::new() }
    }

    /// Add a sample given the spatial norm value directly.
    pub fn add_norm(&mut self, space_norm: f64, dt: f64, t: f64) {
        if self.time_exponent.is_infinite() {
            self.accumulated = self.accumulated.max(space_norm);
        } else {
            self.accumulated += dt * space_norm.powf(self.time_exponent);
        }
        self.sample_times.push(t);
    }

    /// `(∫ ‖f‖_s^r dt)^{1/r}`, or the supremum for `r = ∞`.
    pub fn norm(&self) -> f64 {
        if self.time_exponent.is_infinite() {
            self.accumulated
        } else {
            self.accumulated.powf(1.0 / self.time_exponent)
        }
    }
}

pub fn accumulate_space_time_norm<F: Quadrature>(norm: &mut SpaceTimeNorm, field: &F, dt: f64, t: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let s = lp_norm(field, norm.space_exponent)?;
    norm.add_norm(s, dt, t);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AxisKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn periodic(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(2, &[n, n], &[1.0, 1.0], &[AxisKind::Periodic; 2]).unwrap())
    }

    fn walled() -> Arc<Grid> {
        Arc::new(Grid::new(2, &[8, 6], &[1.0, 0.5], &[AxisKind::Wall, AxisKind::Periodic]).unwrap())
    }

    fn random_velocity(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> VelocityField {
        let mut u = VelocityField::zeros(g);
        for c in &mut u.comps {
            for v in &mut c.data {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        enforced(u)
    }

    #[test]
    fn constant_norm() {
        let g = periodic(8);
        let f = ScalarField::from_fn(&g, |_| 2.0);
        assert!((lp_norm(&f, 2.0).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(lp_norm(&f, f64::INFINITY).unwrap(), 2.0);
        let z = ScalarField::zeros(&g);
        for p in [1.0, 5.0 / 3.0, 2.0, 2.5, f64::INFINITY] {
            assert_eq!(lp_norm(&z, p).unwrap(), 0.0);
        }
        assert!(lp_norm(&f, 0.5).is_err());
    }

    #[test]
    fn sine_norm_converges() {
        for n in [8, 16, 32] {
            let g = periodic(n);
            let f = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
            let err = (lp_norm(&f, 2.0).unwrap() - 0.5f64.sqrt()).abs();
            assert!(err < 1.0 / (n * n) as f64, "n={n} err={err}");
        }
    }

    #[test]
    fn orthogonal_modes() {
        let g = periodic(16);
        let a = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        let b = ScalarField::from_fn(&g, |x| (4.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
        assert!(inner_product(&a, &b).unwrap().abs() < 1e-12);
        let n2 = lp_norm(&a, 2.0).unwrap();
        assert!((inner_product(&a, &a).unwrap() - n2 * n2).abs() < 1e-14);
        assert_eq!(inner_product(&a, &ScalarField::zeros(&g)).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_layouts_rejected() {
        let a = ScalarField::zeros(&periodic(8));
        let b = ScalarField::zeros(&periodic(16));
        assert!(inner_product(&a, &b).is_err());
    }

    #[test]
    fn enforce_boundary_zeroes_normal_and_is_idempotent() {
        let g = walled();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut u = VelocityField::zeros(&g);
        for c in &mut u.comps {
            for v in &mut c.data {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        assert!(u.max_wall_normal() > 0.0);
        enforce_boundary(&mut u);
        assert_eq!(u.max_wall_normal(), 0.0);
        let again = enforced(u.clone());
        assert_eq!(again, u);

        let p = periodic(8);
        let v = random_velocity(&p, &mut rng);
        let before = v.clone();
        assert_eq!(enforced(v), before);
    }

    #[test]
    fn space_time_accumulation() {
        let g = periodic(8);
        let one = ScalarField::from_fn(&g, |_| 1.0);
        let mut n = SpaceTimeNorm::new(2.0, 2.0);
        for k in 0..10 {
            accumulate_space_time_norm(&mut n, &one, 0.1, 0.1 * (k + 1) as f64).unwrap();
        }
        assert!((n.accumulated - 1.0).abs() < 1e-12);

        let mut z = SpaceTimeNorm::new(2.0, 2.0);
        accumulate_space_time_norm(&mut z, &ScalarField::zeros(&g), 0.5, 0.5).unwrap();
        assert_eq!(z.accumulated, 0.0);
        assert!(accumulate_space_time_norm(&mut z, &one, 0.0, 0.5).is_err());

        // f(t) = t, ∫_0^1 t^2 dt = 1/3, error O(dt)
        for steps in [100usize, 200] {
            let dt = 1.0 / steps as f64;
            let mut q = SpaceTimeNorm::new(2.0, 2.0);
            for k in 1..=steps {
                let t = k as f64 * dt;
                accumulate_space_time_norm(&mut q, &one.scaled(t), dt, t).unwrap();
            }
            assert!((q.accumulated - 1.0 / 3.0).abs() < dt);
        }
    }

    fn random_pair(seed: u64) -> (VelocityField, VelocityField) {
        let g = walled();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (random_velocity(&g, &mut rng), random_velocity(&g, &mut rng))
    }

    proptest! {
        #[test]
        fn holder_inequality(seed in 0u64..1000) {
            let (a, b) = random_pair(seed);
            let ip = inner_product(&a, &b).unwrap().abs();
            for (p, q) in [(2.0, 2.0), (2.5, 5.0 / 3.0)] {
                // componentwise Hölder then Hölder on the finite sum
                let bound = lp_norm(&a, p).unwrap() * lp_norm(&b, q).unwrap();
                prop_assert!(ip <= bound * (1.0 + 1e-12));
            }
        }

        #[test]
        fn norm_homogeneity(seed in 0u64..1000, lambda in -10.0f64..10.0) {
            let (a, _) = random_pair(seed);
            for p in [1.0, 5.0 / 3.0, 2.0, 2.5, 15.0] {
                let lhs = lp_norm(&a.scaled(lambda), p).unwrap();
                let rhs = lambda.abs() * lp_norm(&a, p).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-13 * rhs.max(1e-300));
            }
        }
    }
}
