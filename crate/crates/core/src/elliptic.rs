//! Neumann Poisson solves: the artificial-compressibility pressure, the
//! Helmholtz–Leray decomposition and the dual problem of the pressure
//! estimate.
//!
//! The discrete Neumann Laplacian is symmetric negative semidefinite with
//! the constants as kernel. Solves work on the mean-zero subspace with a
//! preconditioned conjugate-gradient loop whose preconditioner is the exact
//! tensor-product eigen-solve, so on boxes the loop finishes after the first
//! application.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{lp_norm, ScalarField, VelocityField};
use crate::geometry::{AxisKind, Grid, Location};
use crate::operators::{divergence, gradient, laplacian};
use crate::spectral::{Basis1D, BasisKind, SpectralSolver};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DUAL_EXPONENT: f64 = 5.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    Spectral,
    None,
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub field: ScalarField,
    /// Mean subtracted from the right-hand side to make it compatible.
    pub removed_mean: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct HelmholtzDecomposition {
    pub solenoidal: VelocityField,
    pub potential: ScalarField,
    pub gradient_part: VelocityField,
}

#[derive(Debug, Clone)]
pub struct DualField {
    pub g: ScalarField,
    pub delta: f64,
    pub alpha: f64,
    /// Mean of `(|p|+δ)^{α-2} p` removed before the solve.
    pub rhs_mean: f64,
}

fn cell_basis(grid: &Grid, axis: usize) -> Basis1D {
    let kind = match grid.kind(axis) {
        AxisKind::Periodic => BasisKind::Periodic,
        AxisKind::Wall => BasisKind::NeumannCell,
    };
    Basis1D::new(kind, grid.n(axis), grid.h(axis))
}

#[derive(Debug, Clone)]
pub struct EllipticSolver {
    grid: Arc<Grid>,
    spectral: SpectralSolver,
    pub preconditioner: Preconditioner,
    pub max_iterations: usize,
}

impl EllipticSolver {
    pub fn new(grid: &Arc<Grid>) -> Self {
        let bases = (0..grid.dim()).map(|a| cell_basis(grid, a)).collect();
        EllipticSolver {
            grid: grid.clone(),
            spectral: SpectralSolver::new(bases),
            preconditioner: Preconditioner::Spectral,
            max_iterations: 10_000,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spectral(&self) -> &SpectralSolver {
        &self.spectral
    }

    fn precondition(&self, r: &ScalarField) -> ScalarField {
        match self.preconditioner {
            // -Δ is SPD on mean-zero fields; apply its exact inverse
            Preconditioner::Spectral => {
                let z = self.spectral.solve_symbol(r.data(), |lam| -lam);
                ScalarField::from_vec(&self.grid, z).expect("shape")
            }
            Preconditioner::None => r.clone(),
        }
    }

    /// Solve `Δ_h s = rhs` with zero mean. An incompatible right-hand side
    /// has its mean removed, which is reported in the result.
    pub fn solve_neumann_poisson(&self, rhs: &ScalarField, tol: f64) -> Result<PoissonSolution> {
        let mut b = rhs.clone();
        let removed_mean = b.subtract_mean();
        let bnorm = lp_norm(&b, 2.0)?;
        if bnorm == 0.0 {
            let mut z = ScalarField::zeros(&self.grid);
            z.mean_zero = true;
            return Ok(PoissonSolution { field: z, removed_mean, residual: 0.0, iterations: 0 });
        }
        // CG on A = -Δ_h, A x = -b
        b.scale(-1.0);
        let mut x = ScalarField::zeros(&self.grid);
        let mut r = b.clone();
        let mut z = self.precondition(&r);
        z.subtract_mean();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut iterations = 0;
        let mut residual = 1.0;
        while iterations < self.max_iterations {
            let mut ap = laplacian(&p);
            ap.scale(-1.0);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            x.axpy(alpha, &p);
            r.axpy(-alpha, &ap);
            iterations += 1;
            residual = lp_norm(&r, 2.0)? / bnorm;
            if residual <= tol {
                break;
            }
            z = self.precondition(&r);
            z.subtract_mean();
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            let mut np = z.clone();
            np.axpy(beta, &p);
            p = np;
        }
        x.subtract_mean();
        // recompute against the caller's (mean-subtracted) data
        let mut res = laplacian(&x);
        res.axpy(1.0, &b);
        residual = residual.max(lp_norm(&res, 2.0)? / bnorm);
        if residual > tol {
            return Err(Error::NonConvergence { iterations, residual });
        }
        Ok(PoissonSolution { field: x, removed_mean, residual, iterations })
    }

    /// `p` with `-εΔ_h p + div u = 0`, zero mean.
    pub fn solve_pressure(&self, u: &VelocityField, epsilon: f64, tol: f64) -> Result<ScalarField> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
        }
        let mut rhs = divergence(u);
        rhs.scale(1.0 / epsilon);
        Ok(self.solve_neumann_poisson(&rhs, tol)?.field)
    }

    /// `u = Pu + ∇q` with `Δ_h q = div u`, `q` mean-zero.
    pub fn helmholtz(&self, u: &VelocityField, tol: f64) -> Result<HelmholtzDecomposition> {
        let q = self.solve_neumann_poisson(&divergence(u), tol)?.field;
        let qu = gradient(&q);
        let pu = u.sub(&qu);
        Ok(HelmholtzDecomposition { solenoidal: pu, potential: q, gradient_part: qu })
    }

    /// Dual problem `Δg = (|p|+δ)^{α-2} p − mean`, α = 5/3. When `delta` is
    /// `None` it defaults to `1e-8·‖p‖_∞` (or `1e-8` for `p = 0`).
    pub fn solve_dual(&self, p: &ScalarField, delta: Option<f64>, tol: f64) -> Result<DualField> {
        let delta = match delta {
            Some(d) if d > 0.0 => d,
            Some(d) => return Err(Error::InvalidArgument(format!("delta must be > 0, got {d}"))),
            None => {
                let m = p.max_abs();
                if m > 0.0 {
                    1e-8 * m
                } else {
                    1e-8
                }
            }
        };
        let alpha = DUAL_EXPONENT;
        let rhs = p.map(|v| (v.abs() + delta).powf(alpha - 2.0) * v);
        let sol = self.solve_neumann_poisson(&rhs, tol)?;
        Ok(DualField { g: sol.field, delta, alpha, rhs_mean: sol.removed_mean })
    }

    /// Solve `f(Δ_h) s = rhs` for a polynomial-type symbol, zero mean.
    pub fn solve_symbol(&self, rhs: &ScalarField, f: impl Fn(f64) -> f64) -> ScalarField {
        let mut b = rhs.clone();
        b.subtract_mean();
        let mut s = ScalarField::from_vec(&self.grid, self.spectral.solve_symbol(b.data(), f)).expect("shape");
        s.subtract_mean();
        s
    }
}

fn dot(a: &ScalarField, b: &ScalarField) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Per-component solver for `(I − c Δ_h) u_i = r_i` on the velocity faces,
/// used by the implicit diffusion option.
#[derive(Debug, Clone)]
pub struct ComponentSolver {
    grid: Arc<Grid>,
    comp: usize,
    spectral: SpectralSolver,
}

impl ComponentSolver {
    pub fn new(grid: &Arc<Grid>, comp: usize) -> Self {
        let bases = (0..grid.dim())
            .map(|a| {
                let kind = match (grid.kind(a), a == comp) {
                    (AxisKind::Periodic, _) => BasisKind::Periodic,
                    (AxisKind::Wall, true) => BasisKind::DirichletFace,
                    (AxisKind::Wall, false) => BasisKind::NeumannCell,
                };
                Basis1D::new(kind, grid.n(a), grid.h(a))
            })
            .collect();
        ComponentSolver { grid: grid.clone(), comp, spectral: SpectralSolver::new(bases) }
    }

    pub fn spectral(&self) -> &SpectralSolver {
        &self.spectral
    }

    /// Values of component data at the unknown (non-wall) faces.
    pub fn gather(&self, data: &[f64]) -> Vec<f64> {
        let shape = self.grid.shape(Location::Face(self.comp));
        if !self.grid.is_wall(self.comp) {
            return data.to_vec();
        }
        let n = self.grid.n(self.comp);
        let mut out = Vec::with_capacity(self.spectral.len());
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                for k in 0..shape[2] {
                    let kk = [i, j, k][self.comp];
                    if kk != 0 && kk != n {
                        out.push(data[crate::geometry::index(&shape, i, j, k)]);
                    }
                }
            }
        }
        out
    }

    pub fn scatter(&self, interior: &[f64]) -> Vec<f64> {
        let shape = self.grid.shape(Location::Face(self.comp));
        if !self.grid.is_wall(self.comp) {
            return interior.to_vec();
        }
        let n = self.grid.n(self.comp);
        let mut out = vec![0.0; shape.iter().product()];
        let mut it = interior.iter();
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                for k in 0..shape[2] {
                    let kk = [i, j, k][self.comp];
                    if kk != 0 && kk != n {
                        out[crate::geometry::index(&shape, i, j, k)] = *it.next().expect("len");
                    }
                }
            }
        }
        out
    }

    /// Solve `(I − c Δ_h) x = rhs` for one component array.
    pub fn solve_helmholtz(&self, rhs: &[f64], c: f64) -> Vec<f64> {
        let r = self.gather(rhs);
        self.scatter(&self.spectral.solve_symbol(&r, |lam| 1.0 - c * lam))
    }
}

pub fn solve_neumann_poisson(rhs: &ScalarField, tol: f64) -> Result<PoissonSolution> {
    EllipticSolver::new(rhs.grid()).solve_neumann_poisson(rhs, tol)
}

pub fn solve_pressure(u: &VelocityField, epsilon: f64, tol: f64) -> Result<ScalarField> {
    EllipticSolver::new(u.grid()).solve_pressure(u, epsilon, tol)
}

pub fn helmholtz(u: &VelocityField, tol: f64) -> Result<HelmholtzDecomposition> {
    EllipticSolver::new(u.grid()).helmholtz(u, tol)
}

pub fn solve_dual(p: &ScalarField, delta: Option<f64>, tol: f64) -> Result<DualField> {
    EllipticSolver::new(p.grid()).solve_dual(p, delta, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{enforced, inner_product};
    use crate::operators::vector_laplacian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize, kinds: [AxisKind; 2]) -> Arc<Grid> {
        Arc::new(Grid::new(2, &[n, n], &[1.0, 1.0], &kinds).unwrap())
    }

    fn random_u(g: &Arc<Grid>, seed: u64) -> VelocityField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = VelocityField::zeros(g);
        for c in &mut u.comps {
            for v in &mut c.data {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        enforced(u)
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let g = grid(8, [AxisKind::Wall, AxisKind::Periodic]);
        let s = solve_neumann_poisson(&ScalarField::zeros(&g), DEFAULT_TOL).unwrap();
        assert_eq!(s.field.max_abs(), 0.0);
    }

    #[test]
    fn neumann_eigenfunction() {
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let g = grid(n, [AxisKind::Periodic, AxisKind::Wall]);
            let rhs = ScalarField::from_fn(&g, |x| (PI * x[1]).cos());
            let s = solve_neumann_poisson(&rhs, DEFAULT_TOL).unwrap();
            let exact = rhs.scaled(-1.0 / (PI * PI));
            let mut e = s.field.clone();
            e.axpy(-1.0, &exact);
            errs.push(e.max_abs());
        }
        assert!(errs[0] / errs[1] > 3.9 && errs[1] / errs[2] > 3.9, "{errs:?}");
    }

    #[test]
    fn periodic_eigenfunction() {
        let g = grid(64, [AxisKind::Periodic, AxisKind::Wall]);
        let rhs = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0]).cos());
        let s = solve_neumann_poisson(&rhs, DEFAULT_TOL).unwrap();
        let exact = rhs.scaled(-1.0 / (4.0 * PI * PI));
        let mut e = s.field.clone();
        e.axpy(-1.0, &exact);
        assert!(e.max_abs() < 1e-4);
    }

    #[test]
    fn incompatible_rhs_records_mean() {
        let g = grid(8, [AxisKind::Wall, AxisKind::Wall]);
        let rhs = ScalarField::from_fn(&g, |x| 1.0 + (PI * x[0]).cos());
        let s = solve_neumann_poisson(&rhs, DEFAULT_TOL).unwrap();
        assert!((s.removed_mean - 1.0).abs() < 1e-12);
        assert!(s.field.mean().abs() < 1e-14);
    }

    #[test]
    fn unpreconditioned_cg_agrees_with_spectral() {
        let g = grid(16, [AxisKind::Wall, AxisKind::Periodic]);
        let rhs = ScalarField::from_fn(&g, |x| (PI * x[0]).cos() * (2.0 * PI * x[1]).sin() + x[0] * x[1]);
        let fast = EllipticSolver::new(&g).solve_neumann_poisson(&rhs, 1e-12).unwrap();
        let mut slow = EllipticSolver::new(&g);
        slow.preconditioner = Preconditioner::None;
        let slow = slow.solve_neumann_poisson(&rhs, 1e-12).unwrap();
        assert!(fast.iterations <= 2);
        assert!(slow.iterations > 2);
        let mut d = fast.field.clone();
        d.axpy(-1.0, &slow.field);
        assert!(d.max_abs() < 1e-10);
    }

    #[test]
    fn budget_exhaustion_reports_residual() {
        let g = grid(16, [AxisKind::Wall, AxisKind::Wall]);
        let mut s = EllipticSolver::new(&g);
        s.preconditioner = Preconditioner::None;
        s.max_iterations = 2;
        let rhs = ScalarField::from_fn(&g, |x| x[0] * x[0] * x[1] + (3.0 * x[1]).exp());
        match s.solve_neumann_poisson(&rhs, 1e-12) {
            Err(Error::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn pressure_examples() {
        let g = grid(16, [AxisKind::Wall, AxisKind::Wall]);
        let sol = crate::fields::enforced(VelocityField::from_fn(&g, |x| {
            [(PI * x[0]).sin() * (PI * x[1]).cos(), -(PI * x[0]).cos() * (PI * x[1]).sin(), 0.0]
        }));
        let p = solve_pressure(&sol, 0.1, DEFAULT_TOL).unwrap();
        assert!(p.max_abs() < 1e-12);

        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let g = grid(n, [AxisKind::Periodic, AxisKind::Wall]);
            let u = enforced(VelocityField::from_fn(&g, |x| [0.0, -PI * (PI * x[1]).sin(), 0.0]));
            let p = solve_pressure(&u, 0.1, DEFAULT_TOL).unwrap();
            let exact = ScalarField::from_fn(&g, |x| 10.0 * (PI * x[1]).cos());
            let mut e = p.clone();
            e.axpy(-1.0, &exact);
            errs.push(e.max_abs());
        }
        assert!(errs[2] < 1e-2 && errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn pressure_is_potential_over_epsilon() {
        for (seed, eps) in [(1u64, 1.0), (2, 1e-3)] {
            let g = grid(16, [AxisKind::Wall, AxisKind::Periodic]);
            let u = random_u(&g, seed);
            let p = solve_pressure(&u, eps, DEFAULT_TOL).unwrap();
            let q = helmholtz(&u, DEFAULT_TOL).unwrap().potential;
            let mut d = p.clone();
            d.axpy(-1.0 / eps, &q);
            assert!(d.max_abs() <= 1e-10 * p.max_abs());
        }
    }

    #[test]
    fn helmholtz_properties() {
        let g = grid(16, [AxisKind::Wall, AxisKind::Wall]);
        let u = random_u(&g, 9);
        let h = helmholtz(&u, DEFAULT_TOL).unwrap();
        let un = lp_norm(&u, 2.0).unwrap();
        let mut rec = h.solenoidal.clone();
        rec.axpy(1.0, &h.gradient_part);
        assert!(lp_norm(&u.sub(&rec), 2.0).unwrap() <= 1e-12 * un);
        assert!(lp_norm(&divergence(&h.solenoidal), 2.0).unwrap() <= 1e-10 * un);
        assert_eq!(h.solenoidal.max_wall_normal(), 0.0);
        assert_eq!(h.gradient_part.max_wall_normal(), 0.0);
        assert!(inner_product(&h.solenoidal, &h.gradient_part).unwrap().abs() <= 1e-10 * un * un);
        let again = helmholtz(&h.solenoidal, DEFAULT_TOL).unwrap();
        assert!(lp_norm(&again.solenoidal.sub(&h.solenoidal), 2.0).unwrap() <= 1e-10 * un);
    }

    #[test]
    fn helmholtz_of_gradient_and_solenoidal_inputs() {
        let g = grid(32, [AxisKind::Wall, AxisKind::Wall]);
        let s = ScalarField::from_fn(&g, |x| (PI * x[1]).cos());
        let u = gradient(&s);
        let h = helmholtz(&u, DEFAULT_TOL).unwrap();
        assert!(lp_norm(&h.solenoidal, 2.0).unwrap() < 1e-10);
        let mut e = h.potential.clone();
        e.axpy(-1.0, &s);
        assert!(e.max_abs() < 1e-12);

        let tg = enforced(VelocityField::from_fn(&g, |x| {
            [(PI * x[0]).sin() * (PI * x[1]).cos(), -(PI * x[0]).cos() * (PI * x[1]).sin(), 0.0]
        }));
        let h = helmholtz(&tg, DEFAULT_TOL).unwrap();
        assert!(h.potential.max_abs() < 1e-12);
        assert!(lp_norm(&h.solenoidal.sub(&tg), 2.0).unwrap() < 1e-12);
    }

    /// Dense-matrix oracle: assemble Δ_h column by column and solve
    /// `(Δ_h + 1·1ᵀ) g = rhs` directly.
    #[test]
    fn dual_matches_dense_solve() {
        use nalgebra::{DMatrix, DVector};
        let g = grid(8, [AxisKind::Periodic, AxisKind::Wall]);
        let p = ScalarField::from_fn(&g, |x| (PI * x[1]).cos());
        let dual = solve_dual(&p, None, 1e-12).unwrap();
        let m = g.num_cells();
        let mut a = DMatrix::<f64>::zeros(m, m);
        for c in 0..m {
            let mut e = ScalarField::zeros(&g);
            e.data_mut()[c] = 1.0;
            let col = laplacian(&e);
            for r in 0..m {
                a[(r, c)] = col.data()[r] + 1.0;
            }
        }
        let delta = dual.delta;
        let raw: Vec<f64> = p.data().iter().map(|v| (v.abs() + delta).powf(-1.0 / 3.0) * v).collect();
        let mean = raw.iter().sum::<f64>() / m as f64;
        let rhs = DVector::from_iterator(m, raw.iter().map(|v| v - mean));
        let x = a.lu().solve(&rhs).unwrap();
        for (gi, xi) in dual.g.data().iter().zip(x.iter()) {
            assert!((gi - xi).abs() < 1e-8);
        }
        let zero = solve_dual(&ScalarField::zeros(&g), None, 1e-12).unwrap();
        assert_eq!(zero.g.max_abs(), 0.0);
    }

    #[test]
    fn dual_is_robust_to_regularization() {
        let g = grid(32, [AxisKind::Wall, AxisKind::Wall]);
        let p = ScalarField::from_fn(&g, |x| (PI * x[0]).cos() * (PI * x[1]).cos());
        let a = solve_dual(&p, Some(1e-8), 1e-12).unwrap().g;
        let b = solve_dual(&p, Some(1e-10), 1e-12).unwrap().g;
        let mut d = a.clone();
        d.axpy(-1.0, &b);
        assert!(lp_norm(&d, 2.0).unwrap() <= 1e-4 * lp_norm(&a, 2.0).unwrap());
        assert!(solve_dual(&p, Some(0.0), 1e-12).is_err());
    }

    #[test]
    fn component_helmholtz_inverts_operator() {
        let g = Arc::new(Grid::new(2, &[8, 6], &[1.0, 0.7], &[AxisKind::Wall, AxisKind::Periodic]).unwrap());
        let u = random_u(&g, 21);
        let c = 0.01;
        let mut rhs = u.clone();
        rhs.axpy(-c, &vector_laplacian(&u));
        for i in 0..2 {
            let s = ComponentSolver::new(&g, i);
            let x = s.solve_helmholtz(&rhs.comps[i].data, c);
            for (a, b) in x.iter().zip(&u.comps[i].data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
