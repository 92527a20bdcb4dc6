//! Weak-form residuals of the momentum and pressure equations against
//! analytic test data: `φ = θ(t)Φ(x)` with `Φ` tangential and
//! `θ = (1 − t/T)²`, and a mean-zero `ψ(x)` weighted by the same `θ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{integrate, Trapezoid};
use crate::error::{Error, Result};
use crate::fields::{inner_product, Staggered, VelocityField};
use crate::geometry::{AxisKind, Grid, Location};
use crate::operators::{divergence, gradient, nonlinear_term, strain};
use crate::stepper::{Observer, SimState, StepOutput, Stepper};

fn wavenumber(grid: &Grid, axis: usize, k: u32) -> f64 {
    match grid.kind(axis) {
        AxisKind::Wall => k as f64 * PI / grid.length(axis),
        AxisKind::Periodic => 2.0 * k as f64 * PI / grid.length(axis),
    }
}

/// One product term `amp · Π_a f_a(x_a)` of component `comp`. Along a wall
/// axis the factor is `sin` for the normal component and `cos` otherwise;
/// along periodic axes it is `cos`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorTerm {
    pub comp: usize,
    pub amp: f64,
    pub k: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVector {
    pub terms: Vec<VectorTerm>,
}

impl TestVector {
    pub fn standard() -> Self {
        TestVector {
            terms: vec![
                VectorTerm { comp: 0, amp: 1.0, k: [1, 1, 1] },
                VectorTerm { comp: 0, amp: 0.5, k: [1, 2, 0] },
                VectorTerm { comp: 1, amp: 0.7, k: [2, 1, 1] },
            ],
        }
    }

    fn factor(grid: &Grid, comp: usize, axis: usize, k: u32, x: f64) -> (f64, f64) {
        let w = wavenumber(grid, axis, k);
        if grid.kind(axis) == AxisKind::Wall && axis == comp {
            ((w * x).sin(), w * (w * x).cos())
        } else {
            ((w * x).cos(), -w * (w * x).sin())
        }
    }

    /// `(Φ_i, ∂_j Φ_i)` at `x` for component `i`.
    fn eval(&self, grid: &Grid, i: usize, x: [f64; 3]) -> (f64, [f64; 3]) {
        let d = grid.dim();
        let mut val = 0.0;
        let mut grad = [0.0; 3];
        for t in self.terms.iter().filter(|t| t.comp == i && t.comp < d) {
            let f: Vec<(f64, f64)> = (0..d).map(|a| Self::factor(grid, i, a, t.k[a], x[a])).collect();
            val += t.amp * f.iter().map(|p| p.0).product::<f64>();
            for (j, gj) in grad.iter_mut().enumerate().take(d) {
                *gj += t.amp * f.iter().enumerate().map(|(a, p)| if a == j { p.1 } else { p.0 }).product::<f64>();
            }
        }
        (val, grad)
    }

    pub fn sample(&self, grid: &std::sync::Arc<Grid>) -> VelocityField {
        let comps =
            (0..grid.dim()).map(|i| Staggered::from_fn(grid, Location::Face(i), |x| self.eval(grid, i, x).0)).collect();
        VelocityField::from_staggered(grid, comps)
    }

    /// `(DΦ)_ij` at `x`.
    fn deformation(&self, grid: &Grid, i: usize, j: usize, x: [f64; 3]) -> f64 {
        0.5 * (self.eval(grid, i, x).1[j] + self.eval(grid, j, x).1[i])
    }
}

/// `ψ = Σ amp · Π_a cos(k_a x_a)`, every term with some `k_a ≠ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScalar {
    pub terms: Vec<(f64, [u32; 3])>,
}

impl TestScalar {
    pub fn standard() -> Self {
        TestScalar { terms: vec![(1.0, [1, 1, 1]), (0.6, [2, 0, 0]), (0.3, [0, 3, 1])] }
    }

    pub fn constant(value: f64) -> Self {
        TestScalar { terms: vec![(value, [0, 0, 0])] }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let d = grid.dim();
        if self.terms.iter().any(|(a, k)| *a != 0.0 && k[..d].iter().all(|&v| v == 0)) {
            return Err(Error::InvalidArgument("test scalar must have zero mean".into()));
        }
        Ok(())
    }

    fn eval(&self, grid: &Grid, x: [f64; 3]) -> (f64, [f64; 3]) {
        let d = grid.dim();
        let mut val = 0.0;
        let mut grad = [0.0; 3];
        for (amp, k) in &self.terms {
            let f: Vec<(f64, f64)> = (0..d)
                .map(|a| {
                    let w = wavenumber(grid, a, k[a]);
                    ((w * x[a]).cos(), -w * (w * x[a]).sin())
                })
                .collect();
            val += amp * f.iter().map(|p| p.0).product::<f64>();
            for (j, gj) in grad.iter_mut().enumerate().take(d) {
                *gj += amp * f.iter().enumerate().map(|(a, p)| if a == j { p.1 } else { p.0 }).product::<f64>();
            }
        }
        (val, grad)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeakResidual {
    pub momentum: f64,
    pub pressure: f64,
    pub momentum_terms: [f64; 5],
    pub pressure_terms: [f64; 2],
}

impl WeakResidual {
    pub const COLUMNS: [&'static str; 9] = [
        "momentum",
        "pressure",
        "time_derivative",
        "nonlinear",
        "viscous",
        "pressure_gradient",
        "initial_data",
        "eps_pressure",
        "divergence",
    ];

    pub fn values(&self) -> Vec<String> {
        let mut v = vec![format!("{:e}", self.momentum), format!("{:e}", self.pressure)];
        v.extend(self.momentum_terms.iter().chain(&self.pressure_terms).map(|x| format!("{x:e}")));
        v
    }
}

/// Streaming weak residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakResidualObserver {
    pub field: TestVector,
    pub scalar: TestScalar,
    t_final: f64,
    acc: [Trapezoid; 6],
    initial: f64,
}

pub fn weak_residual_observer(field: TestVector, scalar: TestScalar) -> WeakResidualObserver {
    WeakResidualObserver { field, scalar, t_final: 0.0, acc: [Trapezoid::default(); 6], initial: 0.0 }
}

impl WeakResidualObserver {
    fn theta(&self, t: f64) -> (f64, f64) {
        if self.t_final <= 0.0 {
            return (1.0, 0.0);
        }
        let s = 1.0 - t / self.t_final;
        (s * s, -2.0 * s / self.t_final)
    }

    fn push(&mut self, state: &SimState, epsilon: f64, dt: f64) -> Result<()> {
        let u = &state.u;
        let grid = u.grid();
        let (th, dth) = self.theta(state.t);
        let phi = self.field.sample(grid);
        let up = inner_product(u, &phi)?;
        let nl = inner_product(&nonlinear_term(u), &phi)?;
        let s = strain(u);
        let mut visc = 0.0;
        for (i, row) in s.iter().enumerate() {
            for (j, sij) in row.iter().enumerate() {
                visc += integrate(grid, sij, |x, v| v * self.field.deformation(grid, i, j, x));
            }
        }
        let gp = gradient(&state.p);
        let pg = inner_product(&gp, &phi)?;
        let mut eps_p = 0.0;
        for (i, c) in gp.comps.iter().enumerate() {
            eps_p += epsilon * integrate(grid, c, |x, v| v * self.scalar.eval(grid, x).1[i]);
        }
        let div = integrate(grid, &divergence(u).values, |x, v| v * self.scalar.eval(grid, x).0);
        let vals = [-dth * up, th * nl, th * visc, th * pg, th * eps_p, th * div];
        for (a, v) in self.acc.iter_mut().zip(vals) {
            a.push(v, dt);
        }
        Ok(())
    }

    pub fn residual(&self) -> WeakResidual {
        let a = |k: usize| self.acc[k].value;
        let m = [a(0), a(1), a(2), a(3), self.initial];
        let mres = m[0] + m[1] + m[2] + m[3] - m[4];
        let mden: f64 = m.iter().map(|v| v.abs()).sum();
        let p = [a(4), a(5)];
        let pden = p[0].abs() + p[1].abs();
        WeakResidual {
            momentum: if mden > 0.0 { mres.abs() / mden } else { 0.0 },
            pressure: if pden > 0.0 { (p[0] + p[1]).abs() / pden } else { 0.0 },
            momentum_terms: m,
            pressure_terms: p,
        }
    }
}

impl Observer for WeakResidualObserver {
    fn initial(&mut self, stepper: &Stepper, state: &SimState) -> Result<()> {
        self.scalar.validate(stepper.grid())?;
        self.t_final = stepper.config.t_final;
        let phi = self.field.sample(stepper.grid());
        self.initial = self.theta(state.t).0 * inner_product(&state.u, &phi)?;
        self.push(state, stepper.config.epsilon, 0.0)
    }

    fn after_step(&mut self, stepper: &Stepper, _prev: &SimState, out: &StepOutput) -> Result<()> {
        self.push(&out.state, stepper.config.epsilon, out.dt)
    }
}

/// Weak residuals over a stored trajectory ending at `T`.
pub fn weak_residual(
    states: &[SimState],
    field: &TestVector,
    scalar: &TestScalar,
    epsilon: f64,
) -> Result<WeakResidual> {
    let first = states.first().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let grid = first.u.grid();
    scalar.validate(grid)?;
    let mut obs = weak_residual_observer(field.clone(), scalar.clone());
    obs.t_final = states.last().expect("nonempty").t;
    let phi = field.sample(grid);
    obs.initial = obs.theta(first.t).0 * inner_product(&first.u, &phi)?;
    let mut prev_t = first.t;
    for s in states {
        obs.push(s, epsilon, s.t - prev_t)?;
        prev_t = s.t;
    }
    Ok(obs.residual())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::{run, GridSpec, InitialCondition, SolverConfig};
    use std::sync::Arc;

    fn config(n: usize, t: f64, ic: InitialCondition) -> SolverConfig {
        let gs = GridSpec { dim: 2, n_cells: vec![n, n], lengths: vec![1.0, 1.0], axis_kinds: vec![AxisKind::Wall; 2] };
        let mut cfg = SolverConfig::new(gs, 1e-3, t);
        cfg.ic = ic;
        cfg
    }

    #[test]
    fn test_field_is_tangential_with_exact_gradient() {
        let g = Arc::new(Grid::new(2, &[16, 16], &[1.0, 2.0], &[AxisKind::Wall, AxisKind::Periodic]).unwrap());
        let phi = TestVector::standard().sample(&g);
        assert!(phi.max_wall_normal() < 1e-15);
        let tv = TestVector::standard();
        let x = [0.3, 0.7, 0.0];
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let fd = (tv.eval(&g, i, xp).0 - tv.eval(&g, i, xm).0) / (2.0 * h);
                assert!((fd - tv.eval(&g, i, x).1[j]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn constant_scalar_is_rejected() {
        let g = Grid::new(2, &[8, 8], &[1.0, 1.0], &[AxisKind::Wall; 2]).unwrap();
        assert!(TestScalar::constant(1.0).validate(&g).is_err());
        TestScalar::standard().validate(&g).unwrap();
        let mut obs = weak_residual_observer(TestVector::standard(), TestScalar::constant(2.0));
        assert!(run(&config(8, 0.001, InitialCondition::Zero), &mut [&mut obs]).is_err());
    }

    #[test]
    fn zero_trajectory_has_zero_residual() {
        let mut obs = weak_residual_observer(TestVector::standard(), TestScalar::standard());
        run(&config(16, 0.005, InitialCondition::Zero), &mut [&mut obs]).unwrap();
        let r = obs.residual();
        assert_eq!((r.momentum, r.pressure), (0.0, 0.0));
    }

    #[test]
    fn residual_shrinks_under_refinement() {
        let mut res = Vec::new();
        for n in [16, 32] {
            let mut obs = weak_residual_observer(TestVector::standard(), TestScalar::standard());
            run(&config(n, 0.01, InitialCondition::TaylorGreen { amplitude: 1.0 }), &mut [&mut obs]).unwrap();
            res.push(obs.residual());
        }
        assert!(res[1].momentum < res[0].momentum / 3.0, "{res:?}");
        assert!(res[1].pressure < res[0].pressure / 3.0, "{res:?}");
    }
}
