//! Time integration of the artificial-compressibility system.
//!
//! Each stage does an explicit (or Crank–Nicolson) predictor for advection
//! and diffusion, followed by the coupled pressure update
//! `Δp' = div u*/(ε+τ)`, `u' = u* − τ∇p'`. That update is the backward-Euler
//! solution of the pressure coupling, so `−εΔp' + div u' = 0` holds
//! algebraically and the step size does not depend on ε.

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elliptic::{ComponentSolver, EllipticSolver};
use crate::error::{Error, Result};
use crate::fields::{enforce_boundary, lp_norm, ScalarField, VelocityField};
use crate::geometry::{AxisKind, Grid};
use crate::operators::{div_deformation, divergence, gradient, laplacian, nonlinear_term, vector_laplacian};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffusionMode {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    Fixed(f64),
    Cfl(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub n_cells: Vec<usize>,
    pub lengths: Vec<f64>,
    pub axis_kinds: Vec<AxisKind>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, &self.n_cells, &self.lengths, &self.axis_kinds)
    }

    pub fn from_grid(grid: &Grid) -> Self {
        GridSpec {
            dim: grid.dim(),
            n_cells: grid.n_cells()[..grid.dim()].to_vec(),
            lengths: grid.lengths()[..grid.dim()].to_vec(),
            axis_kinds: grid.kinds()[..grid.dim()].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "selector", rename_all = "snake_case")]
pub enum InitialCondition {
    TaylorGreen { amplitude: f64 },
    SolenoidalRandom { seed: u64, band: usize, amplitude: f64 },
    Zero,
    FromFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: GridSpec,
    pub epsilon: f64,
    pub t_final: f64,
    pub dt: DtPolicy,
    pub diffusion: DiffusionMode,
    pub elliptic_tol: f64,
    pub ic: InitialCondition,
}

impl SolverConfig {
    pub fn new(grid: GridSpec, epsilon: f64, t_final: f64) -> Self {
        SolverConfig {
            grid,
            epsilon,
            t_final,
            dt: DtPolicy::Cfl(0.5),
            diffusion: DiffusionMode::Explicit,
            elliptic_tol: crate::elliptic::DEFAULT_TOL,
            ic: InitialCondition::TaylorGreen { amplitude: 1.0 },
        }
    }

    /// All violated invariants, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.epsilon > 0.0) {
            v.push("epsilon must be > 0".to_string());
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            v.push("T must be >= 0".to_string());
        }
        match self.dt {
            DtPolicy::Fixed(dt) if !(dt > 0.0) => v.push("dt must be > 0".to_string()),
            DtPolicy::Cfl(s) if !(s > 0.0 && s <= 1.0) => v.push("cfl_safety must be in (0, 1]".to_string()),
            _ => {}
        }
        if !(self.elliptic_tol > 0.0) {
            v.push("elliptic_tol must be > 0".to_string());
        }
        if let Err(e) = self.grid.build() {
            v.push(e.to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub step: u64,
    pub u: VelocityField,
    pub p: ScalarField,
}

/// Result of one step: the new state, the midpoint-stage velocity and the
/// step size actually taken.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: SimState,
    pub stage: VelocityField,
    pub dt: f64,
    pub constraint_residual: f64,
}

fn rigid_profile(kind: AxisKind, length: f64, x: f64, odd: bool) -> f64 {
    let k = match kind {
        AxisKind::Wall => std::f64::consts::PI / length,
        AxisKind::Periodic => 2.0 * std::f64::consts::PI / length,
    };
    if odd {
        (k * x).sin()
    } else {
        (k * x).cos()
    }
}

fn taylor_green(grid: &Arc<Grid>, amplitude: f64) -> VelocityField {
    let g = grid.clone();
    VelocityField::from_fn(grid, move |x| {
        let f = |axis: usize, odd: bool| rigid_profile(g.kind(axis), g.length(axis), x[axis], odd);
        let mut u = [amplitude * f(0, true) * f(1, false), -amplitude * f(0, false) * f(1, true), 0.0];
        if g.dim() == 3 {
            let cz = f(2, false);
            u[0] *= cz;
            u[1] *= cz;
        }
        u
    })
}

fn solenoidal_random(grid: &Arc<Grid>, seed: u64, band: usize) -> VelocityField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let band = band.max(1) as i64;
    // mode list in a fixed order so the draw sequence is reproducible
    let mut modes = Vec::new();
    let r = |a: usize| if a < dim { 0..=band } else { 0..=0 };
    for a in r(0) {
        for b in r(1) {
            for c in r(2) {
                let k = [a, b, c];
                let n2: i64 = k.iter().map(|v| v * v).sum();
                if n2 >= 1 && n2 <= band * band {
                    modes.push(k);
                }
            }
        }
    }
    let mut coeffs = Vec::new();
    for _ in &modes {
        let mut c = [[0.0; 2]; 3];
        for comp in c.iter_mut().take(dim) {
            comp[0] = rng.gen_range(-1.0..1.0);
            comp[1] = rng.gen_range(-1.0..1.0);
        }
        coeffs.push(c);
    }
    let g = grid.clone();
    VelocityField::from_fn(grid, move |x| {
        let mut u = [0.0; 3];
        for (k, c) in modes.iter().zip(&coeffs) {
            let decay = 1.0 / (1.0 + (k.iter().map(|v| v * v).sum::<i64>() as f64));
            for (i, ui) in u.iter_mut().enumerate().take(dim) {
                for (phase, amp) in c[i].iter().enumerate() {
                    let mut v = amp * decay;
                    for a in 0..dim {
                        let kk = k[a] as f64;
                        let l = g.length(a);
                        v *= match g.kind(a) {
                            AxisKind::Wall if a == i => (kk * std::f64::consts::PI * x[a] / l).sin(),
                            AxisKind::Wall => (kk * std::f64::consts::PI * x[a] / l).cos(),
                            AxisKind::Periodic => {
                                let th = 2.0 * kk * std::f64::consts::PI * x[a] / l;
                                if (phase + a) % 2 == 0 {
                                    th.cos()
                                } else {
                                    th.sin()
                                }
                            }
                        };
                    }
                    *ui += v;
                }
            }
        }
        u
    })
}

/// Discretely divergence-free, boundary-enforced initial velocity.
pub fn initial_condition(ic: &InitialCondition, grid: &Arc<Grid>, tol: f64) -> Result<VelocityField> {
    let mut u = match ic {
        InitialCondition::Zero => return Ok(VelocityField::zeros(grid)),
        InitialCondition::TaylorGreen { amplitude } => taylor_green(grid, *amplitude),
        InitialCondition::SolenoidalRandom { seed, band, .. } => solenoidal_random(grid, *seed, *band),
        InitialCondition::FromFile { path } => crate::cli_io::read_snapshot(path, grid)?.u,
    };
    enforce_boundary(&mut u);
    let mut u = EllipticSolver::new(grid).helmholtz(&u, tol)?.solenoidal;
    if let InitialCondition::SolenoidalRandom { amplitude, .. } = ic {
        let m = u.max_abs();
        if m > 0.0 {
            u.scale(amplitude / m);
        }
    }
    Ok(u)
}

const TINY: f64 = 1e-300;

/// `σ·min(h²/(4·dim) [explicit diffusion only], h/(max|u| + tiny))`.
pub fn stable_dt(u: &VelocityField, safety: f64, diffusion: DiffusionMode) -> f64 {
    let grid = u.grid();
    let h = grid.min_h();
    let adv = h / (u.max_abs() + TINY);
    let bound = match diffusion {
        DiffusionMode::Explicit => adv.min(h * h / (4.0 * grid.dim() as f64)),
        DiffusionMode::Implicit => adv,
    };
    safety * bound
}

/// Precomputed solvers for one configuration.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub config: SolverConfig,
    grid: Arc<Grid>,
    elliptic: EllipticSolver,
    components: Vec<ComponentSolver>,
}

impl Stepper {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let grid = Arc::new(config.grid.build()?);
        Ok(Self::with_grid(config, grid))
    }

    /// Internal constructor that skips validation; the oracle tests use it
    /// with ε = 0, which the public configuration rejects.
    pub(crate) fn with_grid(config: SolverConfig, grid: Arc<Grid>) -> Self {
        let components = match config.diffusion {
            DiffusionMode::Implicit => (0..grid.dim()).map(|i| ComponentSolver::new(&grid, i)).collect(),
            DiffusionMode::Explicit => Vec::new(),
        };
        Stepper { elliptic: EllipticSolver::new(&grid), config, grid, components }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn elliptic(&self) -> &EllipticSolver {
        &self.elliptic
    }

    pub fn initial_state(&self) -> Result<SimState> {
        let u = initial_condition(&self.config.ic, &self.grid, self.config.elliptic_tol)?;
        self.state_from_velocity(u, 0.0, 0)
    }

    /// Pairs `u` with its pressure `p = (εΔ)⁻¹ div u`.
    pub fn state_from_velocity(&self, u: VelocityField, t: f64, step: u64) -> Result<SimState> {
        let p = self.elliptic.solve_pressure(&u, self.config.epsilon, self.config.elliptic_tol)?;
        Ok(SimState { t, step, u, p })
    }

    pub fn stable_dt(&self, state: &SimState) -> f64 {
        match self.config.dt {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Cfl(s) => stable_dt(&state.u, s, self.config.diffusion),
        }
    }

    /// Coupled pressure update with step `tau`: returns `(u', p')`.
    fn pressure_update(&self, ustar: &VelocityField, tau: f64) -> Result<(VelocityField, ScalarField)> {
        let eps = self.config.epsilon;
        let div = divergence(ustar);
        match self.config.diffusion {
            DiffusionMode::Explicit => {
                let rhs = div.scaled(1.0 / (eps + tau));
                let p = self.elliptic.solve_neumann_poisson(&rhs, self.config.elliptic_tol)?.field;
                let mut u = ustar.clone();
                u.axpy(-tau, &gradient(&p));
                enforce_boundary(&mut u);
                Ok((u, p))
            }
            DiffusionMode::Implicit => {
                // grad-div folded in: ((ε+τ)Δ − ετΔ²) p' = div u*
                let p = self.elliptic.solve_symbol(&div, |lam| (eps + tau) * lam - eps * tau * lam * lam);
                let mut u = ustar.clone();
                u.axpy(-tau, &gradient(&p));
                u.axpy(eps * tau, &gradient(&laplacian(&p)));
                enforce_boundary(&mut u);
                Ok((u, p))
            }
        }
    }

    /// Explicit forcing `2 div D u − nl(u)` (explicit mode) or `−nl(u)` plus
    /// the explicit half of Crank–Nicolson (implicit mode).
    fn predictor(&self, base: &VelocityField, eval: &VelocityField, tau: f64, cn_weight: f64) -> VelocityField {
        let mut out = base.clone();
        match self.config.diffusion {
            DiffusionMode::Explicit => {
                out.axpy(tau, &div_deformation(eval));
                out.axpy(-tau, &nonlinear_term(eval));
            }
            DiffusionMode::Implicit => {
                out.axpy(-tau, &nonlinear_term(eval));
                if cn_weight > 0.0 {
                    out.axpy(cn_weight * tau, &vector_laplacian(base));
                }
                let c = (1.0 - cn_weight) * tau;
                for (i, s) in self.components.iter().enumerate() {
                    out.comps[i].data = s.solve_helmholtz(&out.comps[i].data, c);
                }
            }
        }
        enforce_boundary(&mut out);
        out
    }

    /// One two-stage midpoint step of size `dt`.
    pub fn step(&self, state: &SimState, dt: f64) -> Result<StepOutput> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        let next_step = state.step + 1;
        if !state.u.is_finite() || !state.p.is_finite() {
            return Err(Error::NonFinite { step: next_step });
        }
        let u = &state.u;
        // stage 1: backward-Euler diffusion on the half step in implicit mode
        let a = self.predictor(u, u, 0.5 * dt, 0.0);
        let (half, _) = self.pressure_update(&a, 0.5 * dt)?;
        // stage 2: midpoint forcing, Crank–Nicolson diffusion
        let b = self.predictor(u, &half, dt, 0.5);
        let (unew, pnew) = self.pressure_update(&b, dt)?;
        if !unew.is_finite() || !pnew.is_finite() || !half.is_finite() {
            return Err(Error::NonFinite { step: next_step });
        }
        let mut res = laplacian(&pnew).scaled(-self.config.epsilon);
        res.axpy(1.0, &divergence(&unew));
        let residual = lp_norm(&res, 2.0)?;
        let scale = lp_norm(&divergence(&b), 2.0)?;
        let tol = self.config.elliptic_tol;
        if residual > tol * scale + 1e-14 * (1.0 + scale) {
            return Err(Error::Constraint { step: next_step, residual, tol });
        }
        Ok(StepOutput {
            state: SimState { t: state.t + dt, step: next_step, u: unew, p: pnew },
            stage: half,
            dt,
            constraint_residual: residual,
        })
    }
}

/// Hooks invoked synchronously on the stepping thread.
pub trait Observer {
    fn initial(&mut self, _stepper: &Stepper, _state: &SimState) -> Result<()> {
        Ok(())
    }
    fn after_step(&mut self, _stepper: &Stepper, _prev: &SimState, _out: &StepOutput) -> Result<()> {
        Ok(())
    }
    fn finish(&mut self, _stepper: &Stepper, _state: &SimState) -> Result<()> {
        Ok(())
    }
}

/// Relative slack below which the remaining interval counts as reached.
const END_SLACK: f64 = 1e-12;

/// Advance from `state` to `t_final`, clipping the last step to land on it.
pub fn run_from(stepper: &Stepper, mut state: SimState, observers: &mut [&mut dyn Observer]) -> Result<SimState> {
    let t_final = stepper.config.t_final;
    while t_final - state.t > END_SLACK * t_final.max(1.0) {
        let mut dt = stepper.stable_dt(&state);
        if state.t + dt > t_final {
            dt = t_final - state.t;
        }
        let mut out = stepper.step(&state, dt)?;
        if t_final - out.state.t <= END_SLACK * t_final.max(1.0) {
            out.state.t = t_final;
        }
        for o in observers.iter_mut() {
            o.after_step(stepper, &state, &out)?;
        }
        state = out.state;
    }
    for o in observers.iter_mut() {
        o.finish(stepper, &state)?;
    }
    Ok(state)
}

/// Build the initial state, notify observers and advance to `T`.
pub fn run(config: &SolverConfig, observers: &mut [&mut dyn Observer]) -> Result<SimState> {
    let stepper = Stepper::new(config.clone())?;
    let state = stepper.initial_state()?;
    for o in observers.iter_mut() {
        o.initial(&stepper, &state)?;
    }
    run_from(&stepper, state, observers)
}
