//! Measured counterparts of the energy estimates: the global energy ledger,
//! the deformation/gradient identity, Korn ratios, local energy slacks, the
//! pressure duality balance, weak-form residuals and ε-sweeps.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::{enforce_boundary, power_integral, ScalarField, Staggered, VelocityField};
use crate::geometry::Grid;
use crate::operators::{boundary_energy_term, deformation_energy, divergence, gradient, gradient_energy};
use crate::stepper::{Observer, SimState, StepOutput, Stepper};

mod lemma;
mod local;
mod sweep;
mod testfn;
mod weak;

pub use lemma::{PressureLemmaCheck, PressureLemmaReport};
pub use local::{local_energy_residual, LocalEnergyObserver, LocalEnergyReport};
pub use sweep::{sweep, SweepMember, SweepOptions, SweepReport};
pub use testfn::{standard_test_functions, Bump1D, BumpKind, TestFunction, TimeWindow};
pub use weak::{weak_residual, weak_residual_observer, TestScalar, TestVector, WeakResidual, WeakResidualObserver};

/// Quadrature of `f(x, v)` over the points of a staggered array.
pub(crate) fn integrate(grid: &Grid, s: &Staggered, f: impl Fn([f64; 3], f64) -> f64) -> f64 {
    let w = grid.weights(s.loc);
    let sh = s.shape;
    let coords: Vec<Vec<f64>> = (0..3)
        .map(|a| (0..sh[a]).map(|k| if a < grid.dim() { grid.coord(s.loc, a, k) } else { 0.0 }).collect())
        .collect();
    let mut acc = 0.0;
    let mut idx = 0;
    for i in 0..sh[0] {
        for j in 0..sh[1] {
            for k in 0..sh[2] {
                acc += w[idx] * f([coords[0][i], coords[1][j], coords[2][k]], s.data[idx]);
                idx += 1;
            }
        }
    }
    acc
}

/// Running trapezoid-rule integral over possibly nonuniform steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Trapezoid {
    pub value: f64,
    pub last: Option<f64>,
}

impl Trapezoid {
    pub fn push(&mut self, integrand: f64, dt: f64) {
        if let Some(prev) = self.last {
            self.value += 0.5 * dt * (prev + integrand);
        }
        self.last = Some(integrand);
    }
}

/// `ε‖∇p‖²`.
pub fn pressure_dissipation(p: &ScalarField, epsilon: f64) -> f64 {
    epsilon * power_integral(&gradient(p), 2.0)
}

/// `|2‖Du‖² − ‖∇u‖² − ‖div u‖² + ∫_Γ u·∇n·u| / max(1, ‖∇u‖²)`.
pub fn check_energy_identity(u: &VelocityField) -> f64 {
    let grad = gradient_energy(u);
    let div = power_integral(&divergence(u), 2.0);
    let defect = deformation_energy(u) - grad - div + boundary_energy_term(u);
    defect.abs() / grad.max(1.0)
}

/// Minimum of `2‖Dv‖²/‖∇v‖²` over random boundary-enforced samples.
/// Samples with `‖∇v‖ = 0` are skipped; `None` if every sample was.
pub fn korn_ratio(grid: &Arc<Grid>, n_samples: usize, seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<f64> = None;
    for _ in 0..n_samples {
        let mut v = VelocityField::zeros(grid);
        for c in &mut v.comps {
            for x in &mut c.data {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        enforce_boundary(&mut v);
        if let Some(r) = korn_ratio_of(&v) {
            best = Some(best.map_or(r, |b: f64| b.min(r)));
        }
    }
    best
}

pub fn korn_ratio_of(v: &VelocityField) -> Option<f64> {
    let g = gradient_energy(v);
    if g == 0.0 {
        None
    } else {
        Some(deformation_energy(v) / g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub step: u64,
    pub t: f64,
    pub kinetic: f64,
    pub dissipation_d: f64,
    pub dissipation_grad: f64,
    pub pressure_dissipation: f64,
    pub boundary_term: f64,
    pub cum_dissipation_d: f64,
    pub cum_pressure_dissipation: f64,
    pub residual: f64,
    pub constraint_residual: f64,
}

impl LedgerRow {
    pub const COLUMNS: [&'static str; 11] = [
        "step",
        "t",
        "kinetic",
        "dissipation_D",
        "dissipation_grad",
        "pressure_dissipation",
        "boundary_term",
        "cum_dissipation_D",
        "cum_pressure_dissipation",
        "residual",
        "constraint_residual",
    ];

    pub fn values(&self) -> Vec<String> {
        let f = |x: f64| format!("{x:e}");
        vec![
            self.step.to_string(),
            f(self.t),
            f(self.kinetic),
            f(self.dissipation_d),
            f(self.dissipation_grad),
            f(self.pressure_dissipation),
            f(self.boundary_term),
            f(self.cum_dissipation_d),
            f(self.cum_pressure_dissipation),
            f(self.residual),
            f(self.constraint_residual),
        ]
    }
}

/// Global energy bookkeeping. Time integrals use the trapezoid rule over
/// every accepted step; rows are kept every `sample_every` steps and at the
/// final time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub sample_every: u64,
    pub initial_kinetic: f64,
    pub cum_d: Trapezoid,
    pub cum_p: Trapezoid,
    pub rows: Vec<LedgerRow>,
    pub min_residual: f64,
    /// Largest relative mismatch between the two dissipation forms.
    pub max_identity_defect: f64,
    pub max_boundary_term: f64,
}

impl EnergyLedger {
    pub fn new(sample_every: u64) -> Self {
        EnergyLedger {
            sample_every: sample_every.max(1),
            initial_kinetic: 0.0,
            cum_d: Trapezoid::default(),
            cum_p: Trapezoid::default(),
            rows: Vec::new(),
            min_residual: f64::INFINITY,
            max_identity_defect: 0.0,
            max_boundary_term: 0.0,
        }
    }

    /// Append one sample at `state` after a step of size `dt` (0 initially).
    pub fn record_energy(&mut self, state: &SimState, epsilon: f64, dt: f64, constraint_residual: f64, keep_row: bool) {
        let u = &state.u;
        let kinetic = u.kinetic_energy();
        if state.step == 0 && self.cum_d.last.is_none() {
            self.initial_kinetic = kinetic;
        }
        let dissipation_d = deformation_energy(u);
        let dissipation_grad = gradient_energy(u) + power_integral(&divergence(u), 2.0);
        let pd = pressure_dissipation(&state.p, epsilon);
        let boundary_term = boundary_energy_term(u);
        self.cum_d.push(dissipation_d, dt);
        self.cum_p.push(pd, dt);
        let residual = self.initial_kinetic - (kinetic + self.cum_d.value + self.cum_p.value);
        self.min_residual = self.min_residual.min(residual);
        let defect = (dissipation_d - dissipation_grad + boundary_term).abs() / dissipation_grad.max(f64::MIN_POSITIVE);
        if dissipation_grad > 0.0 {
            self.max_identity_defect = self.max_identity_defect.max(defect);
        }
        self.max_boundary_term = self.max_boundary_term.max(boundary_term.abs());
        if keep_row {
            self.rows.push(LedgerRow {
                step: state.step,
                t: state.t,
                kinetic,
                dissipation_d,
                dissipation_grad,
                pressure_dissipation: pd,
                boundary_term,
                cum_dissipation_d: self.cum_d.value,
                cum_pressure_dissipation: self.cum_p.value,
                residual,
                constraint_residual,
            });
        }
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.rows.last().map(|r| r.residual)
    }
}

impl Observer for EnergyLedger {
    fn initial(&mut self, stepper: &Stepper, state: &SimState) -> Result<()> {
        self.record_energy(state, stepper.config.epsilon, 0.0, 0.0, true);
        Ok(())
    }

    fn after_step(&mut self, stepper: &Stepper, _prev: &SimState, out: &StepOutput) -> Result<()> {
        let s = &out.state;
        let keep = s.step.is_multiple_of(self.sample_every) || s.t >= stepper.config.t_final;
        self.record_energy(s, stepper.config.epsilon, out.dt, out.constraint_residual, keep);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::enforced;
    use crate::geometry::{AxisKind, Location};
    use crate::stepper::{run, GridSpec, InitialCondition, SolverConfig};
    use std::f64::consts::PI;

    fn grid(n: usize, kinds: [AxisKind; 2]) -> Arc<Grid> {
        Arc::new(Grid::new(2, &[n, n], &[1.0, 1.0], &kinds).unwrap())
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let mut t = Trapezoid::default();
        for k in 0..=10 {
            t.push(k as f64 * 0.1, 0.1);
        }
        assert!((t.value - 0.5).abs() < 1e-14);
    }

    #[test]
    fn integrate_matches_power_sum() {
        let g = grid(8, [AxisKind::Wall, AxisKind::Periodic]);
        let s = Staggered::from_fn(&g, Location::Face(0), |x| x[0] + x[1]);
        let a = integrate(&g, &s, |_, v| v * v);
        assert!((a - s.power_sum(&g, 2.0)).abs() < 1e-14);
        let b = integrate(&g, &s, |x, _| x[0]);
        assert!((b - 0.5).abs() < 1e-14);
    }

    #[test]
    fn energy_identity_examples() {
        let g = grid(16, [AxisKind::Wall, AxisKind::Wall]);
        let c = enforced(VelocityField::from_fn(&g, |_| [0.0, 1.0, 0.0]));
        assert_eq!(check_energy_identity(&c), 0.0);
        let gy = grid(16, [AxisKind::Periodic, AxisKind::Wall]);
        let shear = enforced(VelocityField::from_fn(&gy, |x| [x[1], 0.0, 0.0]));
        assert!(check_energy_identity(&shear) < 1e-12);
        assert!((korn_ratio_of(&shear).unwrap() - 1.0).abs() < 1e-12);
        let smooth = enforced(VelocityField::from_fn(&g, |x| {
            [(PI * x[0]).sin() * (2.0 * x[1]).exp(), x[0] * x[0] * (PI * x[1]).sin(), 0.0]
        }));
        assert!(check_energy_identity(&smooth) < 1e-12);
    }

    #[test]
    fn korn_ratio_is_bounded_below_on_boxes() {
        let g = grid(8, [AxisKind::Wall, AxisKind::Wall]);
        let r = korn_ratio(&g, 20, 1).unwrap();
        assert!(r >= 1.0 - 1e-12);
        assert_eq!(korn_ratio(&g, 20, 1), Some(r));
        let zero_grad = VelocityField::zeros(&g);
        assert_eq!(korn_ratio_of(&zero_grad), None);
    }

    #[test]
    fn zero_trajectory_ledger() {
        let gs = GridSpec { dim: 2, n_cells: vec![8, 8], lengths: vec![1.0, 1.0], axis_kinds: vec![AxisKind::Wall; 2] };
        let mut cfg = SolverConfig::new(gs, 1e-2, 0.01);
        cfg.ic = InitialCondition::Zero;
        let mut ledger = EnergyLedger::new(1);
        run(&cfg, &mut [&mut ledger]).unwrap();
        assert!(ledger.rows.len() > 2);
        for r in &ledger.rows {
            assert_eq!(r.values().iter().skip(2).filter(|v| v.as_str() != "0e0").count(), 0, "{r:?}");
        }
    }

    #[test]
    fn ledger_on_taylor_green() {
        let gs =
            GridSpec { dim: 2, n_cells: vec![16, 16], lengths: vec![1.0, 1.0], axis_kinds: vec![AxisKind::Wall; 2] };
        let mut cfg = SolverConfig::new(gs, 1e-2, 0.01);
        cfg.ic = InitialCondition::TaylorGreen { amplitude: 1.0 };
        let mut ledger = EnergyLedger::new(5);
        let s = run(&cfg, &mut [&mut ledger]).unwrap();
        let last = ledger.rows.last().unwrap();
        assert_eq!(last.step, s.step);
        assert!(ledger.max_identity_defect < 1e-12);
        assert_eq!(ledger.max_boundary_term, 0.0);
        assert!(last.residual.abs() < 1e-4 * ledger.initial_kinetic);
        for w in ledger.rows.windows(2) {
            assert!(w[1].cum_dissipation_d >= w[0].cum_dissipation_d);
            assert!(w[1].cum_pressure_dissipation >= w[0].cum_pressure_dissipation);
        }
    }
}
