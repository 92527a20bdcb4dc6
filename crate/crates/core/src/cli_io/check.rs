//! Exact-identity invariant suite run by `acflow check`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diagnostics::{check_energy_identity, korn_ratio_of};
use crate::elliptic::EllipticSolver;
use crate::error::Result;
use crate::fields::{enforced, inner_product, lp_norm, ScalarField, VelocityField};
use crate::geometry::{AxisKind, Grid};
use crate::operators::{div_deformation, divergence, gradient, nonlinear_term_with, vector_laplacian};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    /// Worst measured defect (for Korn: the smallest ratio).
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: &str, trials: usize, measured: f64, threshold: f64) -> Self {
        CheckResult { name: name.into(), trials, measured, threshold, passed: measured <= threshold }
    }
}

const EXACT: f64 = 1e-12;

fn grids(n: usize) -> Vec<Arc<Grid>> {
    use AxisKind::{Periodic as P, Wall as W};
    let n3 = (n / 2).max(4);
    vec![
        Arc::new(Grid::new(2, &[n, n], &[1.0, 1.0], &[W, W]).expect("grid")),
        Arc::new(Grid::new(2, &[n, n + 2], &[1.0, 1.3], &[P, W]).expect("grid")),
        Arc::new(Grid::new(2, &[n, n], &[2.0, 1.0], &[P, P]).expect("grid")),
        Arc::new(Grid::new(3, &[n3, n3, n3], &[1.0, 1.0, 0.8], &[P, W, W]).expect("grid")),
    ]
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

fn random_scalar(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> ScalarField {
    let mut s = ScalarField::zeros(g);
    for v in s.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    s
}

/// Run every identity on `trials` random samples spread over periodic,
/// mixed, wall-bounded and 3D grids with `n` cells per axis.
/// `nl_correction` is the coefficient of the `u div u` term in the
/// advection operator (`-0.5` is the correct value).
pub fn check_suite(n: usize, trials: usize, nl_correction: f64, seed: u64) -> Result<Vec<CheckResult>> {
    let gs = grids(n.max(4));
    let solvers: Vec<EllipticSolver> = gs.iter().map(EllipticSolver::new).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 8];
    let mut korn = f64::INFINITY;
    for k in 0..trials {
        let gi = k % gs.len();
        let g = &gs[gi];
        let solver = &solvers[gi];
        let u = random_velocity(g, &mut rng);
        let s = random_scalar(g, &mut rng);

        let gs_u = inner_product(&gradient(&s), &u)?;
        let s_div = inner_product(&s, &divergence(&u))?;
        let scale =
            lp_norm(&gradient(&s), 2.0)? * lp_norm(&u, 2.0)? + lp_norm(&s, 2.0)? * lp_norm(&divergence(&u), 2.0)?;
        worst[0] = worst[0].max((gs_u + s_div).abs() / scale);

        let nl = nonlinear_term_with(&u, nl_correction);
        let skew = inner_product(&nl, &u)?.abs() / (lp_norm(&nl, 2.0)? * lp_norm(&u, 2.0)?);
        worst[1] = worst[1].max(skew);

        let lhs = div_deformation(&u);
        let mut rhs = vector_laplacian(&u);
        rhs.axpy(1.0, &gradient(&divergence(&u)));
        worst[2] = worst[2].max(lhs.sub(&rhs).max_abs() / lhs.max_abs().max(rhs.max_abs()));

        let h = solver.helmholtz(&u, EXACT * 1e-2)?;
        let pu = &h.solenoidal;
        let un = lp_norm(&u, 2.0)?;
        let again = solver.helmholtz(pu, EXACT * 1e-2)?.solenoidal;
        worst[3] = worst[3].max(lp_norm(&again.sub(pu), 2.0)? / un);
        let orth = inner_product(pu, &h.gradient_part)?.abs() / (lp_norm(pu, 2.0)? * lp_norm(&h.gradient_part, 2.0)?);
        worst[4] = worst[4].max(orth);

        for (slot, eps) in [(5, 1.0), (6, 1e-3)] {
            let p = solver.solve_pressure(&u, eps, EXACT * 1e-2)?;
            let mut d = p.clone();
            d.axpy(-1.0 / eps, &h.potential);
            worst[slot] = worst[slot].max(d.max_abs() / p.max_abs());
        }

        worst[7] = worst[7].max(check_energy_identity(&u));
        if let Some(r) = korn_ratio_of(&u) {
            if g.has_walls() {
                korn = korn.min(r);
            }
        }
    }
    let names = [
        "grad_div_adjointness",
        "nl_skew_symmetry",
        "div_deformation_identity",
        "helmholtz_idempotence",
        "helmholtz_orthogonality",
        "pressure_potential_eps_1",
        "pressure_potential_eps_1e-3",
        "deformation_energy_identity",
    ];
    let mut out: Vec<CheckResult> =
        names.iter().zip(worst).map(|(name, m)| CheckResult::at_most(name, trials, m, EXACT)).collect();
    out.push(CheckResult {
        name: "korn_ratio_walls".into(),
        trials,
        measured: korn,
        threshold: 0.0,
        passed: korn > 0.0 && korn.is_finite(),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_detects_corruption() {
        for n in [8, 16] {
            let r = check_suite(n, 12, -0.5, 1).unwrap();
            assert!(r.iter().all(|c| c.passed), "{r:?}");
        }
        let bad = check_suite(8, 8, 0.5, 1).unwrap();
        let skew = bad.iter().find(|c| c.name == "nl_skew_symmetry").unwrap();
        assert!(!skew.passed);
        assert!(bad.iter().filter(|c| !c.passed).count() == 1);
    }
}
