//! Structural invariants checked on random grids and random fields.

use std::sync::Arc;

use acflow::diagnostics::{standard_test_functions, Trapezoid};
use acflow::elliptic::EllipticSolver;
use acflow::fields::{enforce_boundary, enforced, inner_product, lp_norm, ScalarField, VelocityField};
use acflow::geometry::{boundary_faces, AxisKind, Grid, Location};
use acflow::operators::{deformation, div_deformation, divergence, gradient, nonlinear_term, vector_laplacian};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kind(wall: bool) -> AxisKind {
    if wall {
        AxisKind::Wall
    } else {
        AxisKind::Periodic
    }
}

prop_compose! {
    fn any_grid()(dim in 2usize..=3, n in prop::array::uniform3(4usize..=9), l in prop::array::uniform3(0.5f64..2.0),
                  w in prop::array::uniform3(any::<bool>())) -> Arc<Grid> {
        let n: Vec<usize> = n.iter().take(dim).map(|&k| if dim == 3 { k.min(6) } else { k }).collect();
        let kinds: Vec<AxisKind> = w.iter().take(dim).map(|&b| kind(b)).collect();
        Arc::new(Grid::new(dim, &n, &l[..dim], &kinds).unwrap())
    }
}

fn random_velocity(g: &Arc<Grid>, seed: u64) -> VelocityField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = VelocityField::zeros(g);
    for c in &mut u.comps {
        for v in &mut c.data {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    enforced(u)
}

fn random_scalar(g: &Arc<Grid>, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut s = ScalarField::zeros(g);
    for v in s.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    s
}

fn locations(g: &Grid) -> Vec<Location> {
    let mut locs = vec![Location::Cell];
    locs.extend((0..g.dim()).map(Location::Face));
    locs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quadrature_weights_sum_to_volume(g in any_grid()) {
        for loc in locations(&g) {
            let total: f64 = g.weights(loc).iter().sum();
            prop_assert!((total - g.volume()).abs() <= 1e-12 * g.volume(), "{loc:?}: {total}");
        }
    }

    #[test]
    fn wall_normals_point_outward(g in any_grid()) {
        for f in boundary_faces(&g) {
            let a = f.axis;
            prop_assert_eq!(f.index[a], if f.high { g.n(a) } else { 0 });
            let inward = f.index[a] as i64 - f.frame.normal[a] as i64;
            prop_assert!((0..=g.n(a) as i64).contains(&inward));
            prop_assert_eq!(f.frame.normal.iter().map(|v| v * v).sum::<f64>(), 1.0);
            for t in &f.frame.tangents {
                prop_assert_eq!(t.iter().zip(&f.frame.normal).map(|(x, y)| x * y).sum::<f64>(), 0.0);
            }
        }
    }

    #[test]
    fn boundary_enforcement_is_idempotent(g in any_grid(), seed in any::<u64>()) {
        let u = random_velocity(&g, seed);
        let mut v = u.clone();
        enforce_boundary(&mut v);
        prop_assert_eq!(u.comps, v.comps);
    }

    #[test]
    fn gradient_and_divergence_are_adjoint(g in any_grid(), seed in any::<u64>()) {
        let u = random_velocity(&g, seed);
        let s = random_scalar(&g, seed);
        let a = inner_product(&gradient(&s), &u).unwrap();
        let b = inner_product(&s, &divergence(&u)).unwrap();
        let scale = lp_norm(&gradient(&s), 2.0).unwrap() * lp_norm(&u, 2.0).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * scale);
    }

    #[test]
    fn advection_produces_no_energy(g in any_grid(), seed in any::<u64>()) {
        let u = random_velocity(&g, seed);
        let nl = nonlinear_term(&u);
        let e = inner_product(&nl, &u).unwrap();
        prop_assert!(e.abs() <= 1e-12 * lp_norm(&nl, 2.0).unwrap() * lp_norm(&u, 2.0).unwrap());
    }

    #[test]
    fn deformation_divergence_splits(g in any_grid(), seed in any::<u64>()) {
        let u = random_velocity(&g, seed);
        let lhs = div_deformation(&u);
        let mut rhs = vector_laplacian(&u);
        rhs.axpy(1.0, &gradient(&divergence(&u)));
        prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * lhs.max_abs().max(rhs.max_abs()));
    }

    #[test]
    fn deformation_is_symmetric(g in any_grid(), seed in any::<u64>()) {
        let d = deformation(&random_velocity(&g, seed));
        for i in 0..g.dim() {
            for j in 0..g.dim() {
                prop_assert_eq!(&d.get(i, j).data, &d.get(j, i).data);
            }
        }
    }

    #[test]
    fn helmholtz_projection_and_pressure(g in any_grid(), seed in any::<u64>(), eps in 1e-4f64..10.0) {
        let solver = EllipticSolver::new(&g);
        let u = random_velocity(&g, seed);
        let h = solver.helmholtz(&u, 1e-13).unwrap();
        let n = lp_norm(&u, 2.0).unwrap();
        let again = solver.helmholtz(&h.solenoidal, 1e-13).unwrap().solenoidal;
        prop_assert!(lp_norm(&again.sub(&h.solenoidal), 2.0).unwrap() <= 1e-10 * n);
        prop_assert!(inner_product(&h.solenoidal, &h.gradient_part).unwrap().abs() <= 1e-10 * n * n);
        let p = solver.solve_pressure(&u, eps, 1e-13).unwrap();
        let mut d = p.clone();
        d.axpy(-1.0 / eps, &h.potential);
        let q = lp_norm(&h.potential, 2.0).unwrap();
        prop_assert!(lp_norm(&d, 2.0).unwrap() <= 1e-10 * q / eps);
        prop_assert!(p.mean().abs() <= 1e-12 * p.max_abs().max(1e-300));
    }

    #[test]
    fn test_functions_are_nonnegative_and_vanish_outside(x in prop::array::uniform3(0.0f64..1.0), s in 0.0f64..1.0,
                                                      lx in 0.5f64..2.0, ly in 0.5f64..2.0, tf in 0.01f64..1.0) {
        let x = [x[0] * lx, x[1] * ly, 0.0];
        for phi in standard_test_functions(&[lx, ly], tf) {
            prop_assert!(phi.value(x, s * tf) >= 0.0);
            for edge in [0.0, tf] {
                prop_assert_eq!(phi.value(x, edge), 0.0);
            }
            for b in [[0.0, x[1], 0.0], [lx, x[1], 0.0], [x[0], 0.0, 0.0], [x[0], ly, 0.0]] {
                prop_assert_eq!(phi.value(b, s * tf), 0.0);
                prop_assert_eq!(phi.grad(b, s * tf), [0.0; 3]);
            }
        }
    }

    #[test]
    fn cumulative_integrals_never_decrease(v in prop::collection::vec((0.0f64..10.0, 1e-6f64..1.0), 1..50)) {
        let mut acc = Trapezoid::default();
        let mut prev = 0.0;
        for (f, dt) in v {
            acc.push(f, dt);
            prop_assert!(acc.value >= prev);
            prev = acc.value;
        }
    }
}
