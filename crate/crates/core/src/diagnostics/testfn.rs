//! Nonnegative, compactly supported test functions with closed-form
//! derivatives, built as products of one-dimensional bumps.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisKind, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BumpKind {
    /// `((x−a)(b−x))^m`, normalized to a unit peak.
    Poly { power: u32 },
    /// `sin^m(π(x−a)/(b−a))` on `[a, b]`.
    SinPow { power: u32 },
    /// Constant 1 (no localization along this axis).
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump1D {
    pub kind: BumpKind,
    pub a: f64,
    pub b: f64,
}

impl Bump1D {
    pub fn poly(power: u32, a: f64, b: f64) -> Self {
        Bump1D { kind: BumpKind::Poly { power }, a, b }
    }

    pub fn sin_pow(power: u32, a: f64, b: f64) -> Self {
        Bump1D { kind: BumpKind::SinPow { power }, a, b }
    }

    pub fn one() -> Self {
        Bump1D { kind: BumpKind::One, a: f64::NEG_INFINITY, b: f64::INFINITY }
    }

    /// Value, first and second derivative.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        if let BumpKind::One = self.kind {
            return [1.0, 0.0, 0.0];
        }
        if x <= self.a || x >= self.b {
            return [0.0; 3];
        }
        match self.kind {
            BumpKind::Poly { power } => {
                let m = power as i32;
                let half = 0.5 * (self.b - self.a);
                let c = half.powi(-2 * m);
                let q = (x - self.a) * (self.b - x);
                let dq = self.a + self.b - 2.0 * x;
                let mf = m as f64;
                let f = c * q.powi(m);
                let f1 = c * mf * q.powi(m - 1) * dq;
                let f2 = c * mf * ((mf - 1.0) * q.powi(m - 2) * dq * dq - 2.0 * q.powi(m - 1));
                [f, f1, f2]
            }
            BumpKind::SinPow { power } => {
                let m = power as i32;
                let mf = m as f64;
                let k = PI / (self.b - self.a);
                let s = (k * (x - self.a)).sin();
                let c = (k * (x - self.a)).cos();
                let f = s.powi(m);
                let f1 = mf * k * s.powi(m - 1) * c;
                let f2 = mf * k * k * ((mf - 1.0) * s.powi(m - 2) * c * c - s.powi(m));
                [f, f1, f2]
            }
            BumpKind::One => unreachable!(),
        }
    }
}

pub type TimeWindow = Bump1D;

/// `φ(x, t) = θ(t) Π_a b_a(x_a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub space: Vec<Bump1D>,
    pub time: TimeWindow,
    #[serde(default = "unit")]
    pub scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl TestFunction {
    fn theta(&self, t: f64) -> [f64; 3] {
        self.time.eval(t).map(|v| v * self.scale)
    }

    fn factors(&self, x: [f64; 3]) -> Vec<[f64; 3]> {
        self.space.iter().enumerate().map(|(a, b)| b.eval(x[a])).collect()
    }

    pub fn value(&self, x: [f64; 3], t: f64) -> f64 {
        self.theta(t)[0] * self.factors(x).iter().map(|f| f[0]).product::<f64>()
    }

    pub(crate) fn value_at_time_is_zero(&self, t: f64) -> bool {
        let th = self.theta(t);
        th[0] == 0.0 && th[1] == 0.0
    }

    pub fn dt(&self, x: [f64; 3], t: f64) -> f64 {
        self.theta(t)[1] * self.factors(x).iter().map(|f| f[0]).product::<f64>()
    }

    pub fn grad(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let th = self.theta(t)[0];
        let fs = self.factors(x);
        let mut g = [0.0; 3];
        for (a, ga) in g.iter_mut().enumerate().take(fs.len()) {
            *ga = th * fs.iter().enumerate().map(|(b, f)| if a == b { f[1] } else { f[0] }).product::<f64>();
        }
        g
    }

    pub fn laplacian(&self, x: [f64; 3], t: f64) -> f64 {
        let th = self.theta(t)[0];
        let fs = self.factors(x);
        (0..fs.len())
            .map(|a| th * fs.iter().enumerate().map(|(b, f)| if a == b { f[2] } else { f[0] }).product::<f64>())
            .sum()
    }

    /// Support must stay `2h` away from walls and `2Δt` away from `0`, `T`.
    pub fn check_margins(&self, grid: &Grid, dt: f64, t_final: f64) -> Result<()> {
        let mut bad = Vec::new();
        if self.space.len() != grid.dim() {
            bad.push(format!("{} spatial factors for a {}-dimensional grid", self.space.len(), grid.dim()));
        }
        for (a, b) in self.space.iter().enumerate().take(grid.dim()) {
            if b.kind == BumpKind::One {
                if grid.kind(a) == AxisKind::Wall {
                    bad.push(format!("axis {a} is a wall but the factor does not vanish there"));
                }
                continue;
            }
            let m = 2.0 * grid.h(a);
            if b.a < m - 1e-12 || b.b > grid.length(a) - m + 1e-12 || b.a >= b.b {
                bad.push(format!("axis {a}: support [{}, {}] needs margin {m}", b.a, b.b));
            }
        }
        let m = 2.0 * dt;
        if self.time.kind == BumpKind::One || self.time.a < m - 1e-15 || self.time.b > t_final - m + 1e-15 {
            bad.push(format!("time support [{}, {}] needs margin {m} inside (0, {t_final})", self.time.a, self.time.b));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::SupportMargin(format!("{}: {}", self.id, bad.join("; "))))
        }
    }

    pub fn scaled_time(&self, t_final: f64) -> Self {
        let mut out = self.clone();
        out.time.a *= t_final;
        out.time.b *= t_final;
        out
    }
}

/// Three distinct bumps on a box of the given lengths over `(0, T)`.
pub fn standard_test_functions(lengths: &[f64], t_final: f64) -> Vec<TestFunction> {
    let d = lengths.len();
    let place = |fr: [(f64, f64); 3], mk: fn(f64, f64) -> Bump1D| -> Vec<Bump1D> {
        (0..d).map(|a| mk(fr[a].0 * lengths[a], fr[a].1 * lengths[a])).collect()
    };
    vec![
        TestFunction {
            id: "poly3".into(),
            space: place([(0.2, 0.7), (0.3, 0.8), (0.25, 0.75)], |a, b| Bump1D::poly(3, a, b)),
            time: Bump1D::sin_pow(4, 0.1 * t_final, 0.9 * t_final),
            scale: 1.0,
        },
        TestFunction {
            id: "sin4".into(),
            space: place([(0.25, 0.9), (0.1, 0.6), (0.2, 0.8)], |a, b| Bump1D::sin_pow(4, a, b)),
            time: Bump1D::poly(3, 0.2 * t_final, 0.8 * t_final),
            scale: 1.0,
        },
        TestFunction {
            id: "poly4_offset".into(),
            space: place([(0.1, 0.55), (0.4, 0.9), (0.15, 0.6)], |a, b| Bump1D::poly(4, a, b)),
            time: Bump1D::sin_pow(4, 0.05 * t_final, 0.95 * t_final),
            scale: 1.0,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(b: &Bump1D) {
        let h = 1e-5;
        for k in 1..50 {
            let x = b.a + (b.b - b.a) * k as f64 / 50.0;
            let [f, f1, f2] = b.eval(x);
            let fp = b.eval(x + h)[0];
            let fm = b.eval(x - h)[0];
            assert!(f >= 0.0);
            assert!(((fp - fm) / (2.0 * h) - f1).abs() < 1e-6 * (1.0 + f1.abs()) / (b.b - b.a));
            assert!(((fp - 2.0 * f + fm) / (h * h) - f2).abs() < 1e-3 * (1.0 + f2.abs()));
        }
    }

    #[test]
    fn bump_derivatives_match_differences() {
        fd_check(&Bump1D::poly(3, 0.2, 0.7));
        fd_check(&Bump1D::poly(4, 0.1, 0.5));
        fd_check(&Bump1D::sin_pow(4, 0.25, 0.9));
        assert!((Bump1D::poly(3, 0.0, 1.0).eval(0.5)[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bumps_vanish_to_second_order_at_support_ends() {
        for b in [Bump1D::poly(3, 0.2, 0.7), Bump1D::sin_pow(4, 0.25, 0.9)] {
            for x in [b.a, b.b, b.a - 0.1, b.b + 0.1] {
                assert_eq!(b.eval(x), [0.0; 3]);
            }
            let near = b.eval(b.a + 1e-7);
            assert!(near[0] < 1e-12 && near[1].abs() < 1e-8 && near[2].abs() < 1e-2);
        }
    }

    #[test]
    fn laplacian_matches_differences() {
        let tf = &standard_test_functions(&[1.0, 1.0], 1.0)[1];
        let x = [0.5, 0.35, 0.0];
        let t = 0.5;
        let h = 1e-4;
        let mut lap = 0.0;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            lap += (tf.value(xp, t) - 2.0 * tf.value(x, t) + tf.value(xm, t)) / (h * h);
            let g = (tf.value(xp, t) - tf.value(xm, t)) / (2.0 * h);
            assert!((g - tf.grad(x, t)[a]).abs() < 1e-5 * (1.0 + g.abs()));
        }
        assert!((lap - tf.laplacian(x, t)).abs() < 1e-4 * (1.0 + lap.abs()));
        let dt = (tf.value(x, t + h) - tf.value(x, t - h)) / (2.0 * h);
        assert!((dt - tf.dt(x, t)).abs() < 1e-5 * (1.0 + dt.abs()));
    }

    #[test]
    fn margins_are_enforced() {
        let walls = Grid::new(2, &[32, 32], &[1.0, 1.0], &[AxisKind::Wall, AxisKind::Wall]).unwrap();
        for tf in standard_test_functions(&[1.0, 1.0], 0.05) {
            tf.check_margins(&walls, 1e-4, 0.05).unwrap();
        }
        let coarse = Grid::new(2, &[8, 8], &[1.0, 1.0], &[AxisKind::Wall, AxisKind::Wall]).unwrap();
        let tf = &standard_test_functions(&[1.0, 1.0], 0.05)[2];
        assert!(matches!(tf.check_margins(&coarse, 1e-4, 0.05), Err(Error::SupportMargin(_))));
        assert!(tf.check_margins(&walls, 0.01, 0.05).is_err());
    }
}
