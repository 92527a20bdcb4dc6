//! Local energy balance against nonnegative test functions:
//!
//! `∫∫(|∇u|² + |div u|² + ε|∇p|²)φ
//!    = ∫∫ ½|u|²(∂_tφ + Δφ) + ∫∫(u ½|u|² + p u − ε p∇p − u div u)·∇φ`
//!
//! which smooth solutions satisfy with equality, so the reported slack
//! `RHS − LHS` is a measure of discretization error.

use serde::{Deserialize, Serialize};

use super::testfn::TestFunction;
use super::{integrate, Trapezoid};
use crate::error::{Error, Result};
use crate::fields::{Staggered, VelocityField};
use crate::geometry::Location;
use crate::operators::{avg, divergence, gradient, velocity_gradient};
use crate::stepper::{Observer, SimState, StepOutput, Stepper};

const N_TERMS: usize = 8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalEnergyReport {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub lhs_gradient: f64,
    pub lhs_divergence: f64,
    pub lhs_pressure: f64,
    pub rhs_kinetic: f64,
    pub rhs_transport: f64,
    pub rhs_pressure_flux: f64,
    /// `−ε ∫∫ p∇p·∇φ`, absent in the ε → 0 limit form.
    pub rhs_eps_pressure: f64,
    /// `−∫∫ u div u·∇φ`, absent in the ε → 0 limit form.
    pub rhs_div_transport: f64,
}

impl LocalEnergyReport {
    pub const COLUMNS: [&'static str; 12] = [
        "test_function",
        "lhs",
        "rhs",
        "slack",
        "lhs_gradient",
        "lhs_divergence",
        "lhs_pressure",
        "rhs_kinetic",
        "rhs_transport",
        "rhs_pressure_flux",
        "rhs_eps_pressure",
        "rhs_div_transport",
    ];

    fn from_terms(id: &str, t: &[f64; N_TERMS]) -> Self {
        let lhs = t[0] + t[1] + t[2];
        let rhs = t[3] + t[4] + t[5] + t[6] + t[7];
        LocalEnergyReport {
            id: id.to_string(),
            lhs,
            rhs,
            slack: rhs - lhs,
            lhs_gradient: t[0],
            lhs_divergence: t[1],
            lhs_pressure: t[2],
            rhs_kinetic: t[3],
            rhs_transport: t[4],
            rhs_pressure_flux: t[5],
            rhs_eps_pressure: t[6],
            rhs_div_transport: t[7],
        }
    }

    /// The limit form: slack without the two ε-scheme transport corrections.
    pub fn limit_slack(&self) -> f64 {
        self.slack - self.rhs_eps_pressure - self.rhs_div_transport
    }

    pub fn values(&self) -> Vec<String> {
        let mut v = vec![self.id.clone()];
        for x in [
            self.lhs,
            self.rhs,
            self.slack,
            self.lhs_gradient,
            self.lhs_divergence,
            self.lhs_pressure,
            self.rhs_kinetic,
            self.rhs_transport,
            self.rhs_pressure_flux,
            self.rhs_eps_pressure,
            self.rhs_div_transport,
        ] {
            v.push(format!("{x:e}"));
        }
        v
    }
}

fn cell_speed_squared(u: &VelocityField) -> Staggered {
    let g = u.grid();
    let mut acc = Staggered::zeros(g, Location::Cell);
    for (j, c) in u.comps.iter().enumerate() {
        let mut sq = c.clone();
        for v in &mut sq.data {
            *v *= *v;
        }
        for (a, b) in acc.data.iter_mut().zip(&avg(g, &sq, j).data) {
            *a += b;
        }
    }
    acc
}

/// Spatial integrands of all eight terms at one time level.
pub(crate) fn local_terms(state: &SimState, tf: &TestFunction, epsilon: f64) -> [f64; N_TERMS] {
    let u = &state.u;
    let p = &state.p;
    let g = u.grid();
    let t = state.t;
    let phi = |x: [f64; 3]| tf.value(x, t);
    let mut out = [0.0; N_TERMS];
    if tf.value_at_time_is_zero(t) {
        return out;
    }
    for row in velocity_gradient(u) {
        for c in row {
            out[0] += integrate(g, &c, |x, v| v * v * phi(x));
        }
    }
    let div = divergence(u);
    out[1] = integrate(g, &div.values, |x, v| v * v * phi(x));
    let gp = gradient(p);
    let q2 = cell_speed_squared(u);
    for i in 0..g.dim() {
        out[2] += epsilon * integrate(g, &gp.comps[i], |x, v| v * v * phi(x));
        out[3] += integrate(g, &u.comps[i], |x, v| 0.5 * v * v * (tf.dt(x, t) + tf.laplacian(x, t)));
        let q2f = avg(g, &q2, i);
        let pf = avg(g, &p.values, i);
        let df = avg(g, &div.values, i);
        let w = g.weights(Location::Face(i));
        let comp = &u.comps[i];
        let sh = comp.shape;
        let mut idx = 0;
        for a in 0..sh[0] {
            for b in 0..sh[1] {
                for c in 0..sh[2] {
                    let ijk = [a, b, c];
                    let x: [f64; 3] =
                        std::array::from_fn(|ax| if ax < g.dim() { g.coord(comp.loc, ax, ijk[ax]) } else { 0.0 });
                    let dphi = tf.grad(x, t)[i];
                    if dphi != 0.0 {
                        let ui = comp.data[idx];
                        let wd = w[idx] * dphi;
                        out[4] += wd * ui * 0.5 * q2f.data[idx];
                        out[5] += wd * pf.data[idx] * ui;
                        out[6] -= wd * epsilon * pf.data[idx] * gp.comps[i].data[idx];
                        out[7] -= wd * ui * df.data[idx];
                    }
                    idx += 1;
                }
            }
        }
    }
    out
}

/// Streaming accumulation of the local balance for a set of test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEnergyObserver {
    pub test_functions: Vec<TestFunction>,
    acc: Vec<[Trapezoid; N_TERMS]>,
}

impl LocalEnergyObserver {
    pub fn new(test_functions: Vec<TestFunction>) -> Self {
        let acc = vec![[Trapezoid::default(); N_TERMS]; test_functions.len()];
        LocalEnergyObserver { test_functions, acc }
    }

    fn push(&mut self, state: &SimState, epsilon: f64, dt: f64) {
        for (tf, acc) in self.test_functions.iter().zip(&mut self.acc) {
            let terms = local_terms(state, tf, epsilon);
            for (a, v) in acc.iter_mut().zip(terms) {
                a.push(v, dt);
            }
        }
    }

    pub fn reports(&self) -> Vec<LocalEnergyReport> {
        self.test_functions
            .iter()
            .zip(&self.acc)
            .map(|(tf, acc)| LocalEnergyReport::from_terms(&tf.id, &std::array::from_fn(|k| acc[k].value)))
            .collect()
    }
}

impl Observer for LocalEnergyObserver {
    fn initial(&mut self, stepper: &Stepper, state: &SimState) -> Result<()> {
        let dt = stepper.stable_dt(state);
        for tf in &self.test_functions {
            tf.check_margins(stepper.grid(), dt, stepper.config.t_final)?;
        }
        self.push(state, stepper.config.epsilon, 0.0);
        Ok(())
    }

    fn after_step(&mut self, stepper: &Stepper, _prev: &SimState, out: &StepOutput) -> Result<()> {
        self.push(&out.state, stepper.config.epsilon, out.dt);
        Ok(())
    }
}

/// Local balance over a stored trajectory (states in time order).
pub fn local_energy_residual(states: &[SimState], tf: &TestFunction, epsilon: f64) -> Result<LocalEnergyReport> {
    let first = states.first().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let last = states.last().expect("nonempty");
    let max_dt = states.windows(2).map(|w| w[1].t - w[0].t).fold(0.0, f64::max);
    tf.check_margins(first.u.grid(), max_dt, last.t)?;
    let mut acc = [Trapezoid::default(); N_TERMS];
    let mut prev_t = first.t;
    for s in states {
        let terms = local_terms(s, tf, epsilon);
        for (a, v) in acc.iter_mut().zip(terms) {
            a.push(v, s.t - prev_t);
        }
        prev_t = s.t;
    }
    Ok(LocalEnergyReport::from_terms(&tf.id, &std::array::from_fn(|k| acc[k].value)))
}
