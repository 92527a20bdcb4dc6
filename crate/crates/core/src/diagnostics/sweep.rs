//! ε-sweeps: identical initial data, grid and step size, one run per ε.
//! Weak-limit statements are proxied by decay metrics and by Cauchy
//! differences between consecutive members.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Trapezoid;
use crate::error::{Error, Result};
use crate::fields::{lp_norm, power_integral, VelocityField};
use crate::operators::{divergence, gradient};
use crate::stepper::{run, DtPolicy, Observer, SimState, SolverConfig, StepOutput, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Velocity samples for the Cauchy differences are kept every this many steps.
    pub sample_every: u64,
    pub jobs: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { sample_every: 10, jobs: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepMember {
    pub epsilon: f64,
    pub steps: u64,
    pub dt: f64,
    pub sup_p_l53: f64,
    pub int_p53: f64,
    pub div_l2l2: f64,
    pub qu_l52: f64,
    pub eps_grad_p_l2l2: f64,
    pub eps_grad_p_l52: f64,
    pub sup_eps35_p_l53: f64,
    /// `sup_t ε‖p‖^{5/3}_{5/3} + ∫‖p‖^{5/3}_{5/3}`.
    pub lemma_bound: f64,
    pub u0_inf: f64,
    pub max_u_inf: f64,
    /// `‖u^ε − u^{ε'}‖_{L²(L²)}` against the next member of the list.
    pub cauchy_next: Option<f64>,
    pub error: Option<String>,
}

impl SweepMember {
    pub const COLUMNS: [&'static str; 15] = [
        "epsilon",
        "steps",
        "dt",
        "sup_p_L53",
        "int_p53",
        "div_L2L2",
        "Qu_L52",
        "eps_grad_p_L2L2",
        "eps_grad_p_L52",
        "sup_eps35_p_L53",
        "lemma_bound",
        "u0_inf",
        "max_u_inf",
        "cauchy_next",
        "error",
    ];

    pub fn values(&self) -> Vec<String> {
        let f = |x: f64| format!("{x:e}");
        vec![
            f(self.epsilon),
            self.steps.to_string(),
            f(self.dt),
            f(self.sup_p_l53),
            f(self.int_p53),
            f(self.div_l2l2),
            f(self.qu_l52),
            f(self.eps_grad_p_l2l2),
            f(self.eps_grad_p_l52),
            f(self.sup_eps35_p_l53),
            f(self.lemma_bound),
            f(self.u0_inf),
            f(self.max_u_inf),
            self.cauchy_next.map(f).unwrap_or_default(),
            self.error.clone().unwrap_or_default().replace([',', '\n'], ";"),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub members: Vec<SweepMember>,
}

impl SweepReport {
    pub fn column(&self, f: impl Fn(&SweepMember) -> f64) -> Vec<f64> {
        self.members.iter().map(f).collect()
    }
}

struct SweepObserver {
    sample_every: u64,
    m: SweepMember,
    sup_eps_p53: f64,
    acc: [Trapezoid; 5],
    samples: Vec<VelocityField>,
}

impl SweepObserver {
    fn push(&mut self, stepper: &Stepper, s: &SimState, dt: f64) -> Result<()> {
        let eps = stepper.config.epsilon;
        let p53 = power_integral(&s.p, 5.0 / 3.0);
        self.m.sup_p_l53 = self.m.sup_p_l53.max(p53.powf(0.6));
        self.m.sup_eps35_p_l53 = self.m.sup_eps35_p_l53.max(eps.powf(0.6) * p53.powf(0.6));
        self.sup_eps_p53 = self.sup_eps_p53.max(eps * p53);
        self.m.max_u_inf = self.m.max_u_inf.max(s.u.max_abs());
        let qu = stepper.elliptic().helmholtz(&s.u, stepper.config.elliptic_tol)?.gradient_part;
        let gp = gradient(&s.p);
        let vals = [
            p53,
            power_integral(&divergence(&s.u), 2.0),
            power_integral(&qu, 2.5),
            eps * eps * power_integral(&gp, 2.0),
            eps.powf(2.5) * power_integral(&gp, 2.5),
        ];
        for (a, v) in self.acc.iter_mut().zip(vals) {
            a.push(v, dt);
        }
        if s.step.is_multiple_of(self.sample_every) {
            self.samples.push(s.u.clone());
        }
        Ok(())
    }

    fn finalize(&mut self) {
        let a = |k: usize| self.acc[k].value;
        self.m.int_p53 = a(0);
        self.m.div_l2l2 = a(1).sqrt();
        self.m.qu_l52 = a(2).powf(0.4);
        self.m.eps_grad_p_l2l2 = a(3).sqrt();
        self.m.eps_grad_p_l52 = a(4).powf(0.4);
        self.m.lemma_bound = self.sup_eps_p53 + self.m.int_p53;
    }
}

impl Observer for SweepObserver {
    fn initial(&mut self, stepper: &Stepper, state: &SimState) -> Result<()> {
        self.m.u0_inf = state.u.max_abs();
        self.push(stepper, state, 0.0)
    }

    fn after_step(&mut self, stepper: &Stepper, _prev: &SimState, out: &StepOutput) -> Result<()> {
        self.m.steps = out.state.step;
        self.push(stepper, &out.state, out.dt)
    }
}

fn run_member(template: &SolverConfig, eps: f64, dt: f64, sample_every: u64) -> (SweepMember, Vec<VelocityField>) {
    let mut cfg = template.clone();
    cfg.epsilon = eps;
    cfg.dt = DtPolicy::Fixed(dt);
    let mut obs = SweepObserver {
        sample_every,
        m: SweepMember { epsilon: eps, dt, ..Default::default() },
        sup_eps_p53: 0.0,
        acc: [Trapezoid::default(); 5],
        samples: Vec::new(),
    };
    match run(&cfg, &mut [&mut obs]) {
        Ok(_) => {
            obs.finalize();
            (obs.m, obs.samples)
        }
        Err(e) => {
            obs.m.error = Some(e.to_string());
            (obs.m, Vec::new())
        }
    }
}

fn l2l2_difference(a: &[VelocityField], b: &[VelocityField], dt: f64) -> Result<Option<f64>> {
    if a.is_empty() || a.len() != b.len() {
        return Ok(None);
    }
    let mut acc = Trapezoid::default();
    for (x, y) in a.iter().zip(b) {
        let d = lp_norm(&x.sub(y), 2.0)?;
        acc.push(d * d, dt);
    }
    Ok(Some(acc.value.sqrt()))
}

/// One run per ε with the step size fixed from the shared initial state.
pub fn sweep(template: &SolverConfig, eps_list: &[f64], opts: SweepOptions) -> Result<SweepReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("epsilon list is empty".into()));
    }
    for w in eps_list.windows(2) {
        if w[1] == w[0] {
            return Err(Error::InvalidArgument(format!("duplicate epsilon {:e}", w[0])));
        }
        if w[1] > w[0] {
            return Err(Error::InvalidArgument("epsilon list must be decreasing".into()));
        }
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {e}")));
    }
    let mut probe = template.clone();
    probe.epsilon = eps_list[0];
    let stepper = Stepper::new(probe)?;
    let initial = stepper.initial_state()?;
    let dt = stepper.stable_dt(&initial);
    let sample_every = opts.sample_every.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<(SweepMember, Vec<VelocityField>)> =
        pool.install(|| eps_list.par_iter().map(|&eps| run_member(template, eps, dt, sample_every)).collect());
    let sample_dt = dt * sample_every as f64;
    let mut members = Vec::with_capacity(results.len());
    for k in 0..results.len() {
        let mut m = results[k].0.clone();
        if k + 1 < results.len() {
            m.cauchy_next = l2l2_difference(&results[k].1, &results[k + 1].1, sample_dt)?;
        }
        members.push(m);
    }
    Ok(SweepReport { members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AxisKind;
    use crate::stepper::{GridSpec, InitialCondition};

    fn template(n: usize, t: f64) -> SolverConfig {
        let gs = GridSpec { dim: 2, n_cells: vec![n, n], lengths: vec![1.0, 1.0], axis_kinds: vec![AxisKind::Wall; 2] };
        SolverConfig::new(gs, 1.0, t)
    }

    #[test]
    fn trivial_sweep_is_zero() {
        let mut t = template(8, 0.002);
        t.ic = InitialCondition::Zero;
        let r = sweep(&t, &[1e-2], SweepOptions::default()).unwrap();
        let m = &r.members[0];
        assert!(m.error.is_none());
        for v in [m.sup_p_l53, m.int_p53, m.div_l2l2, m.qu_l52, m.eps_grad_p_l2l2, m.max_u_inf] {
            assert_eq!(v, 0.0);
        }
        assert_eq!(m.cauchy_next, None);
    }

    #[test]
    fn list_is_validated() {
        let t = template(8, 0.001);
        assert!(sweep(&t, &[], SweepOptions::default()).is_err());
        assert!(sweep(&t, &[1e-2, 1e-2], SweepOptions::default()).is_err());
        assert!(sweep(&t, &[1e-3, 1e-2], SweepOptions::default()).is_err());
    }

    #[test]
    fn jobs_do_not_change_results() {
        let t = template(16, 0.004);
        let eps = [1e-1, 1e-2, 1e-3];
        let a = sweep(&t, &eps, SweepOptions { sample_every: 2, jobs: 1 }).unwrap();
        let b = sweep(&t, &eps, SweepOptions { sample_every: 2, jobs: 3 }).unwrap();
        assert_eq!(a, b);
        let qu = a.column(|m| m.qu_l52);
        assert!(qu[0] > qu[1] && qu[1] > qu[2], "{qu:?}");
        assert!(a.members[..2].iter().all(|m| m.cauchy_next.unwrap() > 0.0));
        assert_eq!(a.members[2].cauchy_next, None);
    }
}
