use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{parse_config_with, RunConfig};
use super::{
    check_suite, read_snapshot_full, read_snapshot_header, snapshot_name, write_csv, write_json, write_snapshot,
    CheckResult,
};
use crate::diagnostics::{
    korn_ratio, standard_test_functions, sweep, weak_residual_observer, EnergyLedger, LedgerRow, LocalEnergyObserver,
    LocalEnergyReport, PressureLemmaCheck, PressureLemmaReport, SweepMember, SweepOptions, TestScalar, TestVector,
    WeakResidual, WeakResidualObserver,
};
use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::stepper::{run_from, Observer, SimState, StepOutput, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Usage = 1,
    Runtime = 2,
    Invariant = 3,
}

impl ExitCode {
    /// Configuration and argument problems are usage errors; everything
    /// else raised while running is a runtime failure.
    pub fn for_error(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidGrid(_) | Error::GridTooCoarse { .. } => {
                ExitCode::Usage
            }
            _ => ExitCode::Runtime,
        }
    }
}

/// Accumulators of every enabled diagnostic; serialized into snapshots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct DiagState {
    ledger: Option<EnergyLedger>,
    local: Option<LocalEnergyObserver>,
    lemma: Option<PressureLemmaCheck>,
    weak: Option<WeakResidualObserver>,
}

impl DiagState {
    fn from_config(cfg: &RunConfig) -> Self {
        let d = &cfg.diagnostics;
        let every = cfg.output.sample_every;
        let lengths = &cfg.solver.grid.lengths;
        DiagState {
            ledger: d.ledger.then(|| EnergyLedger::new(every)),
            local: d.local_energy.then(|| {
                let tfs = standard_test_functions(lengths, cfg.solver.t_final)
                    .into_iter()
                    .filter(|tf| d.test_functions.contains(&tf.id))
                    .collect();
                LocalEnergyObserver::new(tfs)
            }),
            lemma: d.pressure_lemma.then(|| PressureLemmaCheck::new(d.lemma_delta, cfg.solver.elliptic_tol, every)),
            weak: d.weak_residual.then(|| weak_residual_observer(TestVector::standard(), TestScalar::standard())),
        }
    }

    fn each(&mut self) -> Vec<&mut dyn Observer> {
        let mut v: Vec<&mut dyn Observer> = Vec::new();
        if let Some(o) = self.ledger.as_mut() {
            v.push(o);
        }
        if let Some(o) = self.local.as_mut() {
            v.push(o);
        }
        if let Some(o) = self.lemma.as_mut() {
            v.push(o);
        }
        if let Some(o) = self.weak.as_mut() {
            v.push(o);
        }
        v
    }
}

struct RunObservers {
    diag: DiagState,
    dir: PathBuf,
    snapshot_every: u64,
    snapshots: usize,
}

impl RunObservers {
    fn snapshot(&mut self, stepper: &Stepper, state: &SimState) -> Result<()> {
        let obs = serde_json::to_value(&self.diag).map_err(|e| Error::Snapshot(e.to_string()))?;
        write_snapshot(&self.dir.join(snapshot_name(state.step)), state, stepper.config.epsilon, obs)?;
        self.snapshots += 1;
        Ok(())
    }
}

impl Observer for RunObservers {
    fn initial(&mut self, stepper: &Stepper, state: &SimState) -> Result<()> {
        for o in self.diag.each() {
            o.initial(stepper, state)?;
        }
        if self.snapshot_every > 0 {
            self.snapshot(stepper, state)?;
        }
        Ok(())
    }

    fn after_step(&mut self, stepper: &Stepper, prev: &SimState, out: &StepOutput) -> Result<()> {
        for o in self.diag.each() {
            o.after_step(stepper, prev, out)?;
        }
        let s = &out.state;
        if self.snapshot_every > 0 && (s.step.is_multiple_of(self.snapshot_every) || s.t >= stepper.config.t_final) {
            self.snapshot(stepper, s)?;
        }
        Ok(())
    }

    fn finish(&mut self, stepper: &Stepper, state: &SimState) -> Result<()> {
        for o in self.diag.each() {
            o.finish(stepper, state)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub directory: PathBuf,
    pub t: f64,
    pub steps: u64,
    pub snapshots: usize,
    pub summary: serde_json::Value,
}

fn write_reports(dir: &Path, diag: &DiagState) -> Result<()> {
    if let Some(l) = &diag.ledger {
        write_csv(&dir.join("ledger.csv"), &LedgerRow::COLUMNS, l.rows.iter().map(|r| r.values()))?;
    }
    if let Some(l) = &diag.local {
        write_csv(&dir.join("local_energy.csv"), &LocalEnergyReport::COLUMNS, l.reports().iter().map(|r| r.values()))?;
    }
    if let Some(l) = &diag.lemma {
        write_csv(&dir.join("pressure_lemma.csv"), &PressureLemmaReport::COLUMNS, l.rows.iter().map(|r| r.values()))?;
    }
    if let Some(w) = &diag.weak {
        write_csv(&dir.join("weak_residual.csv"), &WeakResidual::COLUMNS, std::iter::once(w.residual().values()))?;
    }
    Ok(())
}

fn summary(cfg: &RunConfig, state: &SimState, diag: &DiagState, korn: Option<Option<f64>>) -> serde_json::Value {
    let mut s = json!({
        "config": cfg,
        "epsilon": cfg.solver.epsilon,
        "t": state.t,
        "steps": state.step,
        "kinetic_energy": state.u.kinetic_energy(),
        "max_u_inf": state.u.max_abs(),
    });
    if let Some(l) = &diag.ledger {
        s["ledger"] = json!({
            "initial_kinetic": l.initial_kinetic,
            "final_residual": l.final_residual(),
            "min_residual": l.min_residual,
            "max_identity_defect": l.max_identity_defect,
            "max_boundary_term": l.max_boundary_term,
        });
    }
    if let Some(l) = &diag.local {
        s["local_energy"] = json!(l.reports());
    }
    if let Some(l) = &diag.lemma {
        s["pressure_lemma"] = json!(l.report());
    }
    if let Some(w) = &diag.weak {
        s["weak_residual"] = json!(w.residual());
    }
    if let Some(k) = korn {
        s["korn_ratio"] = json!(k);
    }
    s
}

/// `run`: simulate, write CSV reports, snapshots and `summary.json`. With
/// `resume`, continue from a snapshot written by an earlier run of the same
/// configuration.
pub fn cmd_run(config_path: &Path, overrides: &[String], resume: Option<&Path>) -> Result<RunOutcome> {
    let cfg = parse_config_with(config_path, overrides)?;
    run_config(&cfg, resume)
}

pub fn run_config(cfg: &RunConfig, resume: Option<&Path>) -> Result<RunOutcome> {
    let dir = cfg.output.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let stepper = Stepper::new(cfg.solver.clone())?;
    let mut obs = RunObservers {
        diag: DiagState::from_config(cfg),
        dir: dir.clone(),
        snapshot_every: cfg.output.snapshot_every,
        snapshots: 0,
    };
    write_json(&dir.join("config.json"), cfg)?;
    let state = match resume {
        Some(path) => {
            let (header, state) = read_snapshot_full(path, stepper.grid())?;
            if header.epsilon != cfg.solver.epsilon {
                return Err(Error::Snapshot(format!(
                    "snapshot epsilon {:e} differs from configured {:e}",
                    header.epsilon, cfg.solver.epsilon
                )));
            }
            obs.diag = serde_json::from_value(header.observers)
                .map_err(|e| Error::Snapshot(format!("observer state: {e}")))?;
            state
        }
        None => {
            let s = stepper.initial_state()?;
            obs.initial(&stepper, &s)?;
            s
        }
    };
    let final_state = run_from(&stepper, state, &mut [&mut obs])?;
    let korn = cfg.diagnostics.korn.then(|| korn_ratio(stepper.grid(), cfg.diagnostics.korn_samples, 0));
    write_reports(&dir, &obs.diag)?;
    let summary = summary(cfg, &final_state, &obs.diag, korn);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(RunOutcome { directory: dir, t: final_state.t, steps: final_state.step, snapshots: obs.snapshots, summary })
}

/// Comma-separated positive ε values without duplicates.
pub fn parse_eps_list(text: &str) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::new();
    for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let v: f64 = tok.parse().map_err(|_| Error::InvalidArgument(format!("cannot parse epsilon '{tok}'")))?;
        if out.contains(&v) {
            return Err(Error::InvalidArgument(format!("duplicate epsilon {tok}")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("epsilon list is empty".into()));
    }
    Ok(out)
}

pub fn member_dir_name(eps: f64) -> String {
    format!("eps_{eps:e}")
}

/// `sweep`: one subdirectory per ε and a merged `sweep.csv`. Values are
/// sorted in decreasing order.
pub fn cmd_sweep(config_path: &Path, overrides: &[String], eps: &[f64], jobs: usize) -> Result<Vec<SweepMember>> {
    let cfg = parse_config_with(config_path, overrides)?;
    let mut eps = eps.to_vec();
    eps.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let dir = cfg.output.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let report = sweep(&cfg.solver, &eps, SweepOptions { sample_every: cfg.output.sample_every, jobs })?;
    for m in &report.members {
        let sub = dir.join(member_dir_name(m.epsilon));
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        write_json(&sub.join("member.json"), m)?;
    }
    write_csv(&dir.join("sweep.csv"), &SweepMember::COLUMNS, report.members.iter().map(|m| m.values()))?;
    write_json(&dir.join("sweep.json"), &json!({ "config": cfg, "members": report.members }))?;
    Ok(report.members)
}

/// `check`: the invariant suite on an `n`-cell grid, 100 trials per identity.
pub fn cmd_check(n: usize) -> Result<Vec<CheckResult>> {
    check_suite(n, 100, -0.5, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagKind {
    Ledger,
    Local,
    Lemma,
    Weak,
}

impl DiagKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ledger" => Some(DiagKind::Ledger),
            "local" => Some(DiagKind::Local),
            "lemma" => Some(DiagKind::Lemma),
            "weak" => Some(DiagKind::Weak),
            _ => None,
        }
    }
}

/// Compares replayed states with the stored snapshots, bit for bit.
struct ReplayVerifier {
    expected: BTreeMap<u64, PathBuf>,
    grid: Arc<Grid>,
    verified: usize,
}

impl Observer for ReplayVerifier {
    fn after_step(&mut self, _stepper: &Stepper, _prev: &SimState, out: &StepOutput) -> Result<()> {
        if let Some(path) = self.expected.get(&out.state.step) {
            let (_, stored) = read_snapshot_full(path, &self.grid)?;
            let same = stored.t.to_bits() == out.state.t.to_bits()
                && stored
                    .u
                    .comps
                    .iter()
                    .zip(&out.state.u.comps)
                    .all(|(a, b)| a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
            if !same {
                return Err(Error::Snapshot(format!("replay diverges from stored step {}", out.state.step)));
            }
            self.verified += 1;
        }
        Ok(())
    }
}

/// `diag`: recompute one diagnostic post hoc from a run directory holding
/// `config.json` and snapshots. The trajectory is replayed from the first
/// snapshot to the last and checked against every stored one; the report
/// is written to `<which>_replay.csv`.
pub fn cmd_diag(dir: &Path, which: DiagKind) -> Result<PathBuf> {
    let text = std::fs::read_to_string(dir.join("config.json")).map_err(|e| Error::io(dir.join("config.json"), e))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Snapshot(format!("config.json: {e}")))?;
    let mut snaps = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.starts_with("snapshot_") && name.ends_with(".json") {
            let base = path.with_extension("");
            let h = read_snapshot_header(&base)?;
            snaps.insert(h.step, base);
        }
    }
    let (&first_step, first) =
        snaps.iter().next().ok_or_else(|| Error::Snapshot(format!("no snapshots in {}", dir.display())))?;
    let last = snaps.values().next_back().expect("nonempty").clone();
    let t_last = read_snapshot_header(&last)?.t;
    cfg.diagnostics.ledger = which == DiagKind::Ledger;
    cfg.diagnostics.local_energy = which == DiagKind::Local;
    cfg.diagnostics.pressure_lemma = which == DiagKind::Lemma;
    cfg.diagnostics.weak_residual = which == DiagKind::Weak;
    let mut diag = DiagState::from_config(&cfg);
    let mut solver = cfg.solver.clone();
    solver.t_final = t_last;
    let stepper = Stepper::new(solver)?;
    let (_, state) = read_snapshot_full(first, stepper.grid())?;
    let mut verifier = ReplayVerifier {
        expected: snaps.iter().filter(|(k, _)| **k > first_step).map(|(k, v)| (*k, v.clone())).collect(),
        grid: stepper.grid().clone(),
        verified: 0,
    };
    // test functions and weak weights refer to the configured horizon
    let full = Stepper::new(cfg.solver.clone())?;
    for o in diag.each() {
        o.initial(&full, &state)?;
    }
    {
        struct Both<'a> {
            diag: &'a mut DiagState,
            full: &'a Stepper,
        }
        impl Observer for Both<'_> {
            fn after_step(&mut self, _s: &Stepper, prev: &SimState, out: &StepOutput) -> Result<()> {
                for o in self.diag.each() {
                    o.after_step(self.full, prev, out)?;
                }
                Ok(())
            }
        }
        let mut both = Both { diag: &mut diag, full: &full };
        run_from(&stepper, state, &mut [&mut verifier, &mut both])?;
    }
    if verifier.verified + 1 != snaps.len() {
        return Err(Error::Snapshot(format!(
            "replay reached {} of {} stored snapshots",
            verifier.verified + 1,
            snaps.len()
        )));
    }
    let out = match which {
        DiagKind::Ledger => {
            let l = diag.ledger.as_ref().expect("enabled");
            let p = dir.join("ledger_replay.csv");
            write_csv(&p, &LedgerRow::COLUMNS, l.rows.iter().map(|r| r.values()))?;
            p
        }
        DiagKind::Local => {
            let l = diag.local.as_ref().expect("enabled");
            let p = dir.join("local_replay.csv");
            write_csv(&p, &LocalEnergyReport::COLUMNS, l.reports().iter().map(|r| r.values()))?;
            p
        }
        DiagKind::Lemma => {
            let l = diag.lemma.as_ref().expect("enabled");
            let p = dir.join("lemma_replay.csv");
            write_csv(&p, &PressureLemmaReport::COLUMNS, l.rows.iter().map(|r| r.values()))?;
            p
        }
        DiagKind::Weak => {
            let w = diag.weak.as_ref().expect("enabled");
            let p = dir.join("weak_replay.csv");
            write_csv(&p, &WeakResidual::COLUMNS, std::iter::once(w.residual().values()))?;
            p
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, extra: &str) -> PathBuf {
        let text = format!(
            r#"
[grid]
dim = 2
n_cells = [16, 16]
lengths = [1.0, 1.0]
axis_kinds = ["wall", "wall"]

[solver]
epsilon = 1e-2
T = 0.004

[output]
directory = "{}"
sample_every = 5
{extra}
"#,
            dir.join("out").display()
        );
        let p = dir.join("run.toml");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn zero_horizon_writes_single_row() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path(), "");
        let out = cmd_run(&cfg, &["solver.T=0".into()], None).unwrap();
        let csv = std::fs::read_to_string(out.directory.join("ledger.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn override_is_recorded_in_summary() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path(), "");
        let out = cmd_run(&cfg, &["solver.epsilon=1e-3".into()], None).unwrap();
        let text = std::fs::read_to_string(out.directory.join("summary.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["epsilon"], 1e-3);
    }

    #[test]
    fn snapshot_count_and_resume_are_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg =
            write_config(tmp.path(), "snapshot_every = 4\n[diagnostics]\npressure_lemma = true\nlocal_energy = false");
        let full = cmd_run(&cfg, &[], None).unwrap();
        let steps = full.steps as usize;
        assert_eq!(full.snapshots, steps.div_ceil(4) + 1);
        let ledger = std::fs::read_to_string(full.directory.join("ledger.csv")).unwrap();
        let lemma = std::fs::read_to_string(full.directory.join("pressure_lemma.csv")).unwrap();

        let snap = full.directory.join(snapshot_name(4));
        let resumed_dir = tmp.path().join("resumed");
        let o = format!("output.directory={:?}", resumed_dir.display().to_string());
        let res = cmd_run(&cfg, &[o], Some(&snap)).unwrap();
        assert_eq!(res.steps, full.steps);
        assert_eq!(std::fs::read_to_string(resumed_dir.join("ledger.csv")).unwrap(), ledger);
        assert_eq!(std::fs::read_to_string(resumed_dir.join("pressure_lemma.csv")).unwrap(), lemma);

        let replay = cmd_diag(&full.directory, DiagKind::Ledger).unwrap();
        assert_eq!(std::fs::read_to_string(replay).unwrap(), ledger);
    }

    #[test]
    fn eps_list_parsing() {
        assert_eq!(parse_eps_list("1e-1, 1e-2").unwrap(), vec![0.1, 0.01]);
        assert!(parse_eps_list("1e-1,1e-1").is_err());
        assert!(parse_eps_list("x").is_err());
        assert!(parse_eps_list("").is_err());
    }

    #[test]
    fn sweep_writes_member_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path(), "");
        let m = cmd_sweep(&cfg, &["solver.T=0.002".into()], &[1e-1, 1e-2], 2).unwrap();
        assert_eq!(m.len(), 2);
        let out = tmp.path().join("out");
        assert!(out.join(member_dir_name(1e-1)).join("member.json").exists());
        assert!(out.join(member_dir_name(1e-2)).is_dir());
        let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn unwritable_output_fails_cleanly() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path(), "");
        let blocker = tmp.path().join("blocker");
        std::fs::write(&blocker, "file").unwrap();
        let o = format!("output.directory={:?}", blocker.join("sub").display().to_string());
        let err = cmd_run(&cfg, &[o], None).unwrap_err();
        assert_eq!(ExitCode::for_error(&err), ExitCode::Runtime);
        assert!(!blocker.join("sub").exists());
    }
}
