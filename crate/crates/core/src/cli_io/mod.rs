//! Configuration, persistence and the command implementations behind the
//! `acflow` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ScalarField, VelocityField};
use crate::geometry::Grid;
use crate::stepper::{GridSpec, SimState};

mod check;
mod commands;
mod config;

pub use check::{check_suite, CheckResult};
pub use commands::{cmd_check, cmd_diag, cmd_run, cmd_sweep, parse_eps_list, DiagKind, ExitCode, RunOutcome};
pub use config::{
    apply_override, config_from_table, parse_config, parse_config_with, parse_table, DiagnosticsConfig, OutputConfig,
    RunConfig, OUTPUT_ROOT_ENV,
};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

/// Write `bytes` to a temporary sibling and rename it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// CSV text with a header row.
pub fn csv_text(columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = columns.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub fn write_csv(path: &Path, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    atomic_write(path, csv_text(columns, rows).as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Snapshot(e.to_string()))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format_version: u32,
    pub grid: GridSpec,
    pub epsilon: f64,
    pub t: f64,
    pub step: u64,
    /// Array shapes in file order: velocity components, then pressure.
    pub shapes: Vec<[usize; 3]>,
    /// Observer accumulators needed for an exact resume.
    #[serde(default)]
    pub observers: serde_json::Value,
}

fn snapshot_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("bin"))
}

fn describe(gs: &GridSpec) -> String {
    let n: Vec<String> = gs.n_cells.iter().map(|v| v.to_string()).collect();
    let k: Vec<&str> = gs.axis_kinds.iter().map(|k| k.as_str()).collect();
    format!("{} cells [{}] lengths {:?}", n.join("x"), k.join(", "), gs.lengths)
}

/// Binary little-endian `f64` payload plus a JSON header next to it. The
/// header is written last, so its presence marks a complete snapshot.
pub fn write_snapshot(path: &Path, state: &SimState, epsilon: f64, observers: serde_json::Value) -> Result<()> {
    let (json, bin) = snapshot_paths(path);
    let grid = state.u.grid();
    let mut shapes: Vec<[usize; 3]> = state.u.comps.iter().map(|c| c.shape).collect();
    shapes.push(state.p.values.shape);
    let mut bytes = Vec::new();
    for v in state.u.comps.iter().flat_map(|c| c.data.iter()).chain(state.p.data()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(&bin, &bytes)?;
    let header = SnapshotHeader {
        format_version: SNAPSHOT_FORMAT_VERSION,
        grid: GridSpec::from_grid(grid),
        epsilon,
        t: state.t,
        step: state.step,
        shapes,
        observers,
    };
    write_json(&json, &header)
}

pub fn read_snapshot_header(path: &Path) -> Result<SnapshotHeader> {
    let (json, _) = snapshot_paths(path);
    let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let header: SnapshotHeader =
        serde_json::from_str(&text).map_err(|e| Error::Snapshot(format!("{}: {e}", json.display())))?;
    if header.format_version != SNAPSHOT_FORMAT_VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported format version {} (expected {SNAPSHOT_FORMAT_VERSION})",
            header.format_version
        )));
    }
    Ok(header)
}

/// Read a snapshot, checking it against `grid`.
pub fn read_snapshot_full(path: &Path, grid: &Arc<Grid>) -> Result<(SnapshotHeader, SimState)> {
    let header = read_snapshot_header(path)?;
    let expected = GridSpec::from_grid(grid);
    if header.grid != expected {
        return Err(Error::Snapshot(format!(
            "grid mismatch: snapshot has {}, expected {}",
            describe(&header.grid),
            describe(&expected)
        )));
    }
    let (_, bin) = snapshot_paths(path);
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let total: usize = header.shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if bytes.len() != 8 * total {
        return Err(Error::Snapshot(format!("payload has {} bytes, header implies {}", bytes.len(), 8 * total)));
    }
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let d = grid.dim();
    if header.shapes.len() != d + 1 {
        return Err(Error::Snapshot(format!("expected {} arrays, header lists {}", d + 1, header.shapes.len())));
    }
    let mut comps = Vec::with_capacity(d);
    for s in &header.shapes[..d] {
        comps.push(values.by_ref().take(s.iter().product()).collect::<Vec<f64>>());
    }
    let u = VelocityField::from_components(grid, comps)?;
    let mut p = ScalarField::from_vec(grid, values.collect())?;
    p.mean_zero = true;
    let state = SimState { t: header.t, step: header.step, u, p };
    Ok((header, state))
}

pub fn read_snapshot(path: &Path, grid: &Arc<Grid>) -> Result<SimState> {
    read_snapshot_full(path, grid).map(|(_, s)| s)
}

pub fn snapshot_name(step: u64) -> String {
    format!("snapshot_{step:08}")
}
