//! Snapshot CSVs, domain masks, JSON reports and the hashed output manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{FlowError, Result};
use crate::grid::Grid;
use crate::ladder::DomainSlice;
use crate::radial::RadialRunResult;
use crate::solver::{RunResult, Snapshot, StepperConfig, StopReason};

/// `# t=<t> h=<h> L=<L>` followed by `x_1,...,x_d,u` per node.
pub fn snapshot_csv(grid: &Grid, snapshot: &Snapshot, ceiling: f64) -> String {
    let mut out = String::with_capacity(grid.len() * 32);
    let _ = writeln!(out, "# t={} h={} L={}", snapshot.t, grid.h, ceiling);
    for (idx, u) in snapshot.u.iter().enumerate() {
        let x = grid.coords(idx);
        for xk in &x[..grid.dim] {
            let _ = write!(out, "{xk},");
        }
        let _ = writeln!(out, "{u}");
    }
    out
}

#[derive(Debug, Clone)]
pub struct LoadedSnapshot {
    pub grid: Grid,
    pub ceiling: f64,
    pub snapshot: Snapshot,
}

fn header_value(header: &str, key: &str) -> Result<f64> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .ok_or_else(|| FlowError::Config(format!("snapshot header lacks '{key}='")))?
        .parse()
        .map_err(|e| FlowError::Config(format!("bad '{key}' in snapshot header: {e}")))
}

/// Parses a snapshot written by [`snapshot_csv`]; the grid is rebuilt from the
/// coordinate extents and `h`.
pub fn parse_snapshot_csv(text: &str) -> Result<LoadedSnapshot> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .filter(|l| l.starts_with('#'))
        .ok_or_else(|| FlowError::Config("snapshot CSV must start with a '# t=... h=... L=...' header".into()))?;
    let t = header_value(header, "t")?;
    let h = header_value(header, "h")?;
    let ceiling = header_value(header, "L")?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| FlowError::Config(format!("snapshot row {}: {e}", n + 2)))?;
        if rows.first().is_some_and(|r| r.len() != row.len()) || row.len() < 2 {
            return Err(FlowError::Config(format!("snapshot row {} has {} columns", n + 2, row.len())));
        }
        rows.push(row);
    }
    let d = rows.first().map(|r| r.len() - 1).ok_or_else(|| FlowError::Config("snapshot has no rows".into()))?;
    let mut half = vec![0.0; d];
    for r in &rows {
        for k in 0..d {
            half[k] = f64::max(half[k], r[k].abs());
        }
    }
    let nodes: Vec<usize> = half.iter().map(|r| (2.0 * r / h).round() as usize + 1).collect();
    let grid = Grid::new(&half, &nodes)?;
    if grid.len() != rows.len() {
        return Err(FlowError::Config(format!("snapshot has {} rows for a {} node grid", rows.len(), grid.len())));
    }
    let mut u = vec![f64::NAN; grid.len()];
    for r in &rows {
        let idx = grid
            .nearest(&r[..d])
            .ok_or_else(|| FlowError::Config(format!("snapshot point {:?} is off the grid", &r[..d])))?;
        u[idx] = r[d];
    }
    if u.iter().any(|v| v.is_nan()) {
        return Err(FlowError::Config("snapshot does not cover every grid node".into()));
    }
    Ok(LoadedSnapshot { grid, ceiling, snapshot: Snapshot { t, u } })
}

/// Radial profile as `# t=.. h=.. L=..` with rows `r,u`.
pub fn radial_snapshot_csv(run: &RadialRunResult, k: usize) -> String {
    let s = &run.snapshots[k];
    let mut out = String::new();
    let _ = writeln!(out, "# t={} h={} L={}", s.t, run.radii[1], run.ceiling);
    for (r, u) in run.radii.iter().zip(&s.u) {
        let _ = writeln!(out, "{r},{u}");
    }
    out
}

/// `x_1,...,x_d,inside,boundary` with 0/1 flags.
pub fn domain_mask_csv(grid: &Grid, slice: &DomainSlice) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# t={} h={}", slice.t, grid.h);
    for idx in 0..grid.len() {
        let x = grid.coords(idx);
        for xk in &x[..grid.dim] {
            let _ = write!(out, "{xk},");
        }
        let _ = writeln!(out, "{},{}", slice.inside[idx] as u8, slice.boundary_cells[idx] as u8);
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Writes files under one directory and remembers their hashes.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| FlowError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root, entries: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| FlowError::Io(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, contents).map_err(|e| FlowError::Io(format!("{}: {e}", path.display())))?;
        self.entries.retain(|e| e.path != rel);
        self.entries.push(ManifestEntry { path: rel.to_string(), sha256: sha256_hex(contents), bytes: contents.len() });
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| FlowError::Io(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Writes every snapshot of a grid run as `snapshots/snap_<k>.csv`.
    pub fn write_run_snapshots(&mut self, run: &RunResult) -> Result<()> {
        for (k, s) in run.snapshots.iter().enumerate() {
            self.write(&format!("snapshots/snap_{k:05}.csv"), snapshot_csv(&run.grid, s, run.ceiling).as_bytes())?;
        }
        Ok(())
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish<T: Serialize>(mut self, summary: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Manifest<'a, T: Serialize> {
            summary: &'a T,
            files: &'a [ManifestEntry],
        }
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest { summary, files: &self.entries };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| FlowError::Io(e.to_string()))?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| FlowError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Loads every `*.csv` snapshot in `dir` (sorted by file name) into a run
/// skeleton for re-evaluating monitors. Cutoff and hold settings come from
/// `cfg`; `worst_descent` is measured between consecutive snapshots.
pub fn load_snapshot_dir(dir: &Path, cfg: &StepperConfig) -> Result<RunResult> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| FlowError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(FlowError::Config(format!("no snapshot CSVs in {}", dir.display())));
    }
    let mut loaded = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).map_err(|e| FlowError::Io(format!("{}: {e}", p.display())))?;
        loaded.push(parse_snapshot_csv(&text).map_err(|e| FlowError::Config(format!("{}: {e}", p.display())))?);
    }
    let first = &loaded[0];
    if loaded.iter().any(|l| l.grid != first.grid || l.ceiling != first.ceiling) {
        return Err(FlowError::Config("snapshots disagree on grid or ceiling".into()));
    }
    let grid = first.grid.clone();
    let ceiling = first.ceiling;
    let snapshots: Vec<Snapshot> = loaded.into_iter().map(|l| l.snapshot).collect();
    if snapshots.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(FlowError::Config("snapshot times must increase with file name".into()));
    }
    let below = ceiling - cfg.epsilon(ceiling);
    let worst_descent = snapshots
        .windows(2)
        .flat_map(|w| w[0].u.iter().zip(&w[1].u).filter(|(a, _)| **a < below).map(|(a, b)| b - a))
        .fold(0.0_f64, f64::min);
    Ok(RunResult {
        grid,
        ceiling,
        freeze_level: cfg.freeze_level(ceiling),
        hold_slope: cfg.steep_hold_slope,
        escape_margin: cfg.escape_margin,
        umin_series: snapshots
            .iter()
            .map(|s| (s.t, s.u.iter().cloned().fold(f64::INFINITY, f64::min)))
            .collect(),
        snapshots,
        stop: StopReason::Completed,
        escape_time: None,
        steps: 0,
        worst_descent,
        max_held: 0,
        held_node_steps: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let grid = Grid::new(&[1.0, 0.5], &[5, 3]).unwrap();
        let u = grid.sample(|x| x[0] * 0.1 + x[1] * x[1] + 1.0 / 3.0);
        let s = Snapshot { t: 0.125, u };
        let text = snapshot_csv(&grid, &s, 40.0);
        assert!(text.starts_with("# t=0.125 h=0.5 L=40\n"));
        let back = parse_snapshot_csv(&text).unwrap();
        assert_eq!(back.grid, grid);
        assert_eq!(back.ceiling, 40.0);
        assert_eq!(back.snapshot.t, 0.125);
        assert_eq!(back.snapshot.u, s.u);
    }

    #[test]
    fn malformed_snapshots_are_rejected() {
        assert!(parse_snapshot_csv("0,0,1\n").is_err());
        assert!(parse_snapshot_csv("# t=0 h=1\n0,0,1\n").is_err());
        assert!(parse_snapshot_csv("# t=0 h=1 L=3\n0,0,1\n1,x,2\n").is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path().join("o")).unwrap();
        out.write("b.txt", b"two").unwrap();
        out.write("a.txt", b"one").unwrap();
        let path = out.finish(&"summary").unwrap();
        let text = fs::read_to_string(path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let files = v["files"].as_array().unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(files[0]["path"], "a.txt");
        assert_eq!(files[0]["sha256"], sha256_hex(b"one"));
    }
}
