//! Maximum-principle quantities evaluated on run snapshots.
//!
//! Interior estimates use nodes whose `3^d` stencil stays clear of the cap and
//! the boundary shell. Nodes whose curvature vector leaves the cone are
//! skipped and counted in `skipped_nodes`.

use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::CurvatureFunctionSpec;
use crate::error::{FlowError, Result};
use crate::geometry::shape_operator;
use crate::grid::{Grid, MAX_GRID_DIM};
use crate::solver::{self, FieldState, RunResult, StepperConfig};

pub const DEFAULT_MONOTONE_TOL: f64 = 1e-12;
pub const DEFAULT_MONITOR_TOL: f64 = 1e-2;
pub const DEFAULT_C2_CAP: f64 = 10.0;
pub const DEFAULT_HOLDER_TOL: f64 = 5e-2;
/// Fewer qualifying Hölder pairs than this makes the check vacuous.
pub const HOLDER_MIN_PAIRS: usize = 2;

#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    pub monitor: String,
    pub tolerance: f64,
    pub baseline: f64,
    pub series: Vec<(f64, f64)>,
    pub worst_violation: f64,
    pub passed: bool,
    /// Set when nothing was there to check; such a report passes but is flagged.
    pub vacuous: bool,
    /// Out-of-cone nodes skipped, summed over snapshots.
    pub skipped_nodes: usize,
    /// Space-time pairs checked (Hölder monitor only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qualifying_pairs: Option<usize>,
    /// Gradient bound `M` measured by the Hölder monitor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_m: Option<f64>,
}

impl MonitorReport {
    fn new(name: &str, tolerance: f64, baseline: f64, series: Vec<(f64, f64)>, worst: f64) -> Self {
        Self {
            monitor: name.to_string(),
            tolerance,
            baseline,
            series,
            worst_violation: worst,
            passed: worst <= tolerance,
            vacuous: false,
            skipped_nodes: 0,
            qualifying_pairs: None,
            measured_m: None,
        }
    }

    /// Passed with something actually checked.
    pub fn ok(&self) -> bool {
        self.passed && !self.vacuous
    }
}

/// Geometric quantities at one node of a snapshot.
#[derive(Debug, Clone, Copy)]
struct NodeSample {
    u: f64,
    w: f64,
    grad_norm: f64,
    hess_norm: f64,
    /// `f(κ)`, `None` outside the cone.
    f: Option<f64>,
}

fn monitored_nodes(field: &FieldState, spec: Option<&CurvatureFunctionSpec>) -> Vec<Option<NodeSample>> {
    let grid = &field.grid;
    let d = grid.dim;
    let offsets = grid.box_offsets();
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if grid.is_boundary(idx) || field.touches_cap(idx, &offsets) {
                return None;
            }
            let mut g = [0.0; MAX_GRID_DIM];
            let hess = grid.derivatives(&field.u, idx, &mut g);
            let grad_norm = g[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
            let w = (1.0 + grad_norm * grad_norm).sqrt();
            let f = spec.and_then(|spec| {
                let s = shape_operator(&g[..d], &hess).ok()?;
                spec.eval(s.kappa()).ok()
            });
            Some(NodeSample { u: field.u[idx], w, grad_norm, hess_norm: hess.norm_inf(), f })
        })
        .collect()
}

fn check_level(run: &RunResult, m: f64) -> Result<()> {
    if !(m < run.ceiling - 2.0) {
        return Err(FlowError::Config(format!("monitor level M = {m} must lie below L - 2 = {}", run.ceiling - 2.0)));
    }
    Ok(())
}

/// `max W (M - u)₊²`, which must not exceed its initial value.
pub fn monitor_gradient_bound(run: &RunResult, m: f64, tol: f64) -> Result<MonitorReport> {
    check_level(run, m)?;
    let series: Vec<(f64, f64)> = (0..run.snapshots.len())
        .map(|k| {
            let v = monitored_nodes(&run.state_at(k), None)
                .into_iter()
                .flatten()
                .filter(|s| s.u < m)
                .map(|s| s.w * (m - s.u).powi(2))
                .fold(0.0_f64, f64::max);
            (run.snapshots[k].t, v)
        })
        .collect();
    let baseline = series[0].1;
    let worst = relative_excess(&series, baseline);
    let mut r = MonitorReport::new("gradient_bound", tol, baseline, series, worst);
    r.vacuous = baseline == 0.0;
    Ok(r)
}

fn relative_excess(series: &[(f64, f64)], baseline: f64) -> f64 {
    series
        .iter()
        .map(|&(_, v)| if baseline > 0.0 { v / baseline - 1.0 } else if v > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0_f64, f64::max)
}

/// `min F/(M - u)` over `{u < M}`, which must not drop below its initial value.
pub fn monitor_speed_lower(run: &RunResult, m: f64, spec: &CurvatureFunctionSpec, tol: f64) -> Result<MonitorReport> {
    check_level(run, m)?;
    let mut skipped = 0;
    let mut series = Vec::with_capacity(run.snapshots.len());
    for k in 0..run.snapshots.len() {
        let mut v = f64::INFINITY;
        for s in monitored_nodes(&run.state_at(k), Some(spec)).into_iter().flatten().filter(|s| s.u < m) {
            match s.f {
                Some(f) => v = v.min(f / (m - s.u)),
                None => skipped += 1,
            }
        }
        series.push((run.snapshots[k].t, v));
    }
    let baseline = series[0].1;
    let worst = if baseline.is_finite() {
        series
            .iter()
            .filter(|s| s.1.is_finite())
            .map(|&(_, v)| 1.0 - v / baseline)
            .fold(0.0_f64, f64::max)
    } else {
        0.0
    };
    let mut r = MonitorReport::new("speed_lower", tol, baseline, series, worst);
    r.vacuous = !baseline.is_finite();
    r.skipped_nodes = skipped;
    Ok(r)
}

/// `max ‖D²u‖_∞ (M - u)` over `{u < M}`, bounded by `cap` times its initial value.
/// `‖·‖_∞` is the maximum absolute row sum.
pub fn monitor_c2_bound(run: &RunResult, m: f64, cap: f64) -> Result<MonitorReport> {
    check_level(run, m)?;
    let series: Vec<(f64, f64)> = (0..run.snapshots.len())
        .map(|k| {
            let v = monitored_nodes(&run.state_at(k), None)
                .into_iter()
                .flatten()
                .filter(|s| s.u < m)
                .map(|s| s.hess_norm * (m - s.u))
                .fold(0.0_f64, f64::max);
            (run.snapshots[k].t, v)
        })
        .collect();
    let baseline = series[0].1;
    let worst = series
        .iter()
        .map(|&(_, v)| if baseline > 0.0 { v / baseline } else if v > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0_f64, f64::max);
    let mut r = MonitorReport::new("c2_bound", cap, baseline, series, worst);
    r.vacuous = baseline == 0.0;
    Ok(r)
}

/// With `a = min_{t=0} ν/2` over monitored nodes, `max F/(ν - a)` must not
/// exceed its initial value and `min F` must stay positive.
pub fn monitor_f_ratio(run: &RunResult, spec: &CurvatureFunctionSpec, tol: f64) -> Result<MonitorReport> {
    let samples: Vec<Vec<NodeSample>> = (0..run.snapshots.len())
        .map(|k| monitored_nodes(&run.state_at(k), Some(spec)).into_iter().flatten().collect())
        .collect();
    let a = 0.5 * samples[0].iter().map(|s| 1.0 / s.w).fold(f64::INFINITY, f64::min);
    let mut skipped = 0;
    let mut min_f_ok = true;
    let mut series = Vec::with_capacity(samples.len());
    for (k, snap) in samples.iter().enumerate() {
        let mut v = 0.0_f64;
        for s in snap {
            match s.f {
                Some(f) => {
                    if !(f > 0.0) {
                        min_f_ok = false;
                    }
                    let gap = 1.0 / s.w - a;
                    v = v.max(if gap > 0.0 { f / gap } else { f64::INFINITY });
                }
                None => skipped += 1,
            }
        }
        series.push((run.snapshots[k].t, v));
    }
    let baseline = series[0].1;
    let worst = if min_f_ok { relative_excess(&series, baseline) } else { f64::INFINITY };
    let mut r = MonitorReport::new("f_ratio", tol, baseline, series, worst);
    r.vacuous = !a.is_finite();
    r.skipped_nodes = skipped;
    Ok(r)
}

/// `√2 (M + 1)`.
pub fn holder_threshold(m: f64) -> f64 {
    2.0_f64.sqrt() * (m + 1.0)
}

/// Hölder-in-time bound for `v = u - M_h`. `M` is the largest `|Dv|` over
/// `{v <= 0}` in the whole run; pairs of snapshots with `|t₁ - t₂| <= 1/(8M²)`
/// are compared at nodes where `v(x, t₁) <= -1`.
pub fn monitor_holder(run: &RunResult, m_h: f64, tol: f64) -> Result<MonitorReport> {
    if run.snapshots.len() < 2 {
        return Err(FlowError::Config("the Hölder monitor needs at least two snapshots".into()));
    }
    check_level(run, m_h)?;
    let mut m = 0.0_f64;
    for k in 0..run.snapshots.len() {
        for s in monitored_nodes(&run.state_at(k), None).into_iter().flatten() {
            if s.u <= m_h {
                m = m.max(s.grad_norm);
            }
        }
    }
    let window = 1.0 / (8.0 * m * m);
    let threshold = holder_threshold(m);
    let grid = &run.grid;
    let offsets = grid.box_offsets();
    let mut pairs = 0usize;
    let mut series = Vec::new();
    let mut worst_ratio = 0.0_f64;
    for i in 0..run.snapshots.len() {
        let s1 = &run.snapshots[i];
        let state = run.state_at(i);
        let mut best = 0.0_f64;
        let mut any = false;
        for (j, s2) in run.snapshots.iter().enumerate() {
            let dt = (s1.t - s2.t).abs();
            if j == i || dt > window || dt == 0.0 {
                continue;
            }
            for idx in 0..grid.len() {
                if grid.is_boundary(idx) || state.touches_cap(idx, &offsets) || s1.u[idx] - m_h > -1.0 {
                    continue;
                }
                pairs += 1;
                any = true;
                best = best.max((s1.u[idx] - s2.u[idx]).abs() / dt.sqrt());
            }
        }
        if any {
            series.push((s1.t, best));
            worst_ratio = worst_ratio.max(best / threshold - 1.0);
        }
    }
    let mut r = MonitorReport::new("holder", tol, threshold, series, worst_ratio);
    r.qualifying_pairs = Some(pairs);
    r.measured_m = Some(m);
    if pairs < HOLDER_MIN_PAIRS {
        r.vacuous = true;
        r.passed = true;
    }
    Ok(r)
}

/// [`monitor_holder`] on the stored snapshots; when that finds fewer than
/// `min_pairs` pairs, short segments restarted from the snapshots `starts` are
/// re-run with snapshot spacing half the Hölder window and checked as well.
pub fn monitor_holder_refined(
    run: &RunResult,
    spec: &CurvatureFunctionSpec,
    cfg: &StepperConfig,
    m_h: f64,
    tol: f64,
    starts: &[usize],
    min_pairs: usize,
) -> Result<MonitorReport> {
    let mut report = monitor_holder(run, m_h, tol)?;
    if report.qualifying_pairs.unwrap_or(0) >= min_pairs {
        return Ok(report);
    }
    let m = report.measured_m.unwrap_or(0.0);
    if !(m > 0.0) {
        return Ok(report);
    }
    let window = 1.0 / (8.0 * m * m);
    let mut pairs = report.qualifying_pairs.unwrap_or(0);
    for &k in starts {
        if k >= run.snapshots.len() {
            return Err(FlowError::Config(format!("Hölder restart snapshot {k} does not exist")));
        }
        let state = run.state_at(k);
        let seg_cfg = StepperConfig { t_end: state.t + 4.0 * window, snapshot_every: 0.5 * window, ..cfg.clone() };
        let seg = solver::run(state, spec, &seg_cfg, &mut [])?;
        if seg.snapshots.len() < 2 || seg.snapshots.iter().all(|s| run.snapshots[k].t == s.t) {
            continue;
        }
        let r = monitor_holder(&seg, m_h, tol)?;
        pairs += r.qualifying_pairs.unwrap_or(0);
        report.series.extend(r.series);
        report.worst_violation = report.worst_violation.max(r.worst_violation);
    }
    report.monitor = "holder_refined".into();
    report.qualifying_pairs = Some(pairs);
    report.passed = report.worst_violation <= tol;
    report.vacuous = pairs < min_pairs;
    Ok(report)
}

/// `max(uᵃ - uᵇ)` at common snapshot times, allowed up to `10 L/R² · h²`.
pub fn monitor_comparison(a: &RunResult, b: &RunResult) -> Result<MonitorReport> {
    if a.grid != b.grid || a.ceiling != b.ceiling || a.freeze_level != b.freeze_level {
        return Err(FlowError::Config("comparison runs must share grid, ceiling and cutoff".into()));
    }
    let grid = &a.grid;
    let r_box = grid.half_width[..grid.dim].iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 10.0 * a.ceiling / (r_box * r_box) * grid.h * grid.h;
    let mut series = Vec::new();
    for sa in &a.snapshots {
        let Some(sb) = b.snapshots.iter().find(|s| (s.t - sa.t).abs() <= 1e-9 * sa.t.abs().max(1.0)) else {
            continue;
        };
        let v = sa.u.iter().zip(&sb.u).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
        series.push((sa.t, v));
    }
    if series.is_empty() {
        return Err(FlowError::Config("comparison runs share no snapshot times".into()));
    }
    let worst = series.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(MonitorReport::new("comparison", tol, series[0].1, series, worst))
}

/// Most negative per-step change at nodes below `L - ε`, allowed down to `-tol`.
pub fn monitor_monotone(run: &RunResult, tol: f64) -> MonitorReport {
    MonitorReport::new("monotone", tol, 0.0, vec![], 0.0 - run.worst_descent)
}

/// The grid whose nodes a report refers to; useful for re-evaluation from files.
pub fn same_layout(a: &Grid, b: &Grid) -> bool {
    a == b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{Snapshot, StopReason};

    fn synthetic(grid: Grid, ceiling: f64, frames: Vec<(f64, Vec<f64>)>) -> RunResult {
        RunResult {
            grid,
            ceiling,
            freeze_level: ceiling,
            hold_slope: 0.5,
            escape_margin: 2.0,
            snapshots: frames.into_iter().map(|(t, u)| Snapshot { t, u }).collect(),
            stop: StopReason::Completed,
            escape_time: None,
            steps: 0,
            worst_descent: 0.0,
            max_held: 0,
            held_node_steps: 0,
            umin_series: vec![],
        }
    }

    fn bowl(grid: &Grid) -> Vec<f64> {
        grid.sample(|x| 0.5 * (x[0] * x[0] + x[1] * x[1]))
    }

    #[test]
    fn frozen_bowl_values() {
        let grid = Grid::cube(2, 1.0, 21).unwrap();
        let u = bowl(&grid);
        let run = synthetic(grid.clone(), 10.0, vec![(0.0, u.clone()), (0.1, u.clone())]);
        let m = 1.0;
        let g = monitor_gradient_bound(&run, m, 1e-2).unwrap();
        // brute force over the same node set
        let expect = (0..grid.len())
            .filter(|&i| !grid.is_boundary(i) && u[i] < m)
            .filter(|&i| grid.box_neighbourhood(i).iter().all(|&j| !grid.is_boundary(j)))
            .map(|i| {
                let r2 = grid.radius_sq(i);
                (1.0 + r2).sqrt() * (m - 0.5 * r2).powi(2)
            })
            .fold(0.0_f64, f64::max);
        assert!((g.baseline - expect).abs() < 1e-9, "{} vs {expect}", g.baseline);
        assert!(g.passed && g.worst_violation == 0.0);
        let c2 = monitor_c2_bound(&run, m, DEFAULT_C2_CAP).unwrap();
        // D²u = I has row sum 1, so the value is max (M - u) = M at the centre
        assert!((c2.baseline - 1.0).abs() < 1e-9);
        assert!(c2.passed);
    }

    #[test]
    fn empty_sublevel_is_vacuous() {
        let grid = Grid::cube(2, 1.0, 9).unwrap();
        let u = vec![10.0; grid.len()];
        let run = synthetic(grid, 10.0, vec![(0.0, u.clone()), (0.1, u)]);
        let g = monitor_gradient_bound(&run, 5.0, 1e-2).unwrap();
        assert!(g.passed && g.vacuous);
        let s = monitor_speed_lower(&run, 5.0, &CurvatureFunctionSpec::mean(2), 1e-2).unwrap();
        assert!(s.passed && s.vacuous);
    }

    #[test]
    fn growing_gradient_fails() {
        let grid = Grid::cube(2, 1.0, 21).unwrap();
        let a = bowl(&grid);
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v).collect();
        let run = synthetic(grid, 10.0, vec![(0.0, a), (0.1, b)]);
        let g = monitor_gradient_bound(&run, 5.0, 1e-2).unwrap();
        assert!(!g.passed);
    }

    #[test]
    fn f_ratio_flat_gradient_arithmetic() {
        // constant Hessian I and gradient ~0 at the centre: F = 1, ν = 1
        let grid = Grid::cube(2, 0.1, 5).unwrap();
        let u = bowl(&grid);
        let run = synthetic(grid, 10.0, vec![(0.0, u.clone()), (0.1, u)]);
        let r = monitor_f_ratio(&run, &CurvatureFunctionSpec::mean(2), 1e-2).unwrap();
        assert!(r.passed);
        assert!(r.baseline > 0.0);
    }

    #[test]
    fn holder_threshold_example() {
        assert_eq!(holder_threshold(1.0), 2.0 * 2.0_f64.sqrt());
    }

    #[test]
    fn stationary_field_has_zero_holder_quotient() {
        let grid = Grid::cube(2, 1.0, 21).unwrap();
        let u: Vec<f64> = grid.sample(|x| 0.02 * (x[0] * x[0] + x[1] * x[1]));
        let frames = (0..5).map(|k| (k as f64 * 0.01, u.clone())).collect();
        let run = synthetic(grid, 10.0, frames);
        let r = monitor_holder(&run, 2.0, DEFAULT_HOLDER_TOL).unwrap();
        assert!(r.qualifying_pairs.unwrap() > 0);
        assert!(!r.vacuous && r.passed);
        assert!(r.series.iter().all(|s| s.1 == 0.0));
    }

    #[test]
    fn comparison_identical_is_zero() {
        let grid = Grid::cube(2, 1.0, 9).unwrap();
        let u = bowl(&grid);
        let a = synthetic(grid.clone(), 10.0, vec![(0.0, u.clone())]);
        let r = monitor_comparison(&a, &a.clone()).unwrap();
        assert_eq!(r.worst_violation, 0.0);
        assert!(r.passed);
        let other = synthetic(Grid::cube(2, 1.0, 11).unwrap(), 10.0, vec![(0.0, vec![0.0; 121])]);
        assert!(monitor_comparison(&a, &other).is_err());
    }
}
