//! Runs at increasing ceilings, the stabilization table between them, and the
//! evolving domain `Ω_t = {u < L - 2}` with its measure boundary and components.

use std::collections::VecDeque;

use serde::Serialize;

use crate::curvature::CurvatureFunctionSpec;
use crate::error::{FlowError, Result};
use crate::grid::Grid;
use crate::solver::{initialize, run, InitialData, RunResult, Snapshot, SnapshotObserver, StepperConfig};

/// Height below the ceiling that defines the evolving domain.
pub const DOMAIN_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Serialize)]
pub struct LadderConfig {
    pub l_values: Vec<f64>,
    /// Relative to the smaller ceiling of each pair.
    pub stabilization_tol: f64,
}

impl LadderConfig {
    pub fn doubling(l0: f64) -> Self {
        Self { l_values: vec![l0, 2.0 * l0, 4.0 * l0], stabilization_tol: 1e-3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_values.is_empty() {
            return Err(FlowError::Config("ladder needs at least one ceiling".into()));
        }
        if self.l_values.iter().any(|&l| !(l >= 4.0) || !l.is_finite()) {
            return Err(FlowError::Config(format!("ladder ceilings must be finite and >= 4, got {:?}", self.l_values)));
        }
        if self.l_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FlowError::Config(format!("ladder ceilings must increase strictly, got {:?}", self.l_values)));
        }
        if !(self.stabilization_tol > 0.0) {
            return Err(FlowError::Config("stabilization_tol must be positive".into()));
        }
        Ok(())
    }
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self::doubling(20.0)
    }
}

/// Initializes with ceiling `L` and runs the Dirichlet problem.
pub fn solve_dirichlet(
    u0: &InitialData,
    ceiling: f64,
    spec: &CurvatureFunctionSpec,
    cfg: &StepperConfig,
    observers: &mut [&mut dyn SnapshotObserver],
) -> Result<RunResult> {
    let state = initialize(u0, ceiling, cfg, spec)?;
    run(state, spec, cfg, observers)
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilizationRow {
    pub l_small: f64,
    pub l_big: f64,
    /// `(t, max |u^small - u^big|)` over `{u^big < l_small - 2}` at common snapshot times.
    pub series: Vec<(f64, f64)>,
    pub max_diff: f64,
    pub tolerance: f64,
    pub stabilized: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderResult {
    pub runs: Vec<RunResult>,
    pub table: Vec<StabilizationRow>,
}

impl LadderResult {
    pub fn stabilized(&self) -> bool {
        self.table.iter().all(|r| r.stabilized)
    }

    pub fn finest(&self) -> &RunResult {
        self.runs.last().expect("ladder has at least one run")
    }
}

pub fn ladder_run(
    u0: &InitialData,
    ladder: &LadderConfig,
    spec: &CurvatureFunctionSpec,
    cfg: &StepperConfig,
) -> Result<LadderResult> {
    ladder.validate()?;
    let mut runs = Vec::with_capacity(ladder.l_values.len());
    for &l in &ladder.l_values {
        runs.push(solve_dirichlet(u0, l, spec, cfg, &mut [])?);
    }
    let table = runs
        .windows(2)
        .map(|pair| stabilization_row(&pair[0], &pair[1], ladder.stabilization_tol))
        .collect();
    Ok(LadderResult { runs, table })
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

pub fn stabilization_row(small: &RunResult, big: &RunResult, tol: f64) -> StabilizationRow {
    let level = small.ceiling - DOMAIN_MARGIN;
    let mut series = Vec::new();
    for sa in &small.snapshots {
        let Some(sb) = big.snapshots.iter().find(|s| same_time(s.t, sa.t)) else { continue };
        let diff = sa
            .u
            .iter()
            .zip(&sb.u)
            .filter(|(_, b)| **b < level)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        series.push((sa.t, diff));
    }
    let max_diff = series.iter().map(|s| s.1).fold(0.0_f64, f64::max);
    let tolerance = tol * small.ceiling;
    StabilizationRow {
        l_small: small.ceiling,
        l_big: big.ceiling,
        series,
        max_diff,
        tolerance,
        stabilized: max_diff <= tolerance,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainSlice {
    pub t: f64,
    pub inside: Vec<bool>,
    pub boundary_cells: Vec<bool>,
    /// Component label per node, `0` outside; labels start at 1, largest first.
    pub labels: Vec<u32>,
    pub component_count: usize,
    /// Node count per component, in label order.
    pub component_sizes: Vec<usize>,
}

/// Labels face-connected components of `mask`. Labels start at 1 and are
/// ordered by size (descending), then by smallest node index.
pub fn label_components(grid: &Grid, mask: &[bool]) -> (Vec<u32>, usize) {
    let (labels, sizes) = label_with_sizes(grid, mask);
    (labels, sizes.len())
}

fn label_with_sizes(grid: &Grid, mask: &[bool]) -> (Vec<u32>, Vec<usize>) {
    let n = grid.len();
    let mut raw = vec![u32::MAX; n];
    let mut comps: Vec<(usize, usize)> = Vec::new(); // (size, seed)
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if !mask[seed] || raw[seed] != u32::MAX {
            continue;
        }
        let id = comps.len() as u32;
        raw[seed] = id;
        queue.push_back(seed);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            for j in grid.face_neighbours(i) {
                if mask[j] && raw[j] == u32::MAX {
                    raw[j] = id;
                    queue.push_back(j);
                }
            }
        }
        comps.push((size, seed));
    }
    let mut order: Vec<usize> = (0..comps.len()).collect();
    order.sort_by(|&a, &b| comps[b].0.cmp(&comps[a].0).then(comps[a].1.cmp(&comps[b].1)));
    let mut relabel = vec![0u32; comps.len()];
    for (rank, &c) in order.iter().enumerate() {
        relabel[c] = rank as u32 + 1;
    }
    let labels = raw.iter().map(|&r| if r == u32::MAX { 0 } else { relabel[r as usize] }).collect();
    let sizes = order.iter().map(|&c| comps[c].0).collect();
    (labels, sizes)
}

/// Offsets of the open ball of radius `2h` around a node, as per-axis steps.
fn ball_offsets(dim: usize) -> Vec<[isize; 3]> {
    let mut out = Vec::new();
    let r = if dim >= 2 { -1..=1 } else { 0..=0 };
    let s = if dim >= 3 { -1..=1 } else { 0..=0 };
    for a in -1..=1isize {
        for b in r.clone() {
            for c in s.clone() {
                let o = [a, b, c];
                let norm: isize = o.iter().map(|v| v * v).sum();
                if norm > 0 && norm < 4 {
                    out.push(o);
                }
            }
        }
    }
    // axis steps of length 2 have |o|² = 4 and lie on the sphere, not inside it
    out
}

/// `inside = {u < L - 2}`; a node is a boundary cell when its open `2h`-ball
/// (clipped to the grid) holds both inside and outside nodes.
pub fn extract_domain(grid: &Grid, snapshot: &Snapshot, ceiling: f64) -> DomainSlice {
    let level = ceiling - DOMAIN_MARGIN;
    let inside: Vec<bool> = snapshot.u.iter().map(|&v| v < level).collect();
    let offsets = ball_offsets(grid.dim);
    let d = grid.dim;
    let boundary_cells = (0..grid.len())
        .map(|idx| {
            let mi = grid.multi_index(idx);
            let mut has_in = inside[idx];
            let mut has_out = !inside[idx];
            for o in &offsets {
                let mut nb = [0usize; 3];
                let mut ok = true;
                for k in 0..d {
                    let v = mi[k] as isize + o[k];
                    if v < 0 || v >= grid.nodes[k] as isize {
                        ok = false;
                        break;
                    }
                    nb[k] = v as usize;
                }
                if !ok {
                    continue;
                }
                if inside[grid.index_of(&nb[..d])] {
                    has_in = true;
                } else {
                    has_out = true;
                }
                if has_in && has_out {
                    return true;
                }
            }
            false
        })
        .collect();
    let (labels, sizes) = label_with_sizes(grid, &inside);
    DomainSlice {
        t: snapshot.t,
        inside,
        boundary_cells,
        labels,
        component_count: sizes.len(),
        component_sizes: sizes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineEntry {
    pub t: f64,
    pub components: usize,
    /// `cells · h^d` per component, largest first.
    pub volumes: Vec<f64>,
}

pub fn component_timeline(run: &RunResult) -> Vec<TimelineEntry> {
    let cell = run.grid.h.powi(run.grid.dim as i32);
    run.snapshots
        .iter()
        .map(|s| {
            let slice = extract_domain(&run.grid, s, run.ceiling);
            TimelineEntry {
                t: s.t,
                components: slice.component_count,
                volumes: slice.component_sizes.iter().map(|&n| n as f64 * cell).collect(),
            }
        })
        .collect()
}

/// First timeline entry with more components than the one before it.
pub fn first_split(timeline: &[TimelineEntry]) -> Option<f64> {
    timeline.windows(2).find(|w| w[1].components > w[0].components).map(|w| w[1].t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_sorted_by_size() {
        let grid = Grid::cube(2, 1.0, 7).unwrap();
        let mut mask = vec![false; grid.len()];
        // small blob at the top-left, larger one at the bottom-right
        mask[grid.index_of(&[1, 1])] = true;
        for i in 3..6 {
            for j in 3..6 {
                mask[grid.index_of(&[i, j])] = true;
            }
        }
        let (labels, n) = label_components(&grid, &mask);
        assert_eq!(n, 2);
        assert_eq!(labels[grid.index_of(&[4, 4])], 1);
        assert_eq!(labels[grid.index_of(&[1, 1])], 2);
        assert_eq!(labels[0], 0);
    }

    #[test]
    fn diagonal_contact_does_not_connect() {
        let grid = Grid::cube(2, 1.0, 5).unwrap();
        let mut mask = vec![false; grid.len()];
        mask[grid.index_of(&[1, 1])] = true;
        mask[grid.index_of(&[2, 2])] = true;
        assert_eq!(label_components(&grid, &mask).1, 2);
    }

    #[test]
    fn half_space_boundary_is_two_cells_thick() {
        let grid = Grid::cube(2, 1.0, 11).unwrap();
        let ceiling = 10.0;
        let u: Vec<f64> = (0..grid.len())
            .map(|i| if grid.multi_index(i)[0] < 5 { 0.0 } else { ceiling })
            .collect();
        let slice = extract_domain(&grid, &Snapshot { t: 0.0, u }, ceiling);
        for i in 0..grid.len() {
            let row = grid.multi_index(i)[0];
            assert_eq!(slice.boundary_cells[i], row == 4 || row == 5, "row {row}");
        }
        assert_eq!(slice.component_count, 1);
    }

    #[test]
    fn ladder_config_validation() {
        assert!(LadderConfig::doubling(20.0).validate().is_ok());
        assert!(LadderConfig { l_values: vec![20.0, 10.0], stabilization_tol: 1e-3 }.validate().is_err());
        assert!(LadderConfig { l_values: vec![2.0], stabilization_tol: 1e-3 }.validate().is_err());
        assert!(LadderConfig { l_values: vec![], stabilization_tol: 1e-3 }.validate().is_err());
    }
}
