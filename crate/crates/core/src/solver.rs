//! Explicit time stepping of the Dirichlet problem
//! `u_t = W·F(γ D²u γ / W)` on a box, `u = L` on the boundary shell,
//! `u(·,0) = min_ε{u0, L}`.

use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::CurvatureFunctionSpec;
use crate::error::{FlowError, Result};
use crate::geometry::{admissibility_check, shape_operator, speed_and_linearization, AdmissibilityClass};
use crate::grid::{Grid, MAX_GRID_DIM};
use crate::linalg::MAX_DIM;

/// Smooth monotone surrogate `g` for `min{x, 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CutoffBlend {
    /// C¹: `g(x) = -(1-x)²/4` on `(-1, 1)`.
    #[default]
    Quadratic,
    /// C²: `g(x) = x/2 - 3x²/8 + x⁴/16 - 3/16` on `(-1, 1)`.
    Quartic,
}

impl CutoffBlend {
    pub fn g(self, x: f64) -> f64 {
        if x <= -1.0 {
            return x;
        }
        if x >= 1.0 {
            return 0.0;
        }
        match self {
            CutoffBlend::Quadratic => -0.25 * (1.0 - x) * (1.0 - x),
            CutoffBlend::Quartic => {
                let x2 = x * x;
                0.5 * x - 0.375 * x2 + 0.0625 * x2 * x2 - 0.1875
            }
        }
    }

    pub fn g_prime(self, x: f64) -> f64 {
        if x <= -1.0 {
            return 1.0;
        }
        if x >= 1.0 {
            return 0.0;
        }
        match self {
            CutoffBlend::Quadratic => 0.5 * (1.0 - x),
            CutoffBlend::Quartic => 0.5 - 0.75 * x + 0.25 * x * x * x,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(CutoffBlend::Quadratic),
            "quartic" => Ok(CutoffBlend::Quartic),
            _ => Err(FlowError::Config(format!("unknown cutoff blend '{s}' (quadratic|quartic)"))),
        }
    }
}

/// `min_ε{a, b} = ε g((a-b)/ε) + b` with the quadratic blend.
pub fn min_eps_cutoff(a: f64, b: f64, eps: f64) -> f64 {
    min_eps_cutoff_with(CutoffBlend::Quadratic, a, b, eps)
}

pub fn min_eps_cutoff_with(blend: CutoffBlend, a: f64, b: f64, eps: f64) -> f64 {
    debug_assert!(eps > 0.0);
    if a == f64::INFINITY {
        return b;
    }
    eps * blend.g((a - b) / eps) + b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibilityMode {
    Strict,
    /// Adds `μ|x|²` to the initial data, `μ` growing by `mu_step`, until admissible.
    AutoBoost { mu_step: f64, max_boosts: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct StepperConfig {
    /// CFL safety factor in `(0, 1)`.
    pub sigma: f64,
    pub dt_min: f64,
    pub t_end: f64,
    pub snapshot_every: f64,
    /// Cutoff width as a fraction of the ceiling: `ε = epsilon_cutoff · L`.
    pub epsilon_cutoff: f64,
    pub blend: CutoffBlend,
    /// Passes of the `3^d` binomial smoothing kernel applied to `u0`.
    pub smoothing_passes: usize,
    pub admissibility: AdmissibilityMode,
    /// A node has escaped once `u >= L - escape_margin`.
    pub escape_margin: f64,
    /// Out-of-cone nodes with `h·|Du|` at or above this are held rather than rejected.
    /// Zero holds every out-of-cone node, i.e. the speed is extended by zero outside the cone.
    pub steep_hold_slope: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            sigma: 0.4,
            dt_min: 1e-12,
            t_end: 1.0,
            snapshot_every: 0.05,
            epsilon_cutoff: 0.05,
            blend: CutoffBlend::Quadratic,
            smoothing_passes: 1,
            admissibility: AdmissibilityMode::Strict,
            escape_margin: 2.0,
            steep_hold_slope: 0.5,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(FlowError::Config(format!("sigma must lie in (0,1), got {}", self.sigma)));
        }
        if !(self.dt_min > 0.0) {
            return Err(FlowError::Config("dt_min must be positive".into()));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(FlowError::Config("t_end must be finite and nonnegative".into()));
        }
        if !(self.snapshot_every > 0.0) {
            return Err(FlowError::Config("snapshot_every must be positive".into()));
        }
        if !(self.epsilon_cutoff > 0.0) {
            return Err(FlowError::Config("epsilon_cutoff must be positive".into()));
        }
        if !(self.escape_margin > 0.0) {
            return Err(FlowError::Config("escape_margin must be positive".into()));
        }
        if !(self.steep_hold_slope >= 0.0) {
            return Err(FlowError::Config("steep_hold_slope must be nonnegative".into()));
        }
        if let AdmissibilityMode::AutoBoost { mu_step, .. } = self.admissibility {
            if !(mu_step > 0.0) {
                return Err(FlowError::Config("auto_boost step must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn epsilon(&self, ceiling: f64) -> f64 {
        self.epsilon_cutoff * ceiling
    }

    /// Nodes at or above this value are treated as part of the flat cap.
    pub fn freeze_level(&self, ceiling: f64) -> f64 {
        ceiling + self.epsilon(ceiling) * self.blend.g(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// `u = L` on the shell.
    Ceiling,
    /// `u = 0` on the shell.
    Zero,
}

impl BoundaryCondition {
    pub fn value(self, ceiling: f64) -> f64 {
        match self {
            BoundaryCondition::Ceiling => ceiling,
            BoundaryCondition::Zero => 0.0,
        }
    }
}

/// Initial heights on a grid; `+∞` marks nodes where `u0` is undefined.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl InitialData {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FlowError::Config(format!(
                "initial data has {} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(FlowError::Config(format!("initial data is not finite at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.sample(f);
        Self::new(grid, values)
    }
}

#[derive(Debug, Clone)]
pub struct FieldState {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub t: f64,
    pub ceiling: f64,
    pub bc: BoundaryCondition,
    pub freeze_level: f64,
    /// See [`StepperConfig::steep_hold_slope`].
    pub hold_slope: f64,
}

impl FieldState {
    /// Wraps raw nodal values without any cutoff or validation.
    pub fn from_values(grid: Grid, u: Vec<f64>, ceiling: f64, freeze_level: f64) -> Self {
        let hold_slope = StepperConfig::default().steep_hold_slope;
        Self { grid, u, t: 0.0, ceiling, bc: BoundaryCondition::Ceiling, freeze_level, hold_slope }
    }

    /// Interior nodes strictly below the freeze level move; the rest are fixed.
    pub fn is_active(&self, idx: usize) -> bool {
        self.u[idx] < self.freeze_level && !self.grid.is_boundary(idx)
    }

    /// True when the `3^d` stencil box of `idx` reaches a fixed node (cap or shell).
    /// `offsets` comes from [`Grid::box_offsets`].
    pub fn touches_cap(&self, idx: usize, offsets: &[isize]) -> bool {
        if self.grid.is_boundary(idx) {
            return true;
        }
        offsets.iter().any(|&o| {
            let j = (idx as isize + o) as usize;
            self.u[j] >= self.freeze_level || self.grid.is_boundary(j)
        })
    }

    /// An out-of-cone node may be held when it touches the cap or its slope is
    /// under-resolved (`h·|Du| >= hold_slope`).
    pub fn may_hold(&self, idx: usize, grad: &[f64], offsets: &[isize]) -> bool {
        let slope = grad.iter().map(|v| v * v).sum::<f64>().sqrt() * self.grid.h;
        slope >= self.hold_slope || self.touches_cap(idx, offsets)
    }

    pub fn min_interior(&self) -> f64 {
        (0..self.grid.len())
            .filter(|&i| !self.grid.is_boundary(i))
            .map(|i| self.u[i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn escaped(&self, margin: f64) -> bool {
        let level = self.ceiling - margin;
        (0..self.grid.len()).filter(|&i| !self.grid.is_boundary(i)).all(|i| self.u[i] >= level)
    }
}

fn smooth_once(grid: &Grid, v: &[f64]) -> Vec<f64> {
    let mut cur = v.to_vec();
    for axis in 0..grid.dim {
        let s = grid.stride(axis);
        let mut next = cur.clone();
        for idx in 0..grid.len() {
            if grid.is_boundary(idx) {
                continue;
            }
            let (m, c, p) = (cur[idx - s], cur[idx], cur[idx + s]);
            next[idx] = if m.is_infinite() || c.is_infinite() || p.is_infinite() {
                f64::INFINITY
            } else {
                0.25 * m + 0.5 * c + 0.25 * p
            };
        }
        cur = next;
    }
    cur
}

/// Builds the initial state `min_ε{u0, L}`, checking the boundary precondition
/// `u0 >= L + 1` on the shell and admissibility of the result.
pub fn initialize(
    u0: &InitialData,
    ceiling: f64,
    cfg: &StepperConfig,
    spec: &CurvatureFunctionSpec,
) -> Result<FieldState> {
    initialize_with_bc(u0, ceiling, BoundaryCondition::Ceiling, cfg, spec)
}

pub fn initialize_with_bc(
    u0: &InitialData,
    ceiling: f64,
    bc: BoundaryCondition,
    cfg: &StepperConfig,
    spec: &CurvatureFunctionSpec,
) -> Result<FieldState> {
    cfg.validate()?;
    let grid = &u0.grid;
    if spec.dim != grid.dim {
        return Err(FlowError::Config(format!(
            "speed acts on {} curvatures but the grid has dimension {}",
            spec.dim, grid.dim
        )));
    }
    if !(ceiling > cfg.escape_margin) || !ceiling.is_finite() {
        return Err(FlowError::Config(format!("ceiling L = {ceiling} must exceed the escape margin")));
    }
    if let Some(idx) = (0..grid.len()).find(|&i| grid.is_boundary(i) && u0.values[i] < ceiling + 1.0) {
        let x = grid.coords(idx);
        return Err(FlowError::Config(format!(
            "u0 = {} < L + 1 = {} on the boundary shell at x = {:?}; the box half width {:?} is too small for L",
            u0.values[idx],
            ceiling + 1.0,
            &x[..grid.dim],
            &grid.half_width[..grid.dim]
        )));
    }

    let eps = cfg.epsilon(ceiling);
    let freeze = cfg.freeze_level(ceiling);
    let (mu_step, max_boosts) = match cfg.admissibility {
        AdmissibilityMode::Strict => (0.0, 0),
        AdmissibilityMode::AutoBoost { mu_step, max_boosts } => (mu_step, max_boosts),
    };
    let mut last_err = None;
    for boost in 0..=max_boosts {
        let mu = mu_step * boost as f64;
        let mut u: Vec<f64> = (0..grid.len())
            .map(|i| {
                if grid.is_boundary(i) {
                    return bc.value(ceiling);
                }
                min_eps_cutoff_with(cfg.blend, u0.values[i] + mu * grid.radius_sq(i), ceiling, eps)
            })
            .collect();
        for _ in 0..cfg.smoothing_passes {
            u = smooth_once(grid, &u);
        }
        for v in u.iter_mut() {
            if *v >= freeze {
                *v = ceiling;
            }
        }
        let state = FieldState {
            grid: grid.clone(),
            u,
            t: 0.0,
            ceiling,
            bc,
            freeze_level: freeze,
            hold_slope: cfg.steep_hold_slope,
        };
        let report = admissibility_check(spec, &state);
        if report.classification == AdmissibilityClass::Admissible {
            return Ok(state);
        }
        let v = &report.violations[0];
        last_err = Some(FlowError::Admissibility { node: v.node, t: 0.0, kappa: v.kappa.clone() });
    }
    Err(last_err.expect("at least one attempt"))
}

#[derive(Debug, Clone, Copy)]
enum NodeEval {
    Inactive,
    Active { speed: f64, trace: f64 },
    /// Out of the cone next to the cap or on an under-resolved slope: held in place for this step.
    Held,
    Outside { kappa: [f64; MAX_DIM] },
    Fault(&'static str),
}

fn eval_node(state: &FieldState, spec: &CurvatureFunctionSpec, idx: usize, offsets: &[isize]) -> NodeEval {
    if !state.is_active(idx) {
        return NodeEval::Inactive;
    }
    let grid = &state.grid;
    let d = grid.dim;
    let mut g = [0.0; MAX_GRID_DIM];
    let hess = grid.derivatives(&state.u, idx, &mut g);
    if g[..d].iter().any(|v| !v.is_finite()) {
        return NodeEval::Fault("non-finite gradient");
    }
    let s = match shape_operator(&g[..d], &hess) {
        Ok(s) => s,
        Err(_) => return NodeEval::Fault("eigensolver did not converge"),
    };
    match speed_and_linearization(spec, &s) {
        Ok(lin) if lin.speed.is_finite() => NodeEval::Active { speed: lin.speed, trace: lin.coeff.trace() },
        Ok(_) => NodeEval::Fault("non-finite speed"),
        Err(_) if s.kappa().iter().any(|k| k.is_nan()) => NodeEval::Fault("NaN curvature"),
        Err(_) if state.may_hold(idx, &g[..d], offsets) => NodeEval::Held,
        Err(_) => NodeEval::Outside { kappa: s.kappa },
    }
}

/// Per-node speeds `W·F` (zero at fixed nodes) and `max trace(γ ∂F/∂A γ)`.
struct Evaluation {
    speed: Vec<f64>,
    max_trace: f64,
    held: usize,
}

fn evaluate(state: &FieldState, spec: &CurvatureFunctionSpec) -> Result<Evaluation> {
    let offsets = state.grid.box_offsets();
    let evals: Vec<NodeEval> =
        (0..state.grid.len()).into_par_iter().map(|i| eval_node(state, spec, i, &offsets)).collect();
    let mut speed = vec![0.0; evals.len()];
    let mut max_trace = 0.0_f64;
    let mut held = 0usize;
    for (idx, e) in evals.iter().enumerate() {
        match *e {
            NodeEval::Inactive => {}
            NodeEval::Held => held += 1,
            NodeEval::Active { speed: s, trace } => {
                speed[idx] = s;
                max_trace = max_trace.max(trace);
            }
            NodeEval::Outside { kappa } => {
                return Err(FlowError::Admissibility { node: idx, t: state.t, kappa: kappa[..state.grid.dim].to_vec() })
            }
            NodeEval::Fault(what) => {
                return Err(FlowError::NumericalFault { node: idx, t: state.t, what: what.to_string() })
            }
        }
    }
    Ok(Evaluation { speed, max_trace, held })
}

fn cfl_dt(state: &FieldState, cfg: &StepperConfig, max_trace: f64) -> Result<f64> {
    if max_trace <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let h = state.grid.h;
    let dt = cfg.sigma * h * h / (2.0 * max_trace);
    if dt < cfg.dt_min {
        return Err(FlowError::Stiffness { t: state.t, dt, dt_min: cfg.dt_min });
    }
    Ok(dt)
}

/// `σ h² / (2 max trace C)`, capped at `t_end - t`.
pub fn stable_dt(state: &FieldState, spec: &CurvatureFunctionSpec, cfg: &StepperConfig) -> Result<f64> {
    let eval = evaluate(state, spec)?;
    let dt = cfl_dt(state, cfg, eval.max_trace)?;
    Ok(dt.min((cfg.t_end - state.t).max(0.0)))
}

fn apply(state: &FieldState, eval: &Evaluation, dt: f64, new_t: f64) -> FieldState {
    let ceiling = state.ceiling;
    let freeze = state.freeze_level;
    let bval = state.bc.value(ceiling);
    let grid = &state.grid;
    let u: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if grid.is_boundary(i) {
                return bval;
            }
            let old = state.u[i];
            if old >= freeze {
                return old;
            }
            let v = (old + dt * eval.speed[i]).min(ceiling);
            if v >= freeze {
                ceiling
            } else {
                v
            }
        })
        .collect();
    FieldState {
        grid: grid.clone(),
        u,
        t: new_t,
        ceiling,
        bc: state.bc,
        freeze_level: freeze,
        hold_slope: state.hold_slope,
    }
}

/// Forward Euler with `dt = min(CFL, t_end - t)`.
pub fn step(state: &FieldState, spec: &CurvatureFunctionSpec, cfg: &StepperConfig) -> Result<FieldState> {
    advance(state, spec, cfg, cfg.t_end).map(|(s, _)| s)
}

/// Number of moving nodes `step` would hold at zero speed.
pub fn held_nodes(state: &FieldState, spec: &CurvatureFunctionSpec) -> Result<usize> {
    evaluate(state, spec).map(|e| e.held)
}

/// One Euler step that does not pass `t_target`; lands exactly on it when the
/// CFL step would overshoot.
fn advance(
    state: &FieldState,
    spec: &CurvatureFunctionSpec,
    cfg: &StepperConfig,
    t_target: f64,
) -> Result<(FieldState, usize)> {
    let eval = evaluate(state, spec)?;
    let dt_cfl = cfl_dt(state, cfg, eval.max_trace)?;
    let remaining = (t_target - state.t).max(0.0);
    let (dt, new_t) = if dt_cfl >= remaining { (remaining, t_target) } else { (dt_cfl, state.t + dt_cfl) };
    Ok((apply(state, &eval, dt, new_t), eval.held))
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    Escaped,
    /// CFL step fell below `dt_min`.
    Stiff,
}

/// Receives every snapshot as it is taken.
pub trait SnapshotObserver {
    fn observe(&mut self, grid: &Grid, snapshot: &Snapshot);
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    #[serde(skip)]
    pub grid: Grid,
    pub ceiling: f64,
    pub freeze_level: f64,
    pub hold_slope: f64,
    pub escape_margin: f64,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
    pub stop: StopReason,
    pub escape_time: Option<f64>,
    pub steps: usize,
    /// Most negative per-step change at any moving node (0 when monotone).
    pub worst_descent: f64,
    /// Largest number of nodes held at zero speed in one step.
    pub max_held: usize,
    /// Held nodes summed over all steps.
    pub held_node_steps: usize,
    /// `(t, min interior u)` after every step.
    #[serde(skip)]
    pub umin_series: Vec<(f64, f64)>,
}

impl RunResult {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("a run always records its initial snapshot")
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn state_at(&self, k: usize) -> FieldState {
        let s = &self.snapshots[k];
        FieldState {
            grid: self.grid.clone(),
            u: s.u.clone(),
            t: s.t,
            ceiling: self.ceiling,
            bc: BoundaryCondition::Ceiling,
            freeze_level: self.freeze_level,
            hold_slope: self.hold_slope,
        }
    }
}

/// Steps until `t_end`, escape (`u >= L - margin` at every interior node) or
/// stiffness. Snapshots are taken at multiples of `snapshot_every` and at the stop.
pub fn run(
    state: FieldState,
    spec: &CurvatureFunctionSpec,
    cfg: &StepperConfig,
    observers: &mut [&mut dyn SnapshotObserver],
) -> Result<RunResult> {
    cfg.validate()?;
    let grid = state.grid.clone();
    let mut result = RunResult {
        grid: grid.clone(),
        ceiling: state.ceiling,
        freeze_level: state.freeze_level,
        hold_slope: state.hold_slope,
        escape_margin: cfg.escape_margin,
        snapshots: Vec::new(),
        stop: StopReason::Completed,
        escape_time: None,
        steps: 0,
        worst_descent: 0.0,
        max_held: 0,
        held_node_steps: 0,
        umin_series: vec![(state.t, state.min_interior())],
    };
    let take = |result: &mut RunResult, s: &FieldState, observers: &mut [&mut dyn SnapshotObserver]| {
        let snap = Snapshot { t: s.t, u: s.u.clone() };
        for o in observers.iter_mut() {
            o.observe(&grid, &snap);
        }
        result.snapshots.push(snap);
    };

    take(&mut result, &state, observers);
    if state.escaped(cfg.escape_margin) {
        result.stop = StopReason::Escaped;
        result.escape_time = Some(state.t);
        return Ok(result);
    }

    let t0 = state.t;
    let mut state = state;
    let mut taken = 0usize;
    let monotone_below = state.ceiling - cfg.epsilon(state.ceiling);
    while state.t < cfg.t_end {
        let next_snap = (t0 + (taken + 1) as f64 * cfg.snapshot_every).min(cfg.t_end);
        let (next, held) = match advance(&state, spec, cfg, next_snap) {
            Ok(v) => v,
            Err(FlowError::Stiffness { .. }) => {
                result.stop = StopReason::Stiff;
                break;
            }
            Err(e) => return Err(e),
        };
        result.steps += 1;
        result.max_held = result.max_held.max(held);
        result.held_node_steps += held;
        for (old, new) in state.u.iter().zip(&next.u) {
            if *old < monotone_below {
                result.worst_descent = result.worst_descent.min(new - old);
            }
        }
        state = next;
        result.umin_series.push((state.t, state.min_interior()));
        let escaped = state.escaped(cfg.escape_margin);
        if state.t >= next_snap {
            taken += 1;
            take(&mut result, &state, observers);
        } else if escaped {
            take(&mut result, &state, observers);
        }
        if escaped {
            result.stop = StopReason::Escaped;
            result.escape_time = Some(state.t);
            return Ok(result);
        }
    }
    if result.final_snapshot().t != state.t {
        take(&mut result, &state, observers);
    }
    Ok(result)
}
