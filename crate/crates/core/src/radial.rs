//! Rotationally symmetric reduction `u(x) = U(|x|)` of the flow and the
//! closed-form shrinking cylinder.
//!
//! With `p = U_r`, `q = U_rr`, `W = √(1+p²)` the curvatures are
//! `κ_rad = q/W³` and `κ_ang = p/(rW)` (multiplicity `d-1`), and the flow reads
//! `U_t = W f(κ)`. At the axis the ghost value `U(-Δr) = U(Δr)` gives
//! `p = 0`, `q = 2(U_1 - U_0)/Δr²` and all curvatures equal `q`.

use serde::Serialize;

use crate::curvature::CurvatureFunctionSpec;
use crate::error::{FlowError, Result};
use crate::solver::{min_eps_cutoff_with, StepperConfig, StopReason};

/// `(κ_rad, κ_ang, …, κ_ang)` with `d-1` angular entries.
pub fn radial_curvatures(u_r: f64, u_rr: f64, r: f64, dim: usize) -> Result<Vec<f64>> {
    if r < 0.0 || !r.is_finite() {
        return Err(FlowError::Config(format!("radius must be nonnegative, got {r}")));
    }
    if dim == 0 {
        return Err(FlowError::Config("dimension must be positive".into()));
    }
    let w = (1.0 + u_r * u_r).sqrt();
    let rad = u_rr / (w * w * w);
    let ang = if r == 0.0 { rad } else { u_r / (r * w) };
    let mut k = vec![ang; dim];
    k[0] = rad;
    Ok(k)
}

/// `f(1, …, 1, 0)`: speed of the unit cylinder with one flat direction.
pub fn cylinder_speed(spec: &CurvatureFunctionSpec) -> Result<f64> {
    let d = spec.dim;
    if d < 2 {
        return Err(FlowError::Config("a cylinder needs dimension >= 2".into()));
    }
    let mut k = vec![1.0; d];
    k[d - 1] = 0.0;
    spec.eval(&k)
}

/// `ρ0² / (2 f(1, …, 1, 0))`.
pub fn cylinder_extinction_time(rho0: f64, spec: &CurvatureFunctionSpec) -> Result<f64> {
    Ok(rho0 * rho0 / (2.0 * cylinder_speed(spec)?))
}

/// `ρ(t) = √(ρ0² - 2 c_f t)` for the cylinder over a `(d-1)`-sphere.
pub fn cylinder_radius(rho0: f64, t: f64, spec: &CurvatureFunctionSpec) -> Result<f64> {
    if !(rho0 > 0.0) || t < 0.0 {
        return Err(FlowError::Config(format!("need rho0 > 0 and t >= 0, got {rho0}, {t}")));
    }
    let c = cylinder_speed(spec)?;
    let extinction = rho0 * rho0 / (2.0 * c);
    if t > extinction {
        return Err(FlowError::Extinct { t, extinction });
    }
    Ok((rho0 * rho0 - 2.0 * c * t).max(0.0).sqrt())
}

/// `f(1/r, …, 1/r)`, checked against `1/r`.
pub fn sphere_speed_check(r: f64, spec: &CurvatureFunctionSpec) -> Result<f64> {
    if !(r > 0.0) {
        return Err(FlowError::Config(format!("sphere radius must be positive, got {r}")));
    }
    let f = spec.eval(&vec![1.0 / r; spec.dim])?;
    if ((f - 1.0 / r) * r).abs() > 1e-12 {
        return Err(FlowError::ConditionViolation(format!("f(1/r,...,1/r) = {f} differs from 1/r = {}", 1.0 / r)));
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialScheme {
    /// Linearly implicit Euler with the exact Jacobian of the three-point stencil.
    Implicit,
    /// Forward Euler under a diffusion and advection CFL limit.
    Explicit,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialConfig {
    /// Node count on `[0, r_max]`, including both ends.
    pub nodes: usize,
    pub r_max: f64,
    pub scheme: RadialScheme,
    /// Step cap of the implicit scheme.
    pub dt_max: f64,
    /// Largest change of `u` at any node in one implicit step.
    pub du_max: f64,
}

impl Default for RadialConfig {
    fn default() -> Self {
        Self { nodes: 4096, r_max: 2.0, scheme: RadialScheme::Implicit, dt_max: 1e-4, du_max: 0.05 }
    }
}

impl RadialConfig {
    pub fn dr(&self) -> f64 {
        self.r_max / (self.nodes - 1) as f64
    }

    pub fn radii(&self) -> Vec<f64> {
        let dr = self.dr();
        (0..self.nodes).map(|i| i as f64 * dr).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 3 {
            return Err(FlowError::Config("radial grid needs at least 3 nodes".into()));
        }
        if !(self.r_max > 0.0) || !self.r_max.is_finite() {
            return Err(FlowError::Config("radial extent must be positive".into()));
        }
        if !(self.dt_max > 0.0) || !(self.du_max > 0.0) {
            return Err(FlowError::Config("dt_max and du_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialSnapshot {
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialRunResult {
    pub radii: Vec<f64>,
    pub ceiling: f64,
    pub freeze_level: f64,
    pub snapshots: Vec<RadialSnapshot>,
    pub stop: StopReason,
    pub escape_time: Option<f64>,
    pub steps: usize,
    pub worst_descent: f64,
    pub umin_series: Vec<(f64, f64)>,
}

impl RadialRunResult {
    /// Linear interpolation of the snapshot `k` at radius `r` (`L` beyond `r_max`).
    pub fn sample(&self, k: usize, r: f64) -> f64 {
        let u = &self.snapshots[k].u;
        let dr = self.radii[1];
        let s = r / dr;
        if s >= (u.len() - 1) as f64 {
            return self.ceiling;
        }
        let i = s.floor() as usize;
        let frac = s - i as f64;
        u[i] * (1.0 - frac) + u[i + 1] * frac
    }

    pub fn snapshot_near(&self, t: f64) -> Option<usize> {
        self.snapshots.iter().position(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

/// Per-node state of the reduced equation: the speed and its partial
/// derivatives with respect to `U_rr` and `U_r`.
#[derive(Debug, Clone, Copy)]
enum RadialEval {
    Fixed,
    Held,
    Active { s: f64, a: f64, b: f64 },
}

struct RadialProblem<'a> {
    spec: &'a CurvatureFunctionSpec,
    dr: f64,
    freeze: f64,
}

impl RadialProblem<'_> {
    fn eval(&self, u: &[f64], i: usize, t: f64) -> Result<RadialEval> {
        let n = u.len();
        if i + 1 == n || u[i] >= self.freeze {
            return Ok(RadialEval::Fixed);
        }
        let d = self.spec.dim;
        let dr = self.dr;
        let mut grad = [0.0; crate::linalg::MAX_DIM];
        if i == 0 {
            let q = 2.0 * (u[1] - u[0]) / (dr * dr);
            let k = vec![q; d];
            return match self.spec.eval_with_grad(&k, &mut grad[..d]) {
                Ok(f) => Ok(RadialEval::Active { s: f, a: grad[..d].iter().sum(), b: 0.0 }),
                Err(_) if u[1] >= self.freeze => Ok(RadialEval::Held),
                Err(_) => Err(FlowError::Admissibility { node: 0, t, kappa: k }),
            };
        }
        let r = i as f64 * dr;
        let p = (u[i + 1] - u[i - 1]) / (2.0 * dr);
        let q = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dr * dr);
        if !p.is_finite() || !q.is_finite() {
            return Err(FlowError::NumericalFault { node: i, t, what: "non-finite radial derivative".into() });
        }
        let w = (1.0 + p * p).sqrt();
        let w3 = w * w * w;
        let mut k = vec![p / (r * w); d];
        k[0] = q / w3;
        match self.spec.eval_with_grad(&k, &mut grad[..d]) {
            Ok(f) => {
                let f_rad = grad[0];
                let f_ang: f64 = grad[1..d].iter().sum();
                let a = f_rad / (w * w);
                let b = p / w * f + w * (f_rad * (-3.0 * q * p / (w3 * w * w)) + f_ang / (r * w3));
                Ok(RadialEval::Active { s: w * f, a, b })
            }
            Err(_) if u[i - 1] >= self.freeze || u[i + 1] >= self.freeze => Ok(RadialEval::Held),
            Err(_) => Err(FlowError::Admissibility { node: i, t, kappa: k }),
        }
    }
}

/// Samples `u0(r)` (`+∞` where undefined), applies `min_ε{·, L}` and the
/// freeze rule, and sets `U(r_max) = L`.
pub fn radial_initial(u0: impl Fn(f64) -> f64, ceiling: f64, cfg: &StepperConfig, rcfg: &RadialConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    rcfg.validate()?;
    if !(ceiling > cfg.escape_margin) || !ceiling.is_finite() {
        return Err(FlowError::Config(format!("ceiling L = {ceiling} must exceed the escape margin")));
    }
    let eps = cfg.epsilon(ceiling);
    let freeze = cfg.freeze_level(ceiling);
    let radii = rcfg.radii();
    let outer = u0(rcfg.r_max);
    if outer < ceiling + 1.0 {
        return Err(FlowError::Config(format!(
            "u0({}) = {outer} < L + 1 = {}; the radial extent is too small for L",
            rcfg.r_max,
            ceiling + 1.0
        )));
    }
    let mut u: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let v = u0(r);
            if v.is_nan() {
                return f64::NAN;
            }
            let c = min_eps_cutoff_with(cfg.blend, v, ceiling, eps);
            if c >= freeze {
                ceiling
            } else {
                c
            }
        })
        .collect();
    if let Some(i) = u.iter().position(|v| v.is_nan()) {
        return Err(FlowError::Config(format!("u0 is NaN at r = {}", radii[i])));
    }
    *u.last_mut().expect("nodes >= 3") = ceiling;
    Ok(u)
}

/// Same stopping rules as the grid stepper: `t_end`, escape (`U >= L - margin`
/// at every node below `r_max`) or a step below `dt_min`.
pub fn radial_run(
    initial: Vec<f64>,
    ceiling: f64,
    spec: &CurvatureFunctionSpec,
    cfg: &StepperConfig,
    rcfg: &RadialConfig,
) -> Result<RadialRunResult> {
    cfg.validate()?;
    rcfg.validate()?;
    if initial.len() != rcfg.nodes {
        return Err(FlowError::Config(format!("{} radial values for {} nodes", initial.len(), rcfg.nodes)));
    }
    let dr = rcfg.dr();
    let freeze = cfg.freeze_level(ceiling);
    let problem = RadialProblem { spec, dr, freeze };
    let level = ceiling - cfg.escape_margin;
    let monotone_below = ceiling - cfg.epsilon(ceiling);
    let n = rcfg.nodes;
    let escaped = |u: &[f64]| u[..n - 1].iter().all(|&v| v >= level);
    let umin = |u: &[f64]| u[..n - 1].iter().cloned().fold(f64::INFINITY, f64::min);

    let mut u = initial;
    let mut t = 0.0;
    let mut result = RadialRunResult {
        radii: rcfg.radii(),
        ceiling,
        freeze_level: freeze,
        snapshots: vec![RadialSnapshot { t, u: u.clone() }],
        stop: StopReason::Completed,
        escape_time: None,
        steps: 0,
        worst_descent: 0.0,
        umin_series: vec![(t, umin(&u))],
    };
    if escaped(&u) {
        result.stop = StopReason::Escaped;
        result.escape_time = Some(t);
        return Ok(result);
    }

    let mut evals = vec![RadialEval::Fixed; n];
    let mut taken = 0usize;
    // tridiagonal system scratch
    let (mut lo, mut di, mut up, mut rhs) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    while t < cfg.t_end {
        let next_snap = ((taken + 1) as f64 * cfg.snapshot_every).min(cfg.t_end);
        let mut max_s = 0.0_f64;
        let mut max_a = 0.0_f64;
        let mut max_b = 0.0_f64;
        for i in 0..n {
            evals[i] = problem.eval(&u, i, t)?;
            if let RadialEval::Active { s, a, b } = evals[i] {
                if !s.is_finite() {
                    return Err(FlowError::NumericalFault { node: i, t, what: "non-finite speed".into() });
                }
                max_s = max_s.max(s);
                max_a = max_a.max(a);
                max_b = max_b.max(b.abs());
            }
        }
        let dt_stab = match rcfg.scheme {
            RadialScheme::Implicit => rcfg.dt_max.min(if max_s > 0.0 { rcfg.du_max / max_s } else { f64::INFINITY }),
            RadialScheme::Explicit => {
                let lim = 2.0 * max_a / (dr * dr) + max_b / dr;
                if lim > 0.0 {
                    cfg.sigma / lim
                } else {
                    f64::INFINITY
                }
            }
        };
        if dt_stab < cfg.dt_min {
            result.stop = StopReason::Stiff;
            break;
        }
        let remaining = next_snap - t;
        let (dt, new_t) = if dt_stab >= remaining { (remaining, next_snap) } else { (dt_stab, t + dt_stab) };

        let delta: Vec<f64> = match rcfg.scheme {
            RadialScheme::Explicit => evals
                .iter()
                .map(|e| match *e {
                    RadialEval::Active { s, .. } => dt * s,
                    _ => 0.0,
                })
                .collect(),
            RadialScheme::Implicit => {
                for i in 0..n {
                    match evals[i] {
                        RadialEval::Active { s, a, b } => {
                            let (mut cm, mut cc, mut cp) = (a / (dr * dr), -2.0 * a / (dr * dr), a / (dr * dr));
                            if i == 0 {
                                // ghost node: U_rr = 2(U_1 - U_0)/Δr²
                                cm = 0.0;
                                cp = 2.0 * a / (dr * dr);
                            } else if b.abs() * dr <= 2.0 * a {
                                cm -= b / (2.0 * dr);
                                cp += b / (2.0 * dr);
                            } else if b > 0.0 {
                                cc -= b / dr;
                                cp += b / dr;
                            } else {
                                cm -= b / dr;
                                cc += b / dr;
                            }
                            lo[i] = -dt * cm;
                            di[i] = 1.0 - dt * cc;
                            up[i] = -dt * cp;
                            rhs[i] = dt * s;
                        }
                        _ => {
                            lo[i] = 0.0;
                            di[i] = 1.0;
                            up[i] = 0.0;
                            rhs[i] = 0.0;
                        }
                    }
                }
                // fixed rows decouple: zero their couplings from active rows
                for i in 0..n {
                    if !matches!(evals[i], RadialEval::Active { .. }) {
                        if i > 0 {
                            up[i - 1] = 0.0;
                        }
                        if i + 1 < n {
                            lo[i + 1] = 0.0;
                        }
                    }
                }
                thomas(&lo, &di, &up, &rhs)
            }
        };

        let mut next = u.clone();
        for i in 0..n - 1 {
            if u[i] >= freeze {
                continue;
            }
            let v = (u[i] + delta[i].max(0.0)).min(ceiling);
            next[i] = if v >= freeze { ceiling } else { v };
            if u[i] < monotone_below {
                result.worst_descent = result.worst_descent.min(next[i] - u[i]);
            }
        }
        next[n - 1] = ceiling;
        u = next;
        t = new_t;
        result.steps += 1;
        result.umin_series.push((t, umin(&u)));
        let done = escaped(&u);
        if t >= next_snap || done {
            if t >= next_snap {
                taken += 1;
            }
            result.snapshots.push(RadialSnapshot { t, u: u.clone() });
        }
        if done {
            result.stop = StopReason::Escaped;
            result.escape_time = Some(t);
            return Ok(result);
        }
    }
    if result.snapshots.last().map(|s| s.t) != Some(t) {
        result.snapshots.push(RadialSnapshot { t, u: u.clone() });
    }
    Ok(result)
}

/// Tridiagonal solve; `lo[0]` and `up[n-1]` are ignored.
fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = di.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = up[0] / di[0];
    d[0] = rhs[0] / di[0];
    for i in 1..n {
        let m = di[i] - lo[i] * c[i - 1];
        c[i] = if i + 1 < n { up[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lo[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// `1/(ρ - r) + r²` for `r < ρ`, undefined beyond.
pub fn ball_profile(rho: f64) -> impl Fn(f64) -> f64 {
    move |r| if r < rho { 1.0 / (rho - r) + r * r } else { f64::INFINITY }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curvature_examples() {
        let r: f64 = 0.6;
        let k = radial_curvatures(r, 1.0, r, 2).unwrap();
        assert!((k[0] - (1.0 + r * r).powf(-1.5)).abs() < 1e-15);
        assert!((k[1] - (1.0 + r * r).powf(-0.5)).abs() < 1e-15);
        assert_eq!(radial_curvatures(0.0, 3.0, 0.0, 3).unwrap(), vec![3.0; 3]);
        let s = 2.0_f64;
        let k = radial_curvatures(s, 0.0, 0.5, 2).unwrap();
        assert_eq!(k[0], 0.0);
        assert!((k[1] - s / (0.5 * (1.0 + s * s).sqrt())).abs() < 1e-15);
        assert!(radial_curvatures(1.0, 1.0, -0.1, 2).is_err());
    }

    #[test]
    fn cylinder_closed_forms() {
        let h1 = CurvatureFunctionSpec::mean(2);
        assert_eq!(cylinder_extinction_time(1.0, &h1).unwrap(), 1.0);
        assert!((cylinder_radius(1.0, 0.5, &h1).unwrap() - 0.5_f64.sqrt()).abs() < 1e-15);
        assert_eq!(cylinder_radius(1.3, 0.0, &h1).unwrap(), 1.3);
        assert!(matches!(cylinder_radius(1.0, 1.5, &h1), Err(FlowError::Extinct { .. })));
        let h1_3 = CurvatureFunctionSpec::mean(3);
        assert!((cylinder_extinction_time(1.0, &h1_3).unwrap() - 0.75).abs() < 1e-15);
        assert!(cylinder_speed(&CurvatureFunctionSpec::gauss(2)).is_err());
    }

    #[test]
    fn sphere_speeds() {
        for spec in [CurvatureFunctionSpec::mean(3), CurvatureFunctionSpec::normalized_power(2, 3).unwrap()] {
            assert_eq!(sphere_speed_check(2.0, &spec).unwrap(), 0.5);
            assert_eq!(sphere_speed_check(1.0, &spec).unwrap(), 1.0);
            assert!((sphere_speed_check(1e-6, &spec).unwrap() * 1e-6 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn thomas_solves_small_system() {
        let x = thomas(&[0.0, -1.0, -1.0], &[2.0, 2.0, 2.0], &[-1.0, -1.0, 0.0], &[1.0, 0.0, 1.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn saturated_profile_escapes_immediately() {
        let cfg = StepperConfig::default();
        let rcfg = RadialConfig { nodes: 65, ..Default::default() };
        let u = radial_initial(|_| 100.0, 20.0, &cfg, &rcfg).unwrap();
        let r = radial_run(u, 20.0, &CurvatureFunctionSpec::mean(2), &cfg, &rcfg).unwrap();
        assert_eq!(r.escape_time, Some(0.0));
    }

    #[test]
    fn paraboloid_axis_speed() {
        // U = r²/2 has all curvatures 1 at the axis, so U_t(0) = 1
        let cfg = StepperConfig { t_end: 1e-3, snapshot_every: 1e-3, ..Default::default() };
        let rcfg = RadialConfig { nodes: 201, scheme: RadialScheme::Explicit, ..Default::default() };
        let u = radial_initial(|r| if r < 1.9 { 0.5 * r * r } else { f64::INFINITY }, 20.0, &cfg, &rcfg).unwrap();
        let r = radial_run(u, 20.0, &CurvatureFunctionSpec::mean(2), &cfg, &rcfg).unwrap();
        let end = r.snapshots.last().unwrap();
        assert!((end.t - 1e-3).abs() < 1e-15);
        assert!((end.u[0] - 1e-3).abs() < 1e-5, "{}", end.u[0]);
    }
}
