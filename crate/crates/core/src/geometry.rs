//! Shape operator of a graph `x ↦ (x, u(x))` and the linearization of the flow speed.
//!
//! With `W = √(1+|Du|²)` and `γ = I − Du⊗Du / (W(1+W))` (the symmetric square
//! root of the inverse induced metric), the principal curvatures are the
//! eigenvalues of `A = γ D²u γ / W` and the normal speed in graph form is
//! `W · f(κ[A])`.

use serde::Serialize;

use crate::curvature::CurvatureFunctionSpec;
use crate::error::{FlowError, Result};
use crate::grid::MAX_GRID_DIM;
use crate::linalg::{symmetric_eigen, SymMatrix, MAX_DIM};
use crate::solver::FieldState;

#[derive(Debug, Clone, Copy)]
pub struct ShapeOperatorSample {
    pub dim: usize,
    pub w: f64,
    pub gamma: SymMatrix,
    pub a: SymMatrix,
    /// Eigenvalues of `a`, ascending.
    pub kappa: [f64; MAX_DIM],
    /// `frame[k]` is the unit eigenvector of `kappa[k]`.
    pub frame: [[f64; MAX_DIM]; MAX_DIM],
    /// Vertical component of the upward unit normal, `1/W`.
    pub nu_vertical: f64,
}

impl ShapeOperatorSample {
    pub fn kappa(&self) -> &[f64] {
        &self.kappa[..self.dim]
    }
}

/// `W = √(1+|g|²)` and `γ = I − g⊗g / (W(1+W))`.
pub fn metric_quantities(g: &[f64]) -> (f64, SymMatrix) {
    let d = g.len();
    let norm_sq: f64 = g.iter().map(|x| x * x).sum();
    let w = (1.0 + norm_sq).sqrt();
    let c = 1.0 / (w * (1.0 + w));
    let mut gamma = SymMatrix::identity(d);
    for i in 0..d {
        for j in i..d {
            let v = gamma.m[i][j] - c * g[i] * g[j];
            gamma.set_sym(i, j, v);
        }
    }
    (w, gamma)
}

pub fn shape_operator(g: &[f64], hess: &SymMatrix) -> Result<ShapeOperatorSample> {
    let d = g.len();
    debug_assert_eq!(hess.dim, d);
    let (w, gamma) = metric_quantities(g);
    let a = gamma.conjugate(hess).scale(1.0 / w);
    let eig = symmetric_eigen(&a)?;
    Ok(ShapeOperatorSample { dim: d, w, gamma, a, kappa: eig.values, frame: eig.vectors, nu_vertical: 1.0 / w })
}

#[derive(Debug, Clone, Copy)]
pub struct Linearization {
    /// `W · f(κ)`, the graph velocity.
    pub speed: f64,
    /// `f(κ)`.
    pub f: f64,
    /// `∂F/∂A = Σ f_k v_k⊗v_k`.
    pub df_da: SymMatrix,
    /// `γ · ∂F/∂A · γ = ∂(W F)/∂u_kl`.
    pub coeff: SymMatrix,
}

pub fn speed_and_linearization(spec: &CurvatureFunctionSpec, s: &ShapeOperatorSample) -> Result<Linearization> {
    let d = s.dim;
    let mut grad = [0.0; MAX_DIM];
    let f = spec.eval_with_grad(s.kappa(), &mut grad[..d])?;
    let mut df = SymMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let v: f64 = (0..d).map(|k| grad[k] * s.frame[k][i] * s.frame[k][j]).sum();
            df.set_sym(i, j, v);
        }
    }
    let coeff = s.gamma.conjugate(&df);
    Ok(Linearization { speed: s.w * f, f, df_da: df, coeff })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibilityClass {
    Admissible,
    /// Every violating point sits on the cone boundary up to rounding.
    WeaklyAdmissibleMargin,
    Violated,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityViolation {
    pub node: usize,
    pub x: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Largest relative deficit `-H_j / max|κ|^j` over `j <= k`, or infinity at `κ = 0`.
    pub deficit: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub checked: usize,
    /// Out-of-cone nodes next to the cap or on an under-resolved slope; the stepper holds them.
    pub held: usize,
    pub min_f: f64,
    pub violations: Vec<AdmissibilityViolation>,
    pub classification: AdmissibilityClass,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.classification == AdmissibilityClass::Admissible
    }
}

/// Relative deficit tolerated before a boundary point counts as a real violation.
pub const WEAK_MARGIN: f64 = 1e-8;

/// Curvature vector and cone check at every active interior node (not on the
/// boundary shell, below the freeze level). Out-of-cone nodes the stepper would
/// hold (see [`FieldState::may_hold`]) are counted in `held` instead of `violations`.
pub fn admissibility_check(spec: &CurvatureFunctionSpec, field: &FieldState) -> AdmissibilityReport {
    let grid = &field.grid;
    let d = grid.dim;
    let mut report = AdmissibilityReport {
        checked: 0,
        held: 0,
        min_f: f64::INFINITY,
        violations: Vec::new(),
        classification: AdmissibilityClass::Admissible,
    };
    let mut g = [0.0; MAX_GRID_DIM];
    let offsets = grid.box_offsets();
    for idx in 0..grid.len() {
        if grid.is_boundary(idx) || !field.is_active(idx) {
            continue;
        }
        report.checked += 1;
        let hess = grid.derivatives(&field.u, idx, &mut g);
        let kappa: Vec<f64> = match shape_operator(&g[..d], &hess) {
            Ok(s) => s.kappa().to_vec(),
            Err(_) => vec![f64::NAN; d],
        };
        match spec.eval(&kappa) {
            Ok(f) => report.min_f = report.min_f.min(f),
            Err(_) if !kappa.iter().any(|k| k.is_nan()) && field.may_hold(idx, &g[..d], &offsets) => {
                report.held += 1;
            }
            Err(_) => {
                let deficit = cone_deficit(spec, &kappa);
                report.violations.push(AdmissibilityViolation {
                    node: idx,
                    x: grid.coords(idx)[..d].to_vec(),
                    kappa,
                    deficit,
                });
            }
        }
    }
    if !report.violations.is_empty() {
        report.classification = if report.violations.iter().all(|v| v.deficit <= WEAK_MARGIN) {
            AdmissibilityClass::WeaklyAdmissibleMargin
        } else {
            AdmissibilityClass::Violated
        };
    }
    report
}

fn cone_deficit(spec: &CurvatureFunctionSpec, kappa: &[f64]) -> f64 {
    let scale = kappa.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return f64::INFINITY;
    }
    let unit: Vec<f64> = kappa.iter().map(|v| v / scale).collect();
    let cv = crate::curvature::CurvatureVector(unit);
    let mut worst = 0.0_f64;
    for j in 1..=spec.cone.order().min(kappa.len()) {
        let hj = crate::curvature::elementary_symmetric_normalized(&cv, j).unwrap_or(f64::NAN);
        worst = worst.max(-hj);
    }
    worst
}

/// Convenience wrapper returning an admissibility error at the first violating node.
pub fn require_admissible(spec: &CurvatureFunctionSpec, field: &FieldState) -> Result<AdmissibilityReport> {
    let report = admissibility_check(spec, field);
    match report.violations.first() {
        Some(v) if report.classification != AdmissibilityClass::Admissible => Err(FlowError::Admissibility {
            node: v.node,
            t: field.t,
            kappa: v.kappa.clone(),
        }),
        _ => Ok(report),
    }
}
