//! Symmetric curvature functions `f(κ)`, their gradients and Gårding-cone membership.
//!
//! Built-in speeds are the normalized powers `H_k^{1/k}` and the quotients
//! `(H_k / H_l)^{1/(k-l)}`, where `H_k = e_k / binom(d, k)` is the normalized
//! elementary symmetric polynomial. All of them are defined on the Gårding cone
//! `Γ_k = {H_1 > 0, ..., H_k > 0}`.

use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use smallvec::SmallVec;

use crate::error::{FlowError, Result};

/// Inline storage for curvature-sized scratch vectors.
pub(crate) type Scratch = SmallVec<[f64; 8]>;

/// Principal curvatures `κ_1..κ_d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureVector(pub Vec<f64>);

impl CurvatureVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(FlowError::InvalidVector("empty curvature vector".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidVector(format!("non-finite entry in {entries:?}")));
        }
        Ok(Self(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<&[f64]> for CurvatureVector {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

/// Default relative floor below which `H_j` counts as zero.
pub const DEFAULT_CONE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConeSpec {
    /// `Γ_k = {H_1 > 0, ..., H_k > 0}`.
    Garding(usize),
    /// `{Σ λ_i > 0}`, the same set as `Γ_1`.
    HalfSpace,
}

impl ConeSpec {
    pub fn order(&self) -> usize {
        match *self {
            ConeSpec::Garding(k) => k,
            ConeSpec::HalfSpace => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpeedFamily {
    /// `H_k^{1/k}`.
    NormalizedPower { k: usize },
    /// `(H_k / H_l)^{1/(k-l)}`, `0 <= l < k`.
    Quotient { k: usize, l: usize },
}

/// A built-in speed function in a fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureFunctionSpec {
    pub family: SpeedFamily,
    pub dim: usize,
    pub cone: ConeSpec,
    /// Relative cone floor: `λ ∈ Γ` requires `H_j(λ) > floor · max|λ_i|^j`.
    pub cone_floor: f64,
}

impl CurvatureFunctionSpec {
    pub fn normalized_power(k: usize, dim: usize) -> Result<Self> {
        if k == 0 || k > dim {
            return Err(FlowError::IndexOutOfRange { index: k, dim });
        }
        let cone = if k == 1 { ConeSpec::HalfSpace } else { ConeSpec::Garding(k) };
        Ok(Self { family: SpeedFamily::NormalizedPower { k }, dim, cone, cone_floor: DEFAULT_CONE_FLOOR })
    }

    pub fn quotient(k: usize, l: usize, dim: usize) -> Result<Self> {
        if k == 0 || k > dim {
            return Err(FlowError::IndexOutOfRange { index: k, dim });
        }
        if l >= k {
            return Err(FlowError::Config(format!("quotient requires l < k, got k={k}, l={l}")));
        }
        let cone = if k == 1 { ConeSpec::HalfSpace } else { ConeSpec::Garding(k) };
        Ok(Self { family: SpeedFamily::Quotient { k, l }, dim, cone, cone_floor: DEFAULT_CONE_FLOOR })
    }

    /// Mean curvature `H_1`.
    pub fn mean(dim: usize) -> Self {
        Self::normalized_power(1, dim).expect("k = 1 is valid in every dimension")
    }

    /// Gauss-type speed `H_d^{1/d}`.
    pub fn gauss(dim: usize) -> Self {
        Self::normalized_power(dim, dim).expect("k = d is valid")
    }

    /// Parses `H1`, `Hk^1/k:k=<int>`, `quotient:k=<int>,l=<int>` or `Gauss`.
    pub fn parse(name: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(FlowError::Config("dimension must be at least 1".into()));
        }
        let name = name.trim();
        if name == "H1" {
            return Ok(Self::mean(dim));
        }
        if name == "Gauss" {
            return Ok(Self::gauss(dim));
        }
        if let Some(rest) = name.strip_prefix("Hk^1/k:") {
            let params = parse_params(rest)?;
            let k = lookup(&params, "k", name)?;
            if params.len() != 1 {
                return Err(FlowError::Config(format!("unexpected parameters in speed '{name}'")));
            }
            return Self::normalized_power(k, dim);
        }
        if let Some(rest) = name.strip_prefix("quotient:") {
            let params = parse_params(rest)?;
            let k = lookup(&params, "k", name)?;
            let l = lookup(&params, "l", name)?;
            if params.len() != 2 {
                return Err(FlowError::Config(format!("unexpected parameters in speed '{name}'")));
            }
            return Self::quotient(k, l, dim);
        }
        Err(FlowError::Config(format!(
            "unknown speed '{name}' (expected H1, Hk^1/k:k=<int>, quotient:k=<int>,l=<int> or Gauss)"
        )))
    }

    /// Canonical name in the configuration grammar.
    pub fn name(&self) -> String {
        match self.family {
            SpeedFamily::NormalizedPower { k: 1 } => "H1".to_string(),
            SpeedFamily::NormalizedPower { k } if k == self.dim => "Gauss".to_string(),
            SpeedFamily::NormalizedPower { k } => format!("Hk^1/k:k={k}"),
            SpeedFamily::Quotient { k, l } => format!("quotient:k={k},l={l}"),
        }
    }

    pub fn with_cone_floor(mut self, floor: f64) -> Self {
        self.cone_floor = floor;
        self
    }

    fn check_dim(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.dim {
            return Err(FlowError::InvalidVector(format!(
                "expected {} curvatures, got {}",
                self.dim,
                lambda.len()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, lambda: &[f64]) -> bool {
        cone_violation(lambda, self.cone, self.cone_floor).is_none()
    }

    /// `f(λ)`; fails with the first violated `H_j` index outside the cone.
    pub fn eval(&self, lambda: &[f64]) -> Result<f64> {
        self.check_dim(lambda)?;
        let h = self.admissible_hk(lambda)?;
        Ok(self.value_from_hk(&h))
    }

    /// `f(λ)` and `∂f/∂λ_i` written into `grad`.
    pub fn eval_with_grad(&self, lambda: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_dim(lambda)?;
        debug_assert_eq!(grad.len(), lambda.len());
        let h = self.admissible_hk(lambda)?;
        let f = self.value_from_hk(&h);
        let d = self.dim;
        match self.family {
            SpeedFamily::NormalizedPower { k } => {
                // f = H_k^{1/k}  =>  f_i = f / (k H_k) * ∂H_k/∂λ_i
                let scale = f / (k as f64 * h[k]);
                for (i, g) in grad.iter_mut().enumerate() {
                    *g = scale * partial_hk(lambda, k, i, d);
                }
            }
            SpeedFamily::Quotient { k, l } => {
                let scale = f / (k - l) as f64;
                for (i, g) in grad.iter_mut().enumerate() {
                    let mut dlog = partial_hk(lambda, k, i, d) / h[k];
                    if l > 0 {
                        dlog -= partial_hk(lambda, l, i, d) / h[l];
                    }
                    *g = scale * dlog;
                }
            }
        }
        Ok(f)
    }

    pub fn grad(&self, lambda: &CurvatureVector) -> Result<CurvatureVector> {
        let mut g = vec![0.0; lambda.dim()];
        self.eval_with_grad(lambda.as_slice(), &mut g)?;
        Ok(CurvatureVector(g))
    }

    fn top_index(&self) -> usize {
        match self.family {
            SpeedFamily::NormalizedPower { k } => k,
            SpeedFamily::Quotient { k, .. } => k,
        }
    }

    fn admissible_hk(&self, lambda: &[f64]) -> Result<Scratch> {
        let order = self.cone.order().max(self.top_index());
        let h = normalized_all(lambda, order);
        if let Some(index) = first_nonpositive(&h, lambda, self.cone.order(), self.cone_floor) {
            return Err(FlowError::OutsideCone { index });
        }
        Ok(h)
    }

    fn value_from_hk(&self, h: &[f64]) -> f64 {
        match self.family {
            SpeedFamily::NormalizedPower { k: 1 } => h[1],
            SpeedFamily::NormalizedPower { k: 2 } => h[2].sqrt(),
            SpeedFamily::NormalizedPower { k } => h[k].powf(1.0 / k as f64),
            SpeedFamily::Quotient { k, l } => {
                let q = h[k] / h[l];
                match k - l {
                    1 => q,
                    2 => q.sqrt(),
                    m => q.powf(1.0 / m as f64),
                }
            }
        }
    }
}

impl fmt::Display for CurvatureFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (d={})", self.name(), self.dim)
    }
}

fn parse_params(s: &str) -> Result<Vec<(String, usize)>> {
    s.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| FlowError::Config(format!("malformed speed parameter '{kv}'")))?;
            let v = v
                .trim()
                .parse::<usize>()
                .map_err(|_| FlowError::Config(format!("speed parameter '{kv}' is not an integer")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn lookup(params: &[(String, usize)], key: &str, name: &str) -> Result<usize> {
    params
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| FlowError::Config(format!("speed '{name}' is missing parameter '{key}'")))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut b = 1.0;
    for i in 0..k {
        b = b * (n - i) as f64 / (i + 1) as f64;
    }
    b.round()
}

/// `e_0..=e_order` of `lambda`, skipping entry `skip` when given.
fn elementary_all(lambda: &[f64], order: usize, skip: Option<usize>) -> Scratch {
    let mut e: Scratch = SmallVec::from_elem(0.0, order + 1);
    e[0] = 1.0;
    let mut seen = 0;
    for (i, &x) in lambda.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        seen += 1;
        for j in (1..=order.min(seen)).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// `H_0..=H_order` of `lambda`.
fn normalized_all(lambda: &[f64], order: usize) -> Scratch {
    let d = lambda.len();
    let mut e = elementary_all(lambda, order, None);
    for (j, v) in e.iter_mut().enumerate().skip(1) {
        *v /= binomial(d, j);
    }
    e
}

/// `∂H_k/∂λ_i = e_{k-1}(λ without λ_i) / binom(d, k)`.
fn partial_hk(lambda: &[f64], k: usize, i: usize, d: usize) -> f64 {
    let e = elementary_all(lambda, k - 1, Some(i));
    e[k - 1] / binomial(d, k)
}

fn first_nonpositive(h: &[f64], lambda: &[f64], order: usize, floor: f64) -> Option<usize> {
    let scale = lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Some(1);
    }
    let mut threshold = floor;
    for (j, &hj) in h.iter().enumerate().take(order + 1).skip(1) {
        threshold = if j == 1 { floor * scale } else { threshold * scale };
        if !(hj > threshold) {
            return Some(j);
        }
    }
    None
}

fn cone_violation(lambda: &[f64], cone: ConeSpec, floor: f64) -> Option<usize> {
    let order = cone.order().min(lambda.len());
    let h = normalized_all(lambda, order);
    first_nonpositive(&h, lambda, order, floor)
}

/// `H_k(λ) = e_k(λ) / binom(d, k)`, with `H_0 = 1`.
pub fn elementary_symmetric_normalized(lambda: &CurvatureVector, k: usize) -> Result<f64> {
    let d = lambda.dim();
    if k > d {
        return Err(FlowError::IndexOutOfRange { index: k, dim: d });
    }
    Ok(normalized_all(lambda.as_slice(), k)[k])
}

/// Strict interior membership with the default floor.
pub fn cone_contains(lambda: &CurvatureVector, cone: ConeSpec) -> bool {
    cone_contains_with_floor(lambda, cone, DEFAULT_CONE_FLOOR)
}

pub fn cone_contains_with_floor(lambda: &CurvatureVector, cone: ConeSpec, floor: f64) -> bool {
    if let ConeSpec::Garding(k) = cone {
        if k > lambda.dim() {
            return false;
        }
    }
    cone_violation(lambda.as_slice(), cone, floor).is_none()
}

pub fn eval_f(spec: &CurvatureFunctionSpec, lambda: &CurvatureVector) -> Result<f64> {
    spec.eval(lambda.as_slice())
}

pub fn grad_f(spec: &CurvatureFunctionSpec, lambda: &CurvatureVector) -> Result<CurvatureVector> {
    spec.grad(lambda)
}

/// Tolerances for [`verify_structure_conditions`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PropertyTolerances {
    pub concavity: f64,
    pub homogeneity: f64,
    pub upper_mean: f64,
    pub gradient_sum: f64,
    pub euler: f64,
}

impl Default for PropertyTolerances {
    fn default() -> Self {
        Self { concavity: 1e-9, homogeneity: 1e-12, upper_mean: 1e-10, gradient_sum: 1e-10, euler: 1e-10 }
    }
}

/// Worst margins observed by [`verify_structure_conditions`]. A margin is
/// "good" when nonnegative after subtracting the tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub speed: String,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub tolerances: PropertyTolerances,
    /// `min_i f_i` over all samples; must be `> 0`.
    pub min_partial: f64,
    /// `min f((λ+μ)/2) - (f(λ)+f(μ))/2`.
    pub concavity_margin: f64,
    /// `max |f(cλ) - c f(λ)| / (c f(λ))`.
    pub homogeneity_rel_err: f64,
    /// `|f(1,...,1) - 1|`.
    pub normalization_err: f64,
    /// `max (f - mean(λ)) / max(1, |f|)`.
    pub upper_mean_excess: f64,
    /// `min Σ f_i - 1`.
    pub gradient_sum_margin: f64,
    /// `max |Σ λ_i f_i - f| / |f|`.
    pub euler_rel_err: f64,
    pub failures: Vec<String>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Draws a random point of the spec's cone: log-uniform magnitudes in
/// `[1e-2, 1e2]` with random signs, rejection-sampled into `Γ`.
pub fn sample_cone_point(spec: &CurvatureFunctionSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (lo, hi) = (1e-2_f64.ln(), 1e2_f64.ln());
    loop {
        let v: Vec<f64> = (0..spec.dim)
            .map(|_| {
                let mag = rng.random_range(lo..hi).exp();
                if rng.random_bool(0.5) { mag } else { -mag }
            })
            .collect();
        if spec.contains(&v) {
            return v;
        }
    }
}

pub fn verify_structure_conditions(spec: &CurvatureFunctionSpec, samples: usize, seed: u64) -> PropertyReport {
    verify_structure_conditions_with(spec, samples, seed, PropertyTolerances::default())
}

pub fn verify_structure_conditions_with(
    spec: &CurvatureFunctionSpec,
    samples: usize,
    seed: u64,
    tol: PropertyTolerances,
) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim;
    let mut report = PropertyReport {
        speed: spec.name(),
        dim: d,
        samples,
        seed,
        tolerances: tol,
        min_partial: f64::INFINITY,
        concavity_margin: f64::INFINITY,
        homogeneity_rel_err: 0.0,
        normalization_err: 0.0,
        upper_mean_excess: f64::NEG_INFINITY,
        gradient_sum_margin: f64::INFINITY,
        euler_rel_err: 0.0,
        failures: Vec::new(),
    };

    match spec.eval(&vec![1.0; d]) {
        Ok(f1) => report.normalization_err = (f1 - 1.0).abs(),
        Err(e) => report.failures.push(format!("normalization: {e}")),
    }

    let mut grad = vec![0.0; d];
    let (lo, hi) = (1e-2_f64.ln(), 1e2_f64.ln());
    for _ in 0..samples {
        let lambda = sample_cone_point(spec, &mut rng);
        let mu = sample_cone_point(spec, &mut rng);
        let c = rng.random_range(lo..hi).exp();

        let f = match spec.eval_with_grad(&lambda, &mut grad) {
            Ok(f) => f,
            Err(e) => {
                report.failures.push(format!("eval at {lambda:?}: {e}"));
                continue;
            }
        };
        report.min_partial = report.min_partial.min(grad.iter().cloned().fold(f64::INFINITY, f64::min));
        let gsum: f64 = grad.iter().sum();
        report.gradient_sum_margin = report.gradient_sum_margin.min(gsum - 1.0);
        let euler: f64 = lambda.iter().zip(&grad).map(|(l, g)| l * g).sum();
        report.euler_rel_err = report.euler_rel_err.max((euler - f).abs() / f.abs());
        let mean = lambda.iter().sum::<f64>() / d as f64;
        report.upper_mean_excess = report.upper_mean_excess.max((f - mean) / f.abs().max(1.0));

        let scaled: Vec<f64> = lambda.iter().map(|v| c * v).collect();
        match spec.eval(&scaled) {
            Ok(fc) => {
                let rel = (fc - c * f).abs() / (c * f);
                report.homogeneity_rel_err = report.homogeneity_rel_err.max(rel);
            }
            Err(e) => report.failures.push(format!("homogeneity at {scaled:?}: {e}")),
        }

        let mid: Vec<f64> = lambda.iter().zip(&mu).map(|(a, b)| 0.5 * (a + b)).collect();
        match (spec.eval(&mu), spec.eval(&mid)) {
            (Ok(fm), Ok(fmid)) => {
                report.concavity_margin = report.concavity_margin.min(fmid - 0.5 * (f + fm));
            }
            (Err(e), _) | (_, Err(e)) => report.failures.push(format!("concavity: {e}")),
        }
    }

    if samples > 0 {
        if !(report.min_partial > 0.0) {
            report.failures.push(format!("monotonicity: min f_i = {:e}", report.min_partial));
        }
        if report.concavity_margin < -tol.concavity {
            report.failures.push(format!("concavity: margin {:e}", report.concavity_margin));
        }
        if report.homogeneity_rel_err > tol.homogeneity {
            report.failures.push(format!("homogeneity: rel err {:e}", report.homogeneity_rel_err));
        }
        if report.upper_mean_excess > tol.upper_mean {
            report.failures.push(format!("f <= mean: excess {:e}", report.upper_mean_excess));
        }
        if report.gradient_sum_margin < -tol.gradient_sum {
            report.failures.push(format!("sum f_i >= 1: margin {:e}", report.gradient_sum_margin));
        }
        if report.euler_rel_err > tol.euler {
            report.failures.push(format!("euler identity: rel err {:e}", report.euler_rel_err));
        }
    }
    if report.normalization_err != 0.0 {
        report.failures.push(format!("normalization: |f(1)-1| = {:e}", report.normalization_err));
    }
    report
}

/// Largest search value before giving up on the shift condition.
pub const SHIFT_SEARCH_CAP: f64 = 1e12;

/// Smallest `R` on the grid `{0, 1, 2, 4, ...}` with `f(κ_1, ..., κ_d + R) >= C`
/// for every sample.
pub fn large_shift_speed(spec: &CurvatureFunctionSpec, samples: &[CurvatureVector], target: f64) -> Result<f64> {
    for s in samples {
        if !spec.contains(s.as_slice()) {
            return Err(FlowError::OutsideCone {
                index: cone_violation(s.as_slice(), spec.cone, spec.cone_floor).unwrap_or(1),
            });
        }
    }
    let satisfied = |shift: f64| -> Result<bool> {
        for s in samples {
            let mut v = s.0.clone();
            *v.last_mut().expect("nonempty") += shift;
            if spec.eval(&v)? < target {
                return Ok(false);
            }
        }
        Ok(true)
    };
    if satisfied(0.0)? {
        return Ok(0.0);
    }
    let mut shift = 1.0;
    while shift <= SHIFT_SEARCH_CAP {
        if satisfied(shift)? {
            return Ok(shift);
        }
        shift *= 2.0;
    }
    Err(FlowError::ConditionViolation(format!(
        "no shift R <= {SHIFT_SEARCH_CAP:e} lifts f above {target}"
    )))
}
