//! Initial data for the ball, dumbbell and CSV scenarios: `u0 = 1/dist(x, ∂Ω_0) + |x|²`
//! inside `Ω_0`, undefined (`+∞`) outside.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use crate::error::{FlowError, Result};
use crate::grid::Grid;
use crate::ladder::label_components;
use crate::solver::InitialData;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scenario {
    /// `Ω_0 = B_ρ(0)`.
    Ball { radius: f64 },
    /// Two discs of radius `a` centred at `(±c, 0)` joined by a neck `|y| < w`, `|x| <= c`.
    Dumbbell { a: f64, c: f64, w: f64 },
    /// Nodal values read from a CSV file (`x_1,...,x_d,u`, `inf` for undefined).
    CustomCsv { path: String },
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Scenario::Ball { radius } if !(radius > 0.0) => {
                Err(FlowError::Config(format!("ball radius must be positive, got {radius}")))
            }
            Scenario::Dumbbell { a, c, w } => {
                if !(a > 0.0 && c > 0.0) {
                    return Err(FlowError::Config("dumbbell lobes need a > 0 and c > 0".into()));
                }
                if !(w > 0.0) {
                    return Err(FlowError::Config(format!("neck half width w = {w} leaves the lobes disconnected")));
                }
                if w >= a {
                    return Err(FlowError::Config(format!("neck half width w = {w} must be smaller than the lobe radius a = {a}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Distance from `x` to `∂Ω_0` for `x ∈ Ω_0`, `None` outside.
    pub fn interior_distance(&self, x: &[f64]) -> Option<f64> {
        match *self {
            Scenario::Ball { radius } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                (r < radius).then(|| radius - r)
            }
            Scenario::Dumbbell { a, c, w } => dumbbell_distance(a, c, w, x),
            Scenario::CustomCsv { .. } => None,
        }
    }
}

fn in_dumbbell(a: f64, c: f64, w: f64, x: f64, y: f64) -> bool {
    let in_disc = |cx: f64| (x - cx).powi(2) + y * y < a * a;
    in_disc(-c) || in_disc(c) || (x.abs() <= c && y.abs() < w)
}

/// Exact distance to the boundary of the dumbbell. The boundary consists of the
/// two circles minus the arcs inside the neck, and the neck edges `y = ±w`
/// between the circles.
fn dumbbell_distance(a: f64, c: f64, w: f64, p: &[f64]) -> Option<f64> {
    let (x, y) = (p[0], p.get(1).copied().unwrap_or(0.0));
    if p.len() > 2 && p[2..].iter().any(|v| *v != 0.0) {
        // third axis: the dumbbell is extruded as a solid of revolution about the x axis
        let ry = p[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        return dumbbell_distance(a, c, w, &[x, ry]);
    }
    if !in_dumbbell(a, c, w, x, y) {
        return None;
    }
    let half_gap = (a * a - w * w).sqrt();
    let window = (w / a).asin();
    let mut best = f64::INFINITY;

    for (cx, inner_angle) in [(-c, 0.0), (c, PI)] {
        let (dx, dy) = (x - cx, y);
        let r = (dx * dx + dy * dy).sqrt();
        let theta = dy.atan2(dx);
        let mut off = (theta - inner_angle).abs();
        if off > PI {
            off = 2.0 * PI - off;
        }
        if r > 0.0 && off >= window {
            best = best.min((a - r).abs());
        } else {
            // nearest point of the full circle lies in the excluded window: use the arc ends
            let ex = cx + if inner_angle == 0.0 { half_gap } else { -half_gap };
            for ey in [w, -w] {
                best = best.min(((x - ex).powi(2) + (y - ey).powi(2)).sqrt());
            }
            if r == 0.0 {
                best = best.min(a);
            }
        }
    }
    let (x0, x1) = (-c + half_gap, c - half_gap);
    if x1 > x0 {
        for ey in [w, -w] {
            let cx = x.clamp(x0, x1);
            best = best.min(((x - cx).powi(2) + (y - ey).powi(2)).sqrt());
        }
    }
    Some(best)
}

/// `u0 = 1/dist(x, ∂Ω_0) + |x|²` inside `Ω_0`, `+∞` elsewhere.
pub fn build_initial_data(scenario: &Scenario, grid: &Grid) -> Result<InitialData> {
    scenario.validate()?;
    if let Scenario::CustomCsv { path } = scenario {
        return read_initial_csv(Path::new(path), grid);
    }
    let values = grid.sample(|x| match scenario.interior_distance(x) {
        Some(d) if d > 0.0 => 1.0 / d + x.iter().map(|v| v * v).sum::<f64>(),
        _ => f64::INFINITY,
    });
    if let Scenario::Dumbbell { .. } = scenario {
        let mask: Vec<bool> = values.iter().map(|v| v.is_finite()).collect();
        let (_, count) = label_components(grid, &mask);
        if count != 1 {
            return Err(FlowError::Config(format!(
                "dumbbell initial domain has {count} components on this grid; the neck is not resolved"
            )));
        }
    }
    InitialData::new(grid.clone(), values)
}

/// Reads `x_1,...,x_d,u` rows; nodes not listed are undefined. Lines starting
/// with `#` are comments.
pub fn read_initial_csv(path: &Path, grid: &Grid) -> Result<InitialData> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FlowError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_initial_csv(&text, grid)
}

pub fn parse_initial_csv(text: &str, grid: &Grid) -> Result<InitialData> {
    let d = grid.dim;
    let mut values = vec![f64::INFINITY; grid.len()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(FlowError::Config(format!(
                "line {}: expected {} columns, found {}",
                lineno + 1,
                d + 1,
                fields.len()
            )));
        }
        let nums = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| FlowError::Config(format!("line {}: {e}", lineno + 1)))?;
        let idx = grid.nearest(&nums[..d]).ok_or_else(|| {
            FlowError::Config(format!("line {}: point {:?} is not a grid node", lineno + 1, &nums[..d]))
        })?;
        values[idx] = nums[d];
    }
    InitialData::new(grid.clone(), values)
}
