//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys are rejected.
//! Command-line overrides use the same `key=value` form and win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::curvature::CurvatureFunctionSpec;
use crate::error::{FlowError, Result};
use crate::grid::Grid;
use crate::ladder::LadderConfig;
use crate::monitors;
use crate::radial::{cylinder_speed, RadialConfig, RadialScheme};
use crate::scenario::Scenario;
use crate::solver::{AdmissibilityMode, CutoffBlend, StepperConfig};

/// Every accepted key with its default (empty means unset).
pub const KEYS: &[(&str, &str)] = &[
    ("scenario", "ball"),
    ("radius", "1"),
    ("dumbbell_a", "0.5"),
    ("dumbbell_c", "1"),
    ("dumbbell_w", "0.15"),
    ("csv_path", ""),
    ("speed", "H1"),
    ("dimension", "2"),
    ("half_width", "2"),
    ("nodes", "129"),
    ("ceiling", "40"),
    ("ladder", "20,40"),
    ("stabilization_tol", "1e-3"),
    ("sigma", "0.4"),
    ("dt_min", "1e-12"),
    ("t_end", "1.5"),
    ("snapshot_every", "0.05"),
    ("epsilon_cutoff", "0.05"),
    ("blend", "quadratic"),
    ("smoothing_passes", "1"),
    ("admissibility", "strict"),
    ("boost_step", "0.5"),
    ("max_boosts", "40"),
    ("escape_margin", "2"),
    ("steep_hold_slope", "0.5"),
    ("monitors", "gradient_bound,speed_lower,c2_bound,f_ratio,holder,monotone"),
    ("monitor_level", "20"),
    ("holder_level", "20"),
    ("monitor_tol", "1e-2"),
    ("holder_tol", "5e-2"),
    ("c2_cap", "10"),
    ("monotone_tol", "1e-12"),
    ("comparison_offset", ""),
    ("write_snapshots", "true"),
    ("output", "curveflow-out"),
    ("seed", "7"),
    ("samples", "10000"),
    ("radial_nodes", "4096"),
    ("radial_r_max", "2"),
    ("radial_scheme", "implicit"),
    ("radial_dt_max", "1e-4"),
    ("radial_du_max", "0.05"),
];

pub const MONITOR_NAMES: &[&str] = &["gradient_bound", "speed_lower", "c2_bound", "f_ratio", "holder", "monotone"];

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// Splits `key = value` (or `key=value`); `what` names the source in errors.
pub fn parse_pair(text: &str, what: &str) -> Result<(String, String)> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| FlowError::Config(format!("{what}: expected 'key = value', got '{text}'")))?;
    let (k, v) = (k.trim(), v.trim());
    if !is_known(k) {
        return Err(FlowError::Config(format!("{what}: unknown key '{k}'")));
    }
    Ok((k.to_string(), v.to_string()))
}

/// Parses config text into pairs in file order.
pub fn parse_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_pair(line, &format!("line {}", n + 1))?);
    }
    Ok(out)
}

/// Raw settings: the verbatim user-supplied pairs and the merged table with defaults.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RawConfig {
    pub given: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut raw = Self::default();
        for (k, v) in parse_text(text)? {
            if raw.given.insert(k.clone(), v).is_some() {
                return Err(FlowError::Config(format!("key '{k}' given twice")));
            }
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FlowError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn set(&mut self, pair: &str) -> Result<()> {
        let (k, v) = parse_pair(pair, "--set")?;
        self.given.insert(k, v);
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        debug_assert!(is_known(key), "{key}");
        self.given
            .get(key)
            .map(String::as_str)
            .or_else(|| KEYS.iter().find(|(k, _)| *k == key).map(|(_, v)| *v))
            .unwrap_or("")
    }

    /// Every key with its effective value.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        KEYS.iter().map(|(k, _)| (k.to_string(), self.get(k).to_string())).collect()
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse().map_err(|e| FlowError::Config(format!("{key} = '{v}': {e}")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| FlowError::Config(format!("{key}: '{s}': {e}"))))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorSettings {
    pub enabled: Vec<String>,
    pub level: f64,
    pub holder_level: f64,
    pub tol: f64,
    pub holder_tol: f64,
    pub c2_cap: f64,
    pub monotone_tol: f64,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self {
            enabled: MONITOR_NAMES.iter().map(|s| s.to_string()).collect(),
            level: 20.0,
            holder_level: 20.0,
            tol: monitors::DEFAULT_MONITOR_TOL,
            holder_tol: monitors::DEFAULT_HOLDER_TOL,
            c2_cap: monitors::DEFAULT_C2_CAP,
            monotone_tol: monitors::DEFAULT_MONOTONE_TOL,
        }
    }
}

/// Typed configuration.
#[derive(Debug, Clone, Serialize)]
pub struct Config {
    pub raw: RawConfig,
    pub scenario: Scenario,
    #[serde(serialize_with = "speed_name")]
    pub speed: CurvatureFunctionSpec,
    pub dimension: usize,
    pub half_width: Vec<f64>,
    pub nodes: Vec<usize>,
    pub ceiling: f64,
    pub ladder: LadderConfig,
    pub stepper: StepperConfig,
    pub monitors: MonitorSettings,
    pub comparison_offset: Option<f64>,
    pub write_snapshots: bool,
    pub output: PathBuf,
    pub seed: u64,
    pub samples: usize,
    pub radial: RadialConfig,
}

fn speed_name<S: serde::Serializer>(spec: &CurvatureFunctionSpec, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&spec.name())
}

fn per_axis<T: Copy>(key: &str, v: Vec<T>, dim: usize) -> Result<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v),
        n => Err(FlowError::Config(format!("{key} needs 1 or {dim} values, got {n}"))),
    }
}

impl Config {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let dimension: usize = raw.num("dimension")?;
        if !(1..=3).contains(&dimension) {
            return Err(FlowError::Config(format!("dimension must be 1, 2 or 3, got {dimension}")));
        }
        let speed = CurvatureFunctionSpec::parse(raw.get("speed"), dimension)?;
        let scenario = match raw.get("scenario") {
            "ball" => Scenario::Ball { radius: raw.num("radius")? },
            "dumbbell" => Scenario::Dumbbell { a: raw.num("dumbbell_a")?, c: raw.num("dumbbell_c")?, w: raw.num("dumbbell_w")? },
            "custom_csv" => {
                let path = raw.get("csv_path");
                if path.is_empty() {
                    return Err(FlowError::Config("scenario custom_csv needs csv_path".into()));
                }
                Scenario::CustomCsv { path: path.to_string() }
            }
            other => return Err(FlowError::Config(format!("unknown scenario '{other}' (ball|dumbbell|custom_csv)"))),
        };
        scenario.validate()?;
        if matches!(scenario, Scenario::Dumbbell { .. }) && dimension < 2 {
            return Err(FlowError::Config("the dumbbell scenario needs dimension >= 2".into()));
        }
        let half_width = per_axis("half_width", raw.list("half_width")?, dimension)?;
        let nodes = per_axis("nodes", raw.list("nodes")?, dimension)?;
        let ceiling: f64 = raw.num("ceiling")?;
        let ladder = LadderConfig { l_values: raw.list("ladder")?, stabilization_tol: raw.num("stabilization_tol")? };
        ladder.validate()?;

        let admissibility = match raw.get("admissibility") {
            "strict" => AdmissibilityMode::Strict,
            "auto_boost" => AdmissibilityMode::AutoBoost { mu_step: raw.num("boost_step")?, max_boosts: raw.num("max_boosts")? },
            other => return Err(FlowError::Config(format!("unknown admissibility mode '{other}' (strict|auto_boost)"))),
        };
        let stepper = StepperConfig {
            sigma: raw.num("sigma")?,
            dt_min: raw.num("dt_min")?,
            t_end: raw.num("t_end")?,
            snapshot_every: raw.num("snapshot_every")?,
            epsilon_cutoff: raw.num("epsilon_cutoff")?,
            blend: CutoffBlend::parse(raw.get("blend"))?,
            smoothing_passes: raw.num("smoothing_passes")?,
            admissibility,
            escape_margin: raw.num("escape_margin")?,
            steep_hold_slope: raw.num("steep_hold_slope")?,
        };
        stepper.validate()?;

        let enabled: Vec<String> = raw.list("monitors")?;
        if let Some(bad) = enabled.iter().find(|m| !MONITOR_NAMES.contains(&m.as_str())) {
            return Err(FlowError::Config(format!("unknown monitor '{bad}' (known: {})", MONITOR_NAMES.join(","))));
        }
        let monitors = MonitorSettings {
            enabled,
            level: raw.num("monitor_level")?,
            holder_level: raw.num("holder_level")?,
            tol: raw.num("monitor_tol")?,
            holder_tol: raw.num("holder_tol")?,
            c2_cap: raw.num("c2_cap")?,
            monotone_tol: raw.num("monotone_tol")?,
        };
        let comparison_offset = match raw.get("comparison_offset") {
            "" => None,
            _ => Some(raw.num("comparison_offset")?),
        };
        let radial = RadialConfig {
            nodes: raw.num("radial_nodes")?,
            r_max: raw.num("radial_r_max")?,
            scheme: match raw.get("radial_scheme") {
                "implicit" => RadialScheme::Implicit,
                "explicit" => RadialScheme::Explicit,
                other => return Err(FlowError::Config(format!("unknown radial_scheme '{other}' (implicit|explicit)"))),
            },
            dt_max: raw.num("radial_dt_max")?,
            du_max: raw.num("radial_du_max")?,
        };
        radial.validate()?;
        let cfg = Self {
            scenario,
            speed,
            dimension,
            half_width,
            nodes,
            ceiling,
            ladder,
            stepper,
            monitors,
            comparison_offset,
            write_snapshots: raw.num("write_snapshots")?,
            output: PathBuf::from(raw.get("output")),
            seed: raw.num("seed")?,
            samples: raw.num("samples")?,
            radial,
            raw,
        };
        cfg.grid()?;
        Ok(cfg)
    }

    /// Ball and dumbbell data blow up at the domain boundary, so their graphs
    /// are asymptotic to a cylinder; the speed must be defined there.
    pub fn require_compatible(&self) -> Result<()> {
        if matches!(self.scenario, Scenario::CustomCsv { .. }) {
            return Ok(());
        }
        cylinder_speed(&self.speed).map(|_| ()).map_err(|e| {
            FlowError::Config(format!(
                "speed {} is not usable with the {} scenario: its graph is asymptotic to a cylinder whose \
                 curvature vector (1,...,1,0) lies outside the open cone of this speed ({e})",
                self.speed.name(),
                self.raw.get("scenario")
            ))
        })
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(&self.half_width, &self.nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = Config::from_raw(RawConfig::default()).unwrap();
        cfg.require_compatible().unwrap();
        assert_eq!(cfg.nodes, vec![129, 129]);
        assert_eq!(cfg.ceiling, 40.0);
        assert_eq!(cfg.speed.name(), "H1");
        assert_eq!(cfg.ladder.l_values, vec![20.0, 40.0]);
    }

    #[test]
    fn text_and_overrides() {
        let mut raw = RawConfig::from_text("# run\nscenario = dumbbell\nnodes = 161, 97 # grid\nhalf_width=2,1.2\n").unwrap();
        raw.set("ceiling=30").unwrap();
        let cfg = Config::from_raw(raw).unwrap();
        assert_eq!(cfg.nodes, vec![161, 97]);
        assert_eq!(cfg.ceiling, 30.0);
        assert_eq!(cfg.scenario, Scenario::Dumbbell { a: 0.5, c: 1.0, w: 0.15 });
        assert_eq!(cfg.raw.given.len(), 4);
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(RawConfig::from_text("colour = red\n").is_err());
        assert!(RawConfig::from_text("ceiling = 1\nceiling = 2\n").is_err());
        assert!(RawConfig::from_text("just words\n").is_err());
        assert!(RawConfig::default().set("nope=1").is_err());
    }

    #[test]
    fn gauss_ball_rejected_with_cone_explanation() {
        let raw = RawConfig::from_text("speed = Gauss\n").unwrap();
        let err = Config::from_raw(raw).unwrap().require_compatible().unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("cone"), "{err}");
    }

    #[test]
    fn bad_values_rejected() {
        for text in ["nodes = 5,5,5\n", "sigma = 2\n", "scenario = torus\n", "monitors = vibes\n", "dimension = 4\n", "ladder = 40,20\n"] {
            let raw = RawConfig::from_text(text).unwrap();
            assert!(Config::from_raw(raw).is_err(), "{text}");
        }
    }
}
