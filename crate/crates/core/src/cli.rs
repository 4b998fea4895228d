//! Command-line entry point.
//!
//! Exit codes: 0 all requested checks passed, 1 a monitor or property check
//! failed, 2 configuration error, 3 numerical fault.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::config::{Config, RawConfig};
use crate::curvature::{verify_structure_conditions, CurvatureFunctionSpec};
use crate::error::{FlowError, Result};
use crate::io::{self, OutputDir};
use crate::ladder::{component_timeline, extract_domain, first_split, ladder_run};
use crate::monitors::{self, MonitorReport};
use crate::radial::{ball_profile, cylinder_extinction_time, radial_initial, radial_run};
use crate::scenario::{build_initial_data, Scenario};
use crate::solver::{initialize, run, InitialData, RunResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const ENV_OUT: &str = "CURVEFLOW_OUT";
pub const DEFAULT_OUT: &str = "curveflow-out";

const SPEED_HELP: &str = "Speed grammar: H1 | Hk^1/k:k=<int> | quotient:k=<int>,l=<int> | Gauss";

#[derive(Debug, Parser)]
#[command(name = "curveflow", version, about = "Graphical curvature flow simulator", after_help = SPEED_HELP)]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set ceiling=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (beats CURVEFLOW_OUT and the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One Dirichlet run at the configured ceiling, with monitors.
    Run(Common),
    /// Runs at every ceiling of `ladder` and the stabilization table.
    Ladder(Common),
    /// Rotationally symmetric run of the ball scenario.
    Radial(Common),
    /// Samples the structure conditions of a speed function.
    Properties {
        #[command(flatten)]
        common: Common,
        #[arg(long, help = SPEED_HELP)]
        speed: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dimension: Option<usize>,
    },
    /// Re-evaluates monitors on a directory of stored snapshot CSVs.
    Monitors {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshots: PathBuf,
    },
    /// Prints a summary table of output directories (their manifest.json).
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

/// One named pass/fail line of a command's summary.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    fn from_monitor(r: &MonitorReport) -> Self {
        let detail = format!(
            "worst {:.6e} tol {:.3e}{}",
            r.worst_violation,
            r.tolerance,
            if r.vacuous { " (vacuous)" } else { "" }
        );
        Self::new(format!("monitor:{}", r.monitor), r.ok(), detail)
    }
}

#[derive(Debug, Serialize)]
struct Summary<'a, T: Serialize> {
    command: &'a str,
    config: &'a std::collections::BTreeMap<String, String>,
    resolved: std::collections::BTreeMap<String, String>,
    checks: &'a [Check],
    result: T,
}

fn exit_code(e: &FlowError) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else if matches!(e, FlowError::ConditionViolation(_)) {
        EXIT_CHECK_FAILED
    } else {
        EXIT_CONFIG
    }
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_CONFIG;
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.cmd) {
        Ok(checks) => {
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(common: &Common, extra: &[(String, String)]) -> Result<Config> {
    let mut raw = match &common.config {
        Some(p) => RawConfig::from_file(p)?,
        None => RawConfig::default(),
    };
    for (k, v) in extra {
        raw.set(&format!("{k}={v}"))?;
    }
    for s in &common.set {
        raw.set(s)?;
    }
    Config::from_raw(raw)
}

/// `--out`, then `CURVEFLOW_OUT`, then the config's `output`, then the default.
pub fn resolve_output(flag: Option<&Path>, env: Option<OsString>, cfg: &Config) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(e) = env.filter(|e| !e.is_empty()) {
        return PathBuf::from(e);
    }
    if cfg.raw.given.contains_key("output") {
        return cfg.output.clone();
    }
    PathBuf::from(DEFAULT_OUT)
}

fn output_dir(common: &Common, cfg: &Config) -> Result<OutputDir> {
    OutputDir::create(resolve_output(common.out.as_deref(), std::env::var_os(ENV_OUT), cfg))
}

fn finish<T: Serialize>(out: OutputDir, command: &str, cfg: &Config, checks: Vec<Check>, result: T) -> Result<Vec<Check>> {
    let summary = Summary { command, config: &cfg.raw.given, resolved: cfg.raw.resolved(), checks: &checks, result };
    out.finish(&summary)?;
    Ok(checks)
}

fn dispatch(cmd: Command) -> Result<Vec<Check>> {
    match cmd {
        Command::Run(common) => cmd_run(&common),
        Command::Ladder(common) => cmd_ladder(&common),
        Command::Radial(common) => cmd_radial(&common),
        Command::Properties { common, speed, samples, seed, dimension } => {
            let mut extra = Vec::new();
            if let Some(s) = speed {
                extra.push(("speed".to_string(), s));
            }
            if let Some(n) = samples {
                extra.push(("samples".to_string(), n.to_string()));
            }
            if let Some(s) = seed {
                extra.push(("seed".to_string(), s.to_string()));
            }
            if let Some(d) = dimension {
                extra.push(("dimension".to_string(), d.to_string()));
            }
            cmd_properties(&common, &extra)
        }
        Command::Monitors { common, snapshots } => cmd_monitors(&common, &snapshots),
        Command::Report { dirs, json } => cmd_report(&dirs, json.as_deref()),
    }
}

fn initial_data(cfg: &Config) -> Result<InitialData> {
    cfg.require_compatible()?;
    build_initial_data(&cfg.scenario, &cfg.grid()?)
}

/// Evaluates the monitors enabled in `cfg` on a run.
pub fn evaluate_monitors(run: &RunResult, cfg: &Config) -> Result<Vec<MonitorReport>> {
    let m = &cfg.monitors;
    let spec = &cfg.speed;
    let mut out = Vec::new();
    for name in &m.enabled {
        out.push(match name.as_str() {
            "gradient_bound" => monitors::monitor_gradient_bound(run, m.level, m.tol)?,
            "speed_lower" => monitors::monitor_speed_lower(run, m.level, spec, m.tol)?,
            "c2_bound" => monitors::monitor_c2_bound(run, m.level, m.c2_cap)?,
            "f_ratio" => monitors::monitor_f_ratio(run, spec, m.tol)?,
            "holder" => monitors::monitor_holder(run, m.holder_level, m.holder_tol)?,
            "monotone" => monitors::monitor_monotone(run, m.monotone_tol),
            other => return Err(FlowError::Config(format!("unknown monitor '{other}'"))),
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct RunJson<'a> {
    run: &'a RunResult,
    umin_series: &'a [(f64, f64)],
    first_split: Option<f64>,
}

fn write_run(out: &mut OutputDir, prefix: &str, run: &RunResult, write_snapshots: bool) -> Result<Option<f64>> {
    let timeline = component_timeline(run);
    let split = first_split(&timeline);
    out.write_json(&format!("{prefix}run.json"), &RunJson { run, umin_series: &run.umin_series, first_split: split })?;
    out.write_json(&format!("{prefix}timeline.json"), &timeline)?;
    if write_snapshots {
        for (k, s) in run.snapshots.iter().enumerate() {
            out.write(&format!("{prefix}snapshots/snap_{k:05}.csv"), io::snapshot_csv(&run.grid, s, run.ceiling).as_bytes())?;
            let slice = extract_domain(&run.grid, s, run.ceiling);
            out.write(&format!("{prefix}domains/domain_{k:05}.csv"), io::domain_mask_csv(&run.grid, &slice).as_bytes())?;
        }
    }
    Ok(split)
}

fn cmd_run(common: &Common) -> Result<Vec<Check>> {
    let cfg = load_config(common, &[])?;
    let u0 = initial_data(&cfg)?;
    let mut out = output_dir(common, &cfg)?;
    let state = initialize(&u0, cfg.ceiling, &cfg.stepper, &cfg.speed)?;
    let result = run(state, &cfg.speed, &cfg.stepper, &mut [])?;
    let split = write_run(&mut out, "", &result, cfg.write_snapshots)?;
    let mut reports = evaluate_monitors(&result, &cfg)?;
    if let Some(offset) = cfg.comparison_offset {
        let lifted = InitialData::new(u0.grid.clone(), u0.values.iter().map(|v| v + offset).collect())?;
        let state_b = initialize(&lifted, cfg.ceiling, &cfg.stepper, &cfg.speed)?;
        let run_b = run(state_b, &cfg.speed, &cfg.stepper, &mut [])?;
        reports.push(if offset >= 0.0 {
            monitors::monitor_comparison(&result, &run_b)?
        } else {
            monitors::monitor_comparison(&run_b, &result)?
        });
    }
    out.write_json("monitors.json", &reports)?;
    let checks: Vec<Check> = reports.iter().map(Check::from_monitor).collect();
    #[derive(Serialize)]
    struct R<'a> {
        stop: crate::solver::StopReason,
        escape_time: Option<f64>,
        steps: usize,
        first_split: Option<f64>,
        monitors: Vec<(&'a str, bool, bool)>,
    }
    let r = R {
        stop: result.stop,
        escape_time: result.escape_time,
        steps: result.steps,
        first_split: split,
        monitors: reports.iter().map(|r| (r.monitor.as_str(), r.passed, r.vacuous)).collect(),
    };
    println!(
        "stop {:?}, escape time {}, {} steps",
        result.stop,
        result.escape_time.map_or("none".to_string(), |t| format!("{t:.6}")),
        result.steps
    );
    finish(out, "run", &cfg, checks, r)
}

fn cmd_ladder(common: &Common) -> Result<Vec<Check>> {
    let cfg = load_config(common, &[])?;
    let u0 = initial_data(&cfg)?;
    let mut out = output_dir(common, &cfg)?;
    let result = ladder_run(&u0, &cfg.ladder, &cfg.speed, &cfg.stepper)?;
    #[derive(Serialize)]
    struct Entry<'a> {
        #[serde(rename = "L")]
        l: f64,
        escape_time: Option<f64>,
        stop: crate::solver::StopReason,
        steps: usize,
        /// Against the next larger ceiling, `(t, max diff)` per common snapshot.
        stabilization_max_diff: Option<&'a [(f64, f64)]>,
    }
    let entries: Vec<Entry> = result
        .runs
        .iter()
        .enumerate()
        .map(|(i, r)| Entry {
            l: r.ceiling,
            escape_time: r.escape_time,
            stop: r.stop,
            steps: r.steps,
            stabilization_max_diff: result.table.get(i).map(|row| row.series.as_slice()),
        })
        .collect();
    out.write_json("ladder.json", &entries)?;
    out.write_json("stabilization.json", &result.table)?;
    for r in &result.runs {
        write_run(&mut out, &format!("L{}/", r.ceiling), r, cfg.write_snapshots)?;
    }
    let checks: Vec<Check> = result
        .table
        .iter()
        .map(|row| {
            Check::new(
                format!("stabilization:L{}-L{}", row.l_small, row.l_big),
                row.stabilized,
                format!("max diff {:.6e} tol {:.3e}", row.max_diff, row.tolerance),
            )
        })
        .collect();
    finish(out, "ladder", &cfg, checks, &entries)
}

fn cmd_radial(common: &Common) -> Result<Vec<Check>> {
    let cfg = load_config(common, &[])?;
    cfg.require_compatible()?;
    let Scenario::Ball { radius } = cfg.scenario else {
        return Err(FlowError::Config("the radial command needs the ball scenario".into()));
    };
    let mut out = output_dir(common, &cfg)?;
    let initial = radial_initial(ball_profile(radius), cfg.ceiling, &cfg.stepper, &cfg.radial)?;
    let result = radial_run(initial, cfg.ceiling, &cfg.speed, &cfg.stepper, &cfg.radial)?;
    for k in 0..result.snapshots.len() {
        out.write(&format!("snapshots/radial_{k:05}.csv"), io::radial_snapshot_csv(&result, k).as_bytes())?;
    }
    out.write_json("umin.json", &result.umin_series)?;
    let extinction = cylinder_extinction_time(radius, &cfg.speed)?;
    #[derive(Serialize)]
    struct R {
        stop: crate::solver::StopReason,
        escape_time: Option<f64>,
        cylinder_extinction_time: f64,
        relative_error: Option<f64>,
        steps: usize,
    }
    let r = R {
        stop: result.stop,
        escape_time: result.escape_time,
        cylinder_extinction_time: extinction,
        relative_error: result.escape_time.map(|t| (t - extinction).abs() / extinction),
        steps: result.steps,
    };
    out.write_json("radial.json", &r)?;
    println!(
        "radial escape time {} (cylinder extinction {extinction:.6})",
        r.escape_time.map_or("none".to_string(), |t| format!("{t:.6}"))
    );
    finish(out, "radial", &cfg, Vec::new(), r)
}

fn cmd_properties(common: &Common, extra: &[(String, String)]) -> Result<Vec<Check>> {
    let cfg = load_config(common, extra)?;
    let mut out = output_dir(common, &cfg)?;
    let spec: &CurvatureFunctionSpec = &cfg.speed;
    let report = verify_structure_conditions(spec, cfg.samples, cfg.seed);
    out.write_json("properties.json", &report)?;
    let detail = if report.passed() { format!("{} samples", report.samples) } else { report.failures.join("; ") };
    let checks = vec![Check::new(format!("properties:{} d={}", spec.name(), spec.dim), report.passed(), detail)];
    finish(out, "properties", &cfg, checks, &report)
}

fn cmd_monitors(common: &Common, dir: &Path) -> Result<Vec<Check>> {
    let cfg = load_config(common, &[])?;
    let result = io::load_snapshot_dir(dir, &cfg.stepper)?;
    if result.grid.dim != cfg.dimension {
        return Err(FlowError::Config(format!(
            "snapshots are {}-dimensional but the config says dimension = {}",
            result.grid.dim, cfg.dimension
        )));
    }
    let mut out = output_dir(common, &cfg)?;
    let reports = evaluate_monitors(&result, &cfg)?;
    out.write_json("monitors.json", &reports)?;
    let checks: Vec<Check> = reports.iter().map(Check::from_monitor).collect();
    finish(out, "monitors", &cfg, checks, result.snapshots.len())
}

#[derive(Debug, Serialize)]
struct ReportRow {
    dir: String,
    command: String,
    check: String,
    passed: bool,
    detail: String,
}

fn cmd_report(dirs: &[PathBuf], json: Option<&Path>) -> Result<Vec<Check>> {
    let mut rows = Vec::new();
    for dir in dirs {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| FlowError::Config(format!("{}: {e}", path.display())))?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| FlowError::Config(format!("{}: {e}", path.display())))?;
        let summary = &v["summary"];
        let command = summary["command"].as_str().unwrap_or("?").to_string();
        let checks = summary["checks"].as_array().cloned().unwrap_or_default();
        if checks.is_empty() {
            rows.push(ReportRow {
                dir: dir.display().to_string(),
                command: command.clone(),
                check: "-".into(),
                passed: true,
                detail: "no checks requested".into(),
            });
        }
        for c in checks {
            rows.push(ReportRow {
                dir: dir.display().to_string(),
                command: command.clone(),
                check: c["name"].as_str().unwrap_or("?").to_string(),
                passed: c["passed"].as_bool().unwrap_or(false),
                detail: c["detail"].as_str().unwrap_or("").to_string(),
            });
        }
    }
    let w_dir = rows.iter().map(|r| r.dir.len()).max().unwrap_or(3).max(3);
    let w_cmd = rows.iter().map(|r| r.command.len()).max().unwrap_or(7).max(7);
    let w_chk = rows.iter().map(|r| r.check.len()).max().unwrap_or(5).max(5);
    println!("{:<w_dir$}  {:<w_cmd$}  {:<w_chk$}  {:<6}  detail", "dir", "command", "check", "status");
    for r in &rows {
        println!(
            "{:<w_dir$}  {:<w_cmd$}  {:<w_chk$}  {:<6}  {}",
            r.dir,
            r.command,
            r.check,
            if r.passed { "pass" } else { "FAIL" },
            r.detail
        );
    }
    if let Some(p) = json {
        let mut text = serde_json::to_string_pretty(&rows).map_err(|e| FlowError::Io(e.to_string()))?;
        text.push('\n');
        std::fs::write(p, text).map_err(|e| FlowError::Io(format!("{}: {e}", p.display())))?;
    }
    // the table is the output; only the pass/fail status is returned
    Ok(rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| Check::new(format!("{}:{}", r.dir, r.check), false, r.detail.clone()))
        .collect())
}
