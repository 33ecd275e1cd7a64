//! Command implementations behind the `invkit` binary, and their output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::config::{load_config, rounding_name, ConfigError, Loaded};
use crate::controller::{export_abstraction, simulate, Controller, ControllerError, SimTrace, SwitchPolicy};
use crate::interval::IntervalBox;
use crate::paving::ModeSet;
use crate::synthesis::{
    inner_approx, margin_probe, outer_approx, Outcome, SynthesisConfig, SynthesisError, SynthesisResult,
};
use crate::system::SwitchedSystem;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunOutcome {
    #[serde(rename = "NONEMPTY")]
    Nonempty,
    #[serde(rename = "EMPTY")]
    Empty,
    #[serde(rename = "BUDGET_EXCEEDED")]
    BudgetExceeded,
}

impl RunOutcome {
    pub fn name(self) -> &'static str {
        match self {
            RunOutcome::Nonempty => "NONEMPTY",
            RunOutcome::Empty => "EMPTY",
            RunOutcome::BudgetExceeded => "BUDGET_EXCEEDED",
        }
    }
}

impl From<Outcome> for RunOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Nonempty => RunOutcome::Nonempty,
            Outcome::Empty => RunOutcome::Empty,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: &'static str,
    pub outcome: RunOutcome,
    pub omega_volume: f64,
    pub result_volume: f64,
    pub epsilon: Option<f64>,
    pub iterations: usize,
    pub boxes_processed: usize,
    pub cells: usize,
    pub transitions: Option<usize>,
    pub exits: Option<usize>,
    pub wall_time: Duration,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn volume_ratio(&self) -> f64 {
        if self.omega_volume > 0.0 {
            self.result_volume / self.omega_volume
        } else {
            0.0
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} {} ratio={:.4} cells={} time={:.3}s",
            self.command,
            self.outcome.name(),
            self.volume_ratio(),
            self.cells,
            self.wall_time.as_secs_f64()
        );
        if let Some(e) = self.epsilon {
            let _ = write!(s, " eps={e}");
        }
        if let Some(t) = self.transitions {
            let _ = write!(s, " transitions={t}");
        }
        if let Some(x) = self.exits {
            let _ = write!(s, " exits={x}");
        }
        s
    }
}

/// Overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub epsilon: Option<f64>,
    /// Worker threads; 0 or `None` uses every core.
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub policy: Option<String>,
}

impl RunOptions {
    fn synthesis(&self, loaded: &Loaded) -> Result<SynthesisConfig, HarnessError> {
        let mut cfg = loaded.synthesis.clone();
        if let Some(e) = self.epsilon {
            if !(e > 0.0) || !e.is_finite() {
                return Err(HarnessError::Argument(format!("epsilon must be positive, got {e}")));
            }
            cfg.epsilon = e;
        }
        cfg.workers = self.workers.unwrap_or(0);
        Ok(cfg)
    }

    fn policy(&self, loaded: &Loaded) -> Result<SwitchPolicy, HarnessError> {
        let name = self.policy.as_deref().unwrap_or(&loaded.config.policy);
        let seed = self.seed.unwrap_or(loaded.config.seed);
        SwitchPolicy::from_name(name, seed)
            .ok_or_else(|| HarnessError::Argument(format!("unknown policy {name:?}")))
    }
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    files.push(path);
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn mode_names(sys: &SwitchedSystem, m: &ModeSet) -> Vec<String> {
    m.iter().map(|p| sys.mode(p).name().to_string()).collect()
}

/// Paving CSV: one `lo1,hi1,...,tag,modes` line per cell.
pub fn paving_csv(sys: &SwitchedSystem, result: &SynthesisResult) -> String {
    let mut s = String::new();
    for (b, m) in &result.cells {
        let _ = writeln!(s, "{},IN,{}", b.to_text(), mode_names(sys, m).join("|"));
    }
    for b in &result.undetermined {
        let _ = writeln!(s, "{},UNDET,", b.to_text());
    }
    s
}

#[derive(Serialize)]
struct PavingCell {
    r#box: Vec<f64>,
    tag: &'static str,
    modes: Vec<String>,
}

#[derive(Serialize)]
struct PavingFile {
    dimension: usize,
    modes: Vec<String>,
    cells: Vec<PavingCell>,
}

pub fn paving_json(sys: &SwitchedSystem, result: &SynthesisResult) -> String {
    let mut cells: Vec<PavingCell> = result
        .cells
        .iter()
        .map(|(b, m)| PavingCell {
            r#box: b.to_flat(),
            tag: "IN",
            modes: mode_names(sys, m),
        })
        .collect();
    cells.extend(result.undetermined.iter().map(|b| PavingCell {
        r#box: b.to_flat(),
        tag: "UNDET",
        modes: Vec::new(),
    }));
    let file = PavingFile {
        dimension: sys.dim(),
        modes: sys.mode_names(),
        cells,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("paving serializes");
    s.push('\n');
    s
}

/// Trace CSV with header `k,x1..xn,mode,in_omega`; the last state has an
/// empty mode.
pub fn trace_csv(sys: &SwitchedSystem, trace: &SimTrace) -> String {
    let n = sys.dim();
    let mut s = String::from("k");
    for i in 1..=n {
        let _ = write!(s, ",x{i}");
    }
    s.push_str(",mode,in_omega\n");
    for (k, x) in trace.states.iter().enumerate() {
        let _ = write!(s, "{k}");
        for v in x {
            let _ = write!(s, ",{v}");
        }
        let mode = trace.modes.get(k).map(|&p| sys.mode(p).name()).unwrap_or("");
        let _ = writeln!(s, ",{mode},{}", trace.in_omega[k]);
    }
    s
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    config: &'a str,
    system_hash: String,
    outcome: RunOutcome,
    epsilon: Option<f64>,
    strategy: &'a str,
    rounding: &'a str,
    iterations: usize,
    boxes_processed: usize,
    cells: usize,
    omega_volume: f64,
    result_volume: f64,
    volume_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    certified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tried_epsilons: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin_probe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exits: Option<usize>,
    wall_time_s: f64,
}

impl<'a> RunMeta<'a> {
    fn new(report: &RunReport, loaded: &'a Loaded, cfg: &SynthesisConfig) -> Self {
        Self {
            command: report.command,
            config: &loaded.config.name,
            system_hash: loaded.system.hash(),
            outcome: report.outcome,
            epsilon: report.epsilon,
            strategy: cfg.strategy.name(),
            rounding: rounding_name(cfg.rounding),
            iterations: report.iterations,
            boxes_processed: report.boxes_processed,
            cells: report.cells,
            omega_volume: report.omega_volume,
            result_volume: report.result_volume,
            volume_ratio: report.volume_ratio(),
            certified: None,
            tried_epsilons: None,
            margin_probe: None,
            transitions: report.transitions,
            exits: report.exits,
            wall_time_s: report.wall_time.as_secs_f64(),
        }
    }

    fn write(&self, dir: &Path, files: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
        let mut s = serde_json::to_string_pretty(self).expect("run metadata serializes");
        s.push('\n');
        write_file(dir, "run.json", &s, files)
    }
}

fn report_for(command: &'static str, loaded: &Loaded, r: &SynthesisResult, outcome: RunOutcome) -> RunReport {
    RunReport {
        command,
        outcome,
        omega_volume: loaded.omega.volume(),
        result_volume: r.volume(),
        epsilon: Some(r.epsilon),
        iterations: r.iterations,
        boxes_processed: r.boxes_processed,
        cells: r.cells.len() + r.undetermined.len(),
        transitions: None,
        exits: None,
        wall_time: r.wall_time,
        files: Vec::new(),
    }
}

/// Runs `f`, turning a budget overrun into its partial result.
fn run_synthesis(
    f: impl FnOnce() -> Result<SynthesisResult, SynthesisError>,
) -> Result<(SynthesisResult, RunOutcome), HarnessError> {
    match f() {
        Ok(r) => {
            let o = r.outcome.into();
            Ok((r, o))
        }
        Err(SynthesisError::IterationBudgetExceeded { partial, .. }) => Ok((*partial, RunOutcome::BudgetExceeded)),
        Err(e) => Err(e.into()),
    }
}

fn write_paving(
    dir: &Path,
    loaded: &Loaded,
    r: &SynthesisResult,
    files: &mut Vec<PathBuf>,
) -> Result<(), HarnessError> {
    write_file(dir, "paving.csv", &paving_csv(&loaded.system, r), files)?;
    write_file(dir, "paving.json", &paving_json(&loaded.system, r), files)
}

pub fn cmd_outer(config: &Path, out_dir: &Path, opts: &RunOptions) -> Result<RunReport, HarnessError> {
    let loaded = load_config(config)?;
    let cfg = opts.synthesis(&loaded)?;
    let (r, outcome) = run_synthesis(|| outer_approx(&loaded.system, &loaded.omega, &cfg))?;
    let mut report = report_for("outer", &loaded, &r, outcome);
    ensure_dir(out_dir)?;
    let mut files = Vec::new();
    write_paving(out_dir, &loaded, &r, &mut files)?;
    RunMeta::new(&report, &loaded, &cfg).write(out_dir, &mut files)?;
    report.files = files;
    Ok(report)
}

pub fn cmd_inner(config: &Path, out_dir: &Path, opts: &RunOptions) -> Result<RunReport, HarnessError> {
    let loaded = load_config(config)?;
    let cfg = opts.synthesis(&loaded)?;
    let (r, outcome) = run_synthesis(|| inner_approx(&loaded.system, &loaded.omega, &cfg))?;
    let mut report = report_for("inner", &loaded, &r, outcome);
    ensure_dir(out_dir)?;
    let mut files = Vec::new();
    write_paving(out_dir, &loaded, &r, &mut files)?;
    if outcome == RunOutcome::Nonempty {
        let ctl = Controller::extract(&loaded.system, &r)?;
        write_file(out_dir, "controller.json", &ctl.to_json(), &mut files)?;
    }
    let mut meta = RunMeta::new(&report, &loaded, &cfg);
    meta.certified = Some(r.certified);
    meta.write(out_dir, &mut files)?;
    report.files = files;
    Ok(report)
}

pub fn cmd_margin(
    config: &Path,
    eps0: f64,
    shrink: f64,
    eps_min: f64,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<RunReport, HarnessError> {
    let loaded = load_config(config)?;
    let cfg = opts.synthesis(&loaded)?;
    let start = Instant::now();
    let probe = margin_probe(&loaded.system, &loaded.omega, &cfg, eps0, shrink, eps_min)?;
    ensure_dir(out_dir)?;
    let mut files = Vec::new();
    let mut report = match &probe.result {
        Some(r) => {
            write_paving(out_dir, &loaded, r, &mut files)?;
            let ctl = Controller::extract(&loaded.system, r)?;
            write_file(out_dir, "controller.json", &ctl.to_json(), &mut files)?;
            report_for("margin", &loaded, r, RunOutcome::Nonempty)
        }
        None => RunReport {
            command: "margin",
            outcome: RunOutcome::Empty,
            omega_volume: loaded.omega.volume(),
            result_volume: 0.0,
            epsilon: None,
            iterations: 0,
            boxes_processed: 0,
            cells: 0,
            transitions: None,
            exits: None,
            wall_time: Duration::ZERO,
            files: Vec::new(),
        },
    };
    report.wall_time = start.elapsed();
    let mut meta = RunMeta::new(&report, &loaded, &cfg);
    meta.tried_epsilons = Some(probe.tried.clone());
    meta.margin_probe = probe.margin_probe;
    meta.write(out_dir, &mut files)?;
    report.files = files;
    Ok(report)
}

fn load_controller(path: &Path, sys: &SwitchedSystem) -> Result<Controller, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(Controller::from_json(&text, sys)?)
}

pub fn cmd_simulate(
    config: &Path,
    controller: &Path,
    x0: Option<&[f64]>,
    steps: Option<usize>,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<RunReport, HarnessError> {
    let loaded = load_config(config)?;
    let cfg = opts.synthesis(&loaded)?;
    let ctl = load_controller(controller, &loaded.system)?;
    let x0 = x0
        .map(<[f64]>::to_vec)
        .or_else(|| loaded.config.x0.clone())
        .ok_or_else(|| HarnessError::Argument("no initial state given".into()))?;
    let steps = steps.or(loaded.config.steps).unwrap_or(100);
    let policy = opts.policy(&loaded)?;
    let start = Instant::now();
    let trace = simulate(&loaded.system, &ctl, &x0, steps, policy)?;
    ensure_dir(out_dir)?;
    let mut files = Vec::new();
    write_file(out_dir, "trace.csv", &trace_csv(&loaded.system, &trace), &mut files)?;
    let mut report = RunReport {
        command: "simulate",
        outcome: RunOutcome::Nonempty,
        omega_volume: loaded.omega.volume(),
        result_volume: ctl.cells().iter().map(|(b, _)| b.volume()).sum(),
        epsilon: None,
        iterations: steps,
        boxes_processed: 0,
        cells: ctl.cells().len(),
        transitions: None,
        exits: Some(trace.exits()),
        wall_time: start.elapsed(),
        files: Vec::new(),
    };
    RunMeta::new(&report, &loaded, &cfg).write(out_dir, &mut files)?;
    report.files = files;
    Ok(report)
}

pub fn abstraction_csv(sys: &SwitchedSystem, transitions: &[crate::controller::Transition]) -> String {
    let mut s = String::from("i,mode,j\n");
    for t in transitions {
        let _ = writeln!(s, "{},{},{}", t.from, sys.mode(t.mode).name(), t.to);
    }
    s
}

pub fn cmd_export_abstraction(
    config: &Path,
    controller: &Path,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<RunReport, HarnessError> {
    let loaded = load_config(config)?;
    let cfg = opts.synthesis(&loaded)?;
    let ctl = load_controller(controller, &loaded.system)?;
    let start = Instant::now();
    let t = export_abstraction(&loaded.system, &ctl, cfg.strategy, cfg.rounding)?;
    ensure_dir(out_dir)?;
    let mut files = Vec::new();
    write_file(out_dir, "abstraction.csv", &abstraction_csv(&loaded.system, &t), &mut files)?;
    let mut report = RunReport {
        command: "export-abstraction",
        outcome: RunOutcome::Nonempty,
        omega_volume: loaded.omega.volume(),
        result_volume: ctl.cells().iter().map(|(b, _)| b.volume()).sum(),
        epsilon: None,
        iterations: 0,
        boxes_processed: 0,
        cells: ctl.cells().len(),
        transitions: Some(t.len()),
        exits: None,
        wall_time: start.elapsed(),
        files: Vec::new(),
    };
    RunMeta::new(&report, &loaded, &cfg).write(out_dir, &mut files)?;
    report.files = files;
    Ok(report)
}

/// Runs inner and outer approximation on every `*.json` config in
/// `configs_dir`, writing each run under `out_dir/<config>/<command>` and a
/// summary table to `out_dir/bench.csv`.
pub fn bench(configs_dir: &Path, out_dir: &Path, opts: &RunOptions) -> Result<Vec<(String, RunReport)>, HarnessError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(configs_dir)
        .map_err(|source| HarnessError::Io {
            path: configs_dir.display().to_string(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut rows = Vec::new();
    let mut table = String::from("config,command,outcome,epsilon,cells,volume_ratio,iterations,wall_time_s\n");
    for p in &paths {
        let stem = p.file_stem().unwrap_or_default().to_string_lossy().to_string();
        for (cmd, report) in [
            ("outer", cmd_outer(p, &out_dir.join(&stem).join("outer"), opts)?),
            ("inner", cmd_inner(p, &out_dir.join(&stem).join("inner"), opts)?),
        ] {
            let _ = writeln!(
                table,
                "{stem},{cmd},{},{},{},{:.6},{},{:.3}",
                report.outcome.name(),
                report.epsilon.unwrap_or(0.0),
                report.cells,
                report.volume_ratio(),
                report.iterations,
                report.wall_time.as_secs_f64()
            );
            rows.push((stem.clone(), report));
        }
    }
    ensure_dir(out_dir)?;
    let mut files = Vec::new();
    write_file(out_dir, "bench.csv", &table, &mut files)?;
    Ok(rows)
}

/// Parses `"a,b,..."` into a point.
pub fn parse_point(s: &str) -> Result<Vec<f64>, HarnessError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Argument(format!("bad coordinate {t:?}")))
        })
        .collect()
}

/// Sum of cell volumes, equal to the region volume for a partition.
pub fn cells_volume(cells: &[(IntervalBox, ModeSet)]) -> f64 {
    cells.iter().map(|(b, _)| b.volume()).sum()
}
