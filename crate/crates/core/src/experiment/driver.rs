use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::config::{Experiment, ExperimentSpec};
use crate::instance::TaskConfig;
use crate::profile::{load_profile, ProfileError};
use crate::sim::{
    run_rounds, seeded_scenario, Layout, Scenario, ScenarioConfig, ScenarioError, SchedulerKind, SimError,
    SimOptions, SimState, SimulationResult,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUN: i32 = 2;
pub const EXIT_AUDIT: i32 = 3;

pub const ROUND_HEADER: [&str; 11] =
    ["run_id", "scheduler", "layout", "seed", "t", "admitted", "trained_samples", "utility", "cost", "ratio", "rho_final"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("writing {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Profile(_) | ExperimentError::Scenario(_) => EXIT_CONFIG,
            ExperimentError::Output { .. } => EXIT_RUN,
        }
    }
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Output { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Cell {
    pub scheduler: SchedulerKind,
    pub layout: Layout,
    pub seed: u64,
}

impl Cell {
    pub fn run_id(&self) -> String {
        format!("{}_{}_seed{}", self.scheduler, self.layout, self.seed)
    }
}

#[derive(Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: Result<SimulationResult, SimError>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheduler: SchedulerKind,
    pub layout: Layout,
    pub seeds: usize,
    pub mean_rue: f64,
    pub mean_training_amount: f64,
    pub mean_ratio_to_opt: Option<f64>,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub outcomes: Vec<CellOutcome>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    /// 3 when any schedule failed its audit, 2 for other run failures.
    pub fn exit_code(&self) -> i32 {
        let errors = self.outcomes.iter().filter_map(|o| o.result.as_ref().err());
        let mut code = EXIT_OK;
        for e in errors {
            code = code.max(match e {
                SimError::InvalidSchedule { .. } => EXIT_AUDIT,
                _ => EXIT_RUN,
            });
        }
        code
    }

    pub fn failures(&self) -> impl Iterator<Item = (&Cell, &SimError)> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().err().map(|e| (&o.cell, e)))
    }
}

pub fn task_config(spec: &ExperimentSpec) -> Result<TaskConfig, ExperimentError> {
    let mut task = spec.task.task();
    if let Some(path) = &spec.profile {
        task.profile = load_profile(path)?;
    }
    task.fairness_weight = spec.fairness_weight;
    task.utility_scale = spec.utility_scale;
    Ok(task)
}

pub fn scenario_config(spec: &ExperimentSpec, layout: Layout, seed: u64) -> ScenarioConfig {
    let mut config = ScenarioConfig::standard(layout, spec.task, seed);
    if layout != Layout::Tiny {
        config.k_paths = spec.k_paths;
    }
    config
}

pub fn cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut out = Vec::new();
    for &layout in &spec.layouts {
        for &seed in &spec.seeds {
            for &scheduler in &spec.schedulers {
                out.push(Cell { scheduler, layout, seed });
            }
        }
    }
    out
}

/// Runs every cell without writing anything. Scenarios are generated once per
/// (layout, seed) and shared by all schedulers.
pub fn run_cells(spec: &ExperimentSpec) -> Result<Vec<CellOutcome>, ExperimentError> {
    run_cells_with(spec, |cells, f| crate::par::map(cells, f))
}

/// As [`run_cells`], always on the calling thread.
pub fn run_cells_sequential(spec: &ExperimentSpec) -> Result<Vec<CellOutcome>, ExperimentError> {
    run_cells_with(spec, |cells, f| crate::par::map_seq(cells, f))
}

type CellFn<'a> = &'a (dyn Fn(&Cell) -> CellOutcome + Sync + Send);

fn run_cells_with(
    spec: &ExperimentSpec,
    map: impl Fn(&[Cell], CellFn<'_>) -> Vec<CellOutcome>,
) -> Result<Vec<CellOutcome>, ExperimentError> {
    let task = Arc::new(task_config(spec)?);
    let mut scenarios: Vec<((Layout, u64), Arc<Scenario>)> = Vec::new();
    for &layout in &spec.layouts {
        for &seed in &spec.seeds {
            let config = scenario_config(spec, layout, seed);
            let scenario = seeded_scenario(&config)?;
            scenarios.push(((layout, seed), Arc::new(scenario)));
        }
    }
    let options = SimOptions {
        solver: spec.solver,
        compare_to_exact: spec.experiment == Experiment::Rounding,
        trace: spec.trace,
    };
    let all = cells(spec);
    let run = |cell: &Cell| {
        let scenario = scenarios
            .iter()
            .find(|(k, _)| *k == (cell.layout, cell.seed))
            .map(|(_, s)| s.clone())
            .expect("scenario generated for every cell");
        let mut state = SimState::from_scenario(scenario, task.clone());
        CellOutcome { cell: *cell, result: run_rounds(&mut state, cell.scheduler, spec.rounds, &options) }
    };
    Ok(map(&all, &run))
}

pub fn summarize(spec: &ExperimentSpec, outcomes: &[CellOutcome]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &scheduler in &spec.schedulers {
        for &layout in &spec.layouts {
            let runs: Vec<&SimulationResult> = outcomes
                .iter()
                .filter(|o| o.cell.scheduler == scheduler && o.cell.layout == layout)
                .filter_map(|o| o.result.as_ref().ok())
                .collect();
            if runs.is_empty() {
                continue;
            }
            let n = runs.len() as f64;
            let mean_ratio_to_opt = if spec.experiment == Experiment::Rounding {
                let ratios: Option<Vec<f64>> = runs.iter().map(|r| r.mean_ratio_to_opt()).collect();
                ratios.map(|v| v.iter().sum::<f64>() / n)
            } else {
                None
            };
            rows.push(SummaryRow {
                scheduler,
                layout,
                seeds: runs.len(),
                mean_rue: runs.iter().map(|r| r.rue).sum::<f64>() / n,
                mean_training_amount: runs.iter().map(|r| r.mean_training_amount).sum::<f64>() / n,
                mean_ratio_to_opt,
            });
        }
    }
    rows
}

/// Runs the experiment and writes one CSV per cell, `summary.csv` and, when
/// tracing, `trace.jsonl` under `spec.out`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, ExperimentError> {
    let outcomes = run_cells(spec)?;
    write_outputs(spec, outcomes)
}

pub fn write_outputs(spec: &ExperimentSpec, outcomes: Vec<CellOutcome>) -> Result<ExperimentReport, ExperimentError> {
    fs::create_dir_all(&spec.out).map_err(|e| output_error(&spec.out, e))?;
    let mut files = Vec::new();
    for o in &outcomes {
        if let Ok(result) = &o.result {
            let path = spec.out.join(format!("{}.csv", o.cell.run_id()));
            export_csv(&path, &o.cell, result)?;
            files.push(path);
        }
    }
    let summary = summarize(spec, &outcomes);
    let path = spec.out.join("summary.csv");
    write_summary(&path, &summary, spec.experiment == Experiment::Rounding)?;
    files.push(path);
    if spec.trace {
        let path = spec.out.join("trace.jsonl");
        write_trace(&path, &outcomes)?;
        files.push(path);
    }
    Ok(ExperimentReport { outcomes, summary, files })
}

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Per-round CSV for one run. A run without rounds yields the header only.
pub fn export_csv(path: &Path, cell: &Cell, result: &SimulationResult) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    w.write_record(ROUND_HEADER).map_err(|e| output_error(path, e))?;
    let run_id = cell.run_id();
    for r in &result.rounds {
        w.write_record([
            run_id.clone(),
            cell.scheduler.to_string(),
            cell.layout.to_string(),
            cell.seed.to_string(),
            r.t.to_string(),
            r.admitted.len().to_string(),
            fmt_float(r.trained_samples),
            fmt_float(r.utility),
            fmt_float(r.cost),
            fmt_float(r.ratio),
            fmt_float(r.rho_final),
        ])
        .map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}

pub fn write_summary(path: &Path, rows: &[SummaryRow], with_opt: bool) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    let mut header = vec!["scheduler", "layout", "seeds", "mean_rue", "mean_training_amount"];
    if with_opt {
        header.push("mean_ratio_to_opt");
    }
    w.write_record(&header).map_err(|e| output_error(path, e))?;
    for r in rows {
        let mut rec = vec![
            r.scheduler.to_string(),
            r.layout.to_string(),
            r.seeds.to_string(),
            fmt_float(r.mean_rue),
            fmt_float(r.mean_training_amount),
        ];
        if with_opt {
            rec.push(r.mean_ratio_to_opt.map(fmt_float).unwrap_or_default());
        }
        w.write_record(&rec).map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}

#[derive(Serialize)]
struct TraceLine<'a> {
    run_id: &'a str,
    t: usize,
    #[serde(flatten)]
    record: &'a crate::solver::IterationRecord,
}

fn write_trace(path: &Path, outcomes: &[CellOutcome]) -> Result<(), ExperimentError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| output_error(path, e))?);
    for o in outcomes {
        let Ok(result) = &o.result else { continue };
        let run_id = o.cell.run_id();
        for round in &result.rounds {
            for record in &round.trace {
                let line = serde_json::to_string(&TraceLine { run_id: &run_id, t: round.t, record })
                    .map_err(|e| output_error(path, e))?;
                writeln!(f, "{line}").map_err(|e| output_error(path, e))?;
            }
        }
    }
    f.flush().map_err(|e| output_error(path, e))
}
