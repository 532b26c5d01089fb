use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Layout, SchedulerKind, SolverSettings, TaskPreset};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("reading config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Exact-solver budget for the rounding experiment, whose small layouts
/// still exceed the general default.
pub const ROUNDING_EXACT_BUDGET: f64 = (1u64 << 24) as f64;

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Learning frameworks compared by training amount.
    Frameworks,
    /// The scheduler against variants with one decision randomized or fixed.
    Ablations,
    /// The scheduler against first-fit heuristics.
    Heuristics,
    /// Rounding procedures for the linearized problem, against the exact solver.
    Rounding,
}

impl Experiment {
    pub fn schedulers(self) -> &'static [SchedulerKind] {
        use SchedulerKind::*;
        match self {
            Experiment::Frameworks => &[FedAvgLocal, SplitFedUnlimited, SplitFedLimited, NQ, Refinery],
            Experiment::Ablations => &[Refinery, RCA, RMP, RPS],
            Experiment::Heuristics => &[Refinery, MTU, MCC, MNC],
            Experiment::Rounding => &[Refinery, WRR, RR, Exact],
        }
    }

    pub fn default_layouts(self) -> Vec<Layout> {
        match self {
            Experiment::Rounding => vec![Layout::Tiny],
            _ => vec![Layout::NS1, Layout::NS2, Layout::NS3, Layout::NS4],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Frameworks => "frameworks",
            Experiment::Ablations => "ablations",
            Experiment::Heuristics => "heuristics",
            Experiment::Rounding => "rounding",
        })
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| format!("unknown experiment `{s}`"))
    }
}

/// Experiment file contents. Every field except `experiment` is optional
/// and falls back to the defaults of [`ConfigFile::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<Experiment>,
    /// `densenet` or `mobilenet`.
    pub task: Option<String>,
    /// Replaces the preset's model profile.
    pub profile: Option<PathBuf>,
    pub layouts: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub schedulers: Option<Vec<String>>,
    pub rounds: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub exact_budget: Option<f64>,
    pub k_paths: Option<usize>,
    pub fairness_weight: Option<f64>,
    pub utility_scale: Option<f64>,
    pub out: Option<PathBuf>,
    pub trace: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub task: TaskPreset,
    pub profile: Option<PathBuf>,
    pub layouts: Vec<Layout>,
    pub seeds: Vec<u64>,
    pub schedulers: Vec<SchedulerKind>,
    pub rounds: usize,
    pub solver: SolverSettings,
    pub k_paths: usize,
    pub fairness_weight: f64,
    pub utility_scale: f64,
    pub out: PathBuf,
    pub trace: bool,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn resolve(&self) -> Result<ExperimentSpec, ConfigError> {
        let experiment = self.experiment.ok_or_else(|| invalid("experiment", "missing"))?;
        let task = match &self.task {
            Some(t) => t.parse().map_err(|e: String| invalid("task", e))?,
            None => TaskPreset::DenseNet,
        };
        let layouts = match &self.layouts {
            Some(ls) => ls.iter().map(|l| l.parse()).collect::<Result<Vec<Layout>, _>>().map_err(|e| invalid("layouts", e))?,
            None => experiment.default_layouts(),
        };
        if layouts.is_empty() {
            return Err(invalid("layouts", "must not be empty"));
        }
        let schedulers = match &self.schedulers {
            Some(ss) => {
                let parsed = ss
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<Vec<SchedulerKind>, _>>()
                    .map_err(|e| invalid("schedulers", e))?;
                if let Some(bad) = parsed.iter().find(|k| !experiment.schedulers().contains(k)) {
                    return Err(invalid("schedulers", format!("{bad} is not part of the {experiment} experiment")));
                }
                parsed
            }
            None => experiment.schedulers().to_vec(),
        };
        if schedulers.is_empty() {
            return Err(invalid("schedulers", "must not be empty"));
        }
        let seeds = self.seeds.clone().unwrap_or_else(|| vec![1, 2, 3]);
        if seeds.is_empty() {
            return Err(invalid("seeds", "must not be empty"));
        }
        let defaults = SolverSettings::default();
        let default_budget = match experiment {
            Experiment::Rounding => ROUNDING_EXACT_BUDGET,
            _ => defaults.exact_budget,
        };
        let solver = SolverSettings {
            tol: self.tol.unwrap_or(defaults.tol),
            max_iter: self.max_iter.unwrap_or(defaults.max_iter),
            exact_budget: self.exact_budget.unwrap_or(default_budget),
        };
        if !(solver.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if !(solver.exact_budget >= 1.0) {
            return Err(invalid("exact_budget", "must be at least 1"));
        }
        if solver.max_iter == 0 {
            return Err(invalid("max_iter", "must be positive"));
        }
        let spec = ExperimentSpec {
            experiment,
            task,
            profile: self.profile.clone(),
            layouts,
            seeds,
            schedulers,
            rounds: self.rounds.unwrap_or(30),
            solver,
            k_paths: self.k_paths.unwrap_or(3),
            fairness_weight: self.fairness_weight.unwrap_or(1.0),
            utility_scale: self.utility_scale.unwrap_or(10_000.0),
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("results")),
            trace: self.trace.unwrap_or(false),
        };
        if spec.rounds == 0 {
            return Err(invalid("rounds", "must be positive"));
        }
        if spec.k_paths == 0 {
            return Err(invalid("k_paths", "must be positive"));
        }
        if !(spec.fairness_weight >= 0.0 && spec.utility_scale > 0.0) {
            return Err(invalid("utility_scale", "fairness weight must be non-negative and utility scale positive"));
        }
        Ok(spec)
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentSpec, ConfigError> {
    load_config_file(path)?.resolve()
}

pub fn load_config_file(path: impl AsRef<Path>) -> Result<ConfigFile, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    ConfigFile::from_json(&text)
}
