//! Round-based simulation of the training flow and the baseline schedulers.

mod baselines;
mod engine;
mod scenario;

pub use baselines::{schedule, ScheduleOutput, SchedulerKind, SolverSettings};
pub use engine::{
    run_rounds, run_simulation, seeded_scenario, step_round, validate_schedule, ClientRound, RoundLog, SimError, SimOptions, SimState,
    SimulationResult,
};
pub use scenario::{
    default_sites, generate_scenario, Backbone, ClientProfile, Layout, Scenario, ScenarioConfig, ScenarioError,
    SiteSetting, TaskPreset,
};
