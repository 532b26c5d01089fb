use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::baselines::{schedule, SchedulerKind, SolverSettings};
use super::scenario::{generate_scenario, Scenario, ScenarioConfig, ScenarioError};
use crate::instance::{
    assignment_utility, round_latency, round_ratio, system_cost, update_queue, ClientState, Latency, Placement,
    SchedulingInstance, TaskConfig,
};
use crate::solver::{build_p1, dinkelbach, InnerSolver, IterationRecord, SolverError, CAPACITY_TOL};

const SCENARIO_STREAM: u64 = 0;
const ENVIRONMENT_STREAM: u64 = 1;
const SCHEDULER_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scheduler {scheduler} produced an invalid schedule in round {t}: {reason}")]
    InvalidSchedule { scheduler: SchedulerKind, t: usize, reason: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub solver: SolverSettings,
    /// Also solve each round with the exact inner solver and log its ratio.
    /// Rounds beyond the exact budget log no ratio.
    pub compare_to_exact: bool,
    /// Keep the per-iteration Dinkelbach records.
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientRound {
    pub client: usize,
    pub placement: Placement,
    pub latency: Latency,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundLog {
    pub t: usize,
    pub admitted: Vec<usize>,
    pub placements: Vec<ClientRound>,
    pub utility: f64,
    pub cost: f64,
    pub ratio: f64,
    pub trained_samples: f64,
    /// Final Dinkelbach parameter, or the round ratio for schedulers that
    /// do not iterate.
    pub rho_final: f64,
    /// Best ratio found with the exact inner solver on the same round.
    pub opt_ratio: Option<f64>,
    pub infeasible_bound: bool,
    pub queues_before: Vec<f64>,
    pub queues_after: Vec<f64>,
    pub trace: Vec<IterationRecord>,
}

/// Scenario plus everything that evolves across rounds.
#[derive(Debug, Clone)]
pub struct SimState {
    pub scenario: Arc<Scenario>,
    pub task: Arc<TaskConfig>,
    pub queues: Vec<f64>,
    pub t: usize,
    env_rng: ChaCha8Rng,
    sched_rng: ChaCha8Rng,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates the scenario for `config` from its seed's scenario stream.
pub fn seeded_scenario(config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    generate_scenario(config, &mut stream(config.seed, SCENARIO_STREAM))
}

impl SimState {
    pub fn new(config: &ScenarioConfig, task: Arc<TaskConfig>) -> Result<Self, SimError> {
        Ok(Self::from_scenario(Arc::new(seeded_scenario(config)?), task))
    }

    /// Round randomness is drawn from the scenario seed, so every scheduler
    /// sees the same sequence of client states.
    pub fn from_scenario(scenario: Arc<Scenario>, task: Arc<TaskConfig>) -> Self {
        let seed = scenario.config.seed;
        Self {
            queues: vec![0.0; scenario.clients.len()],
            scenario,
            task,
            t: 0,
            env_rng: stream(seed, ENVIRONMENT_STREAM),
            sched_rng: stream(seed, SCHEDULER_STREAM),
        }
    }

    /// Samples this round's client utilization and bandwidth and builds the
    /// scheduling instance. Advances the environment stream.
    pub fn next_instance(&mut self) -> SchedulingInstance {
        let cfg = &self.scenario.config;
        let (ul, uh) = cfg.client_utilization;
        let (bl, bh) = cfg.ps_bandwidth;
        let clients: Vec<ClientState> = self
            .scenario
            .clients
            .iter()
            .zip(&self.queues)
            .map(|(c, &queue)| {
                let util = if ul == uh { ul } else { self.env_rng.gen_range(ul..uh) };
                let ps_bandwidth = if bl == bh { bl } else { self.env_rng.gen_range(bl..bh) };
                ClientState {
                    node: c.node,
                    weight: c.weight,
                    dataset_size: c.dataset_size,
                    capacity: c.tier * util,
                    queue,
                    ps_bandwidth,
                    comm_cost: 0.0,
                }
            })
            .collect();
        SchedulingInstance::new(
            self.scenario.topology.clone(),
            self.scenario.paths.clone(),
            clients,
            self.scenario.sites.clone(),
            self.task.clone(),
        )
    }
}

/// Checks one-placement-per-client, server counts, link bandwidth and the
/// round deadline for every admitted client, from the raw instance data.
pub fn validate_schedule(
    assignment: &crate::instance::Assignment,
    instance: &SchedulingInstance,
) -> Result<(), String> {
    let topo = instance.topology();
    let deadline = instance.task().deadline;
    let mut servers = vec![0usize; instance.sites().len()];
    let mut bandwidth: BTreeMap<usize, f64> = BTreeMap::new();
    for (&i, placement) in &assignment.admitted {
        if i >= instance.clients().len() {
            return Err(format!("unknown client {i}"));
        }
        if let Placement::Split { site, path, cut, bandwidth: y } = *placement {
            if site >= instance.sites().len() {
                return Err(format!("client {i}: unknown site {site}"));
            }
            let Some(p) = instance.paths(i, site).get(path) else {
                return Err(format!("client {i}: no path {path} to site {site}"));
            };
            if p.client != instance.clients()[i].node || p.site != instance.sites()[site].node {
                return Err(format!("client {i}: path endpoints do not match"));
            }
            if instance.task().profile.cut(cut).is_none() {
                return Err(format!("client {i}: unknown cut {cut}"));
            }
            if !(y > 0.0 && y.is_finite()) {
                return Err(format!("client {i}: bandwidth {y} is not positive"));
            }
            servers[site] += 1;
            let mut seen = Vec::new();
            for &l in &p.links {
                let g = topo.link(l).group.0;
                if !seen.contains(&g) {
                    seen.push(g);
                    *bandwidth.entry(g).or_default() += y;
                }
            }
        }
        let lat = round_latency(i, placement, instance);
        if lat.total > deadline * (1.0 + CAPACITY_TOL) {
            return Err(format!("client {i}: latency {} exceeds deadline {deadline}", lat.total));
        }
    }
    for (j, (&used, site)) in servers.iter().zip(instance.sites()).enumerate() {
        if used > site.num_servers {
            return Err(format!("site {j}: {used} servers used, {} available", site.num_servers));
        }
    }
    for (&g, &used) in &bandwidth {
        let cap = topo.group_capacity(crate::topology::GroupId(g));
        if used > cap * (1.0 + CAPACITY_TOL) {
            return Err(format!("link group {g}: {used} bandwidth used, {cap} available"));
        }
    }
    Ok(())
}

/// Schedules one round, audits it, records metrics and updates the queues.
pub fn step_round(state: &mut SimState, scheduler: SchedulerKind, options: &SimOptions) -> Result<RoundLog, SimError> {
    let instance = state.next_instance();
    let out = schedule(scheduler, &instance, &options.solver, &mut state.sched_rng)?;
    if !out.infeasible_bound {
        validate_schedule(&out.assignment, &instance)
            .map_err(|reason| SimError::InvalidSchedule { scheduler, t: state.t, reason })?;
    }
    let utility = assignment_utility(&out.assignment, &instance);
    let cost = system_cost(&out.assignment, &instance);
    let ratio = round_ratio(utility, cost);
    let epochs = f64::from(instance.task().epochs);
    let placements: Vec<ClientRound> = out
        .assignment
        .admitted
        .iter()
        .map(|(&client, &placement)| ClientRound { client, placement, latency: round_latency(client, &placement, &instance) })
        .collect();
    let trained_samples = placements.iter().map(|p| instance.clients()[p.client].dataset_size * epochs).sum();

    let opt_ratio = if options.compare_to_exact {
        let p1 = build_p1(&instance, 0.0);
        let config = options.solver.dinkelbach(InnerSolver::Exact { budget: options.solver.exact_budget });
        match dinkelbach(&p1, &config, &mut stream(0, 0)) {
            Ok(d) => Some(d.rho_final),
            Err(SolverError::BudgetExceeded { .. }) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    let admitted_flags = out.assignment.admitted_flags(instance.clients().len());
    let queues_before = state.queues.clone();
    for ((q, c), &z) in state.queues.iter_mut().zip(instance.clients()).zip(&admitted_flags) {
        *q = update_queue(*q, z, c.weight);
    }
    let (rho_final, trace) = match out.dinkelbach {
        Some(d) => (d.rho_final, if options.trace { d.trace } else { Vec::new() }),
        None => (ratio, Vec::new()),
    };
    let log = RoundLog {
        t: state.t,
        admitted: out.assignment.admitted.keys().copied().collect(),
        placements,
        utility,
        cost,
        ratio,
        trained_samples,
        rho_final,
        opt_ratio,
        infeasible_bound: out.infeasible_bound,
        queues_before,
        queues_after: state.queues.clone(),
        trace,
    };
    state.t += 1;
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub scheduler: SchedulerKind,
    pub rounds: Vec<RoundLog>,
    /// Mean per-round utility-to-cost ratio.
    pub rue: f64,
    /// Mean trained samples per round.
    pub mean_training_amount: f64,
    pub admission_counts: Vec<usize>,
    pub final_queues: Vec<f64>,
}

impl SimulationResult {
    /// Mean of achieved ratio over exact ratio, when the exact ratio was
    /// recorded. Rounds where both are zero count as one.
    pub fn mean_ratio_to_opt(&self) -> Option<f64> {
        let ratios: Vec<f64> = self
            .rounds
            .iter()
            .map(|r| {
                r.opt_ratio.map(|opt| {
                    if opt > 0.0 {
                        r.ratio / opt
                    } else if r.ratio > 0.0 {
                        f64::INFINITY
                    } else {
                        1.0
                    }
                })
            })
            .collect::<Option<Vec<f64>>>()?;
        (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
    }
}

/// Runs `rounds` rounds of `scheduler` on a freshly generated scenario.
pub fn run_simulation(
    config: &ScenarioConfig,
    scheduler: SchedulerKind,
    task: Arc<TaskConfig>,
    rounds: usize,
    options: &SimOptions,
) -> Result<SimulationResult, SimError> {
    let mut state = SimState::new(config, task)?;
    run_rounds(&mut state, scheduler, rounds, options)
}

pub fn run_rounds(
    state: &mut SimState,
    scheduler: SchedulerKind,
    rounds: usize,
    options: &SimOptions,
) -> Result<SimulationResult, SimError> {
    let n = state.queues.len();
    let mut logs = Vec::with_capacity(rounds);
    let mut admission_counts = vec![0; n];
    for _ in 0..rounds {
        let log = step_round(state, scheduler, options)?;
        for &i in &log.admitted {
            admission_counts[i] += 1;
        }
        logs.push(log);
    }
    let pairs: Vec<(f64, f64)> = logs.iter().map(|l| (l.utility, l.cost)).collect();
    let rue = crate::instance::rue(&pairs);
    let mean_training_amount =
        if logs.is_empty() { 0.0 } else { logs.iter().map(|l| l.trained_samples).sum::<f64>() / logs.len() as f64 };
    Ok(SimulationResult {
        scheduler,
        rounds: logs,
        rue,
        mean_training_amount,
        admission_counts,
        final_queues: state.queues.clone(),
    })
}
