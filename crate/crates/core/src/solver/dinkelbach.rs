use std::collections::HashSet;

use rand::Rng;
use serde::Serialize;

use super::{
    build_p1, exact_solve_with_budget, greedy_round, randomized_rounding, weighted_randomized_rounding, P1Problem,
    RoundedSolution, SolverError, DEFAULT_EXACT_BUDGET,
};
use crate::instance::{Assignment, SchedulingInstance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSolver {
    Greedy,
    Exact { budget: f64 },
    WeightedRandomized,
    Randomized,
}

impl InnerSolver {
    pub fn exact() -> Self {
        InnerSolver::Exact { budget: DEFAULT_EXACT_BUDGET }
    }

    fn is_deterministic(self) -> bool {
        matches!(self, InnerSolver::Greedy | InnerSolver::Exact { .. })
    }

    fn solve<R: Rng + ?Sized>(self, p1: &P1Problem, rng: &mut R) -> Result<RoundedSolution, SolverError> {
        match self {
            InnerSolver::Greedy => greedy_round(p1),
            InnerSolver::Exact { budget } => exact_solve_with_budget(p1, budget),
            InnerSolver::WeightedRandomized => weighted_randomized_rounding(p1, rng),
            InnerSolver::Randomized => randomized_rounding(p1, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DinkelbachConfig {
    /// Stop once `|gamma - rho * psi|` is at most this.
    pub tol: f64,
    pub max_iter: usize,
    pub inner: InnerSolver,
}

impl Default for DinkelbachConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50, inner: InnerSolver::Greedy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub rho: f64,
    pub gamma: f64,
    pub psi: f64,
    pub objective: f64,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DinkelbachOutcome {
    /// Candidate indices of the best-ratio solution seen.
    pub chosen: Vec<usize>,
    pub gamma: f64,
    pub psi: f64,
    /// Ratio of `chosen`, or zero when nothing was ever admitted.
    pub rho_final: f64,
    pub iterations: usize,
    /// False when the loop hit `max_iter` or revisited a solution.
    pub converged: bool,
    /// False when some update lowered `rho`.
    pub monotone: bool,
    pub trace: Vec<IterationRecord>,
}

/// Maximizes `utility / cost` over the triples of `p1` by repeatedly
/// maximizing `utility - rho * cost` and moving `rho` to the ratio found.
pub fn dinkelbach<R: Rng + ?Sized>(
    p1: &P1Problem,
    config: &DinkelbachConfig,
    rng: &mut R,
) -> Result<DinkelbachOutcome, SolverError> {
    let mut rho = 0.0;
    let mut best: Option<(Vec<usize>, f64, f64)> = None;
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut monotone = true;

    for iter in 0..config.max_iter {
        let problem = p1.with_rho(rho);
        let sol = config.inner.solve(&problem, rng)?;
        let (gamma, psi) = problem.utility_and_cost(&sol.chosen);
        let objective = gamma - rho * psi;
        trace.push(IterationRecord {
            iter,
            rho,
            gamma,
            psi,
            objective,
            accepted: sol.chosen.len(),
            rejected: p1.num_clients() - sol.chosen.len(),
        });
        if psi > 0.0 && best.as_ref().map_or(true, |(_, g, p)| gamma / psi > g / p) {
            best = Some((sol.chosen.clone(), gamma, psi));
        }
        if objective.abs() <= config.tol || psi <= 0.0 {
            converged = true;
            break;
        }
        if config.inner.is_deterministic() && !seen.insert(sol.chosen) {
            break;
        }
        let next = gamma / psi;
        if next < rho - 1e-12 * rho.abs() {
            monotone = false;
        }
        rho = next;
    }

    let iterations = trace.len();
    let (chosen, gamma, psi) = best.unwrap_or((Vec::new(), 0.0, 0.0));
    let rho_final = if psi > 0.0 { gamma / psi } else { 0.0 };
    Ok(DinkelbachOutcome { chosen, gamma, psi, rho_final, iterations, converged, monotone, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DinkelbachResult {
    pub assignment: Assignment,
    pub outcome: DinkelbachOutcome,
}

/// Runs [`dinkelbach`] on the instance's triples and turns the chosen ones
/// into placements with their optimal cut and deadline bandwidth.
pub fn dinkelbach_solve<R: Rng + ?Sized>(
    instance: &SchedulingInstance,
    config: &DinkelbachConfig,
    rng: &mut R,
) -> Result<DinkelbachResult, SolverError> {
    let p1 = build_p1(instance, 0.0);
    let outcome = dinkelbach(&p1, config, rng)?;
    Ok(DinkelbachResult { assignment: p1.to_assignment(&outcome.chosen), outcome })
}
