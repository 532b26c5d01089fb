//! Per-round scheduling problem after linearization: one binary variable per
//! feasible (client, site, path) triple, with the cut and bandwidth of each
//! pair already fixed to their deadline-optimal values.

mod dinkelbach;
mod exact;
mod greedy;
mod randomized;

pub use dinkelbach::{
    dinkelbach, dinkelbach_solve, DinkelbachConfig, DinkelbachOutcome, DinkelbachResult, InnerSolver, IterationRecord,
};
pub use exact::{exact_solve, exact_solve_with_budget, DEFAULT_EXACT_BUDGET};
pub use greedy::greedy_round;
pub use randomized::{randomized_rounding, round_fractional, weighted_randomized_rounding, RoundingScore};

use serde::Serialize;
use thiserror::Error;

use crate::instance::{Assignment, Placement, SchedulingInstance};
use crate::lp::{LpError, PackingLp};

/// Relative slack allowed on capacity checks.
pub const CAPACITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("pinned variables violate the constraints on their own")]
    LpInfeasible,
    #[error("linear relaxation failed: {0}")]
    Lp(#[from] LpError),
    #[error("exact search needs {combinations} combinations, budget is {budget}")]
    BudgetExceeded { combinations: f64, budget: f64 },
}

/// One (client, site, path) variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub client: usize,
    pub site: usize,
    pub path: usize,
    pub cut: usize,
    /// Bandwidth reserved on every link of the path.
    pub demand: f64,
    /// Utility of admitting the client.
    pub utility: f64,
    /// Server plus bandwidth cost of this triple.
    pub cost: f64,
    /// Capacity groups crossed by the path.
    pub groups: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct P1Problem {
    rho: f64,
    num_clients: usize,
    site_capacity: Vec<usize>,
    group_capacity: Vec<f64>,
    candidates: Vec<Candidate>,
    weights: Vec<f64>,
    by_client: Vec<Vec<usize>>,
}

impl P1Problem {
    /// Candidates are stored in lexicographic (client, site, path) order.
    pub fn new(
        rho: f64,
        num_clients: usize,
        site_capacity: Vec<usize>,
        group_capacity: Vec<f64>,
        mut candidates: Vec<Candidate>,
    ) -> Self {
        candidates.sort_by_key(|c| (c.client, c.site, c.path));
        for c in &mut candidates {
            c.groups.sort_unstable();
            c.groups.dedup();
        }
        let weights = candidates.iter().map(|c| c.utility - rho * c.cost).collect();
        let mut by_client = vec![Vec::new(); num_clients];
        for (v, c) in candidates.iter().enumerate() {
            assert!(c.client < num_clients && c.site < site_capacity.len());
            assert!(c.demand > 0.0 && c.demand.is_finite() && c.cost.is_finite() && c.utility.is_finite());
            by_client[c.client].push(v);
        }
        Self { rho, num_clients, site_capacity, group_capacity, candidates, weights, by_client }
    }

    /// Same variables, objective re-parameterized at `rho`.
    pub fn with_rho(&self, rho: f64) -> Self {
        let weights = self.candidates.iter().map(|c| c.utility - rho * c.cost).collect();
        Self { rho, weights, ..self.clone() }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Objective coefficient `utility - rho * cost` of a candidate.
    pub fn weight(&self, v: usize) -> f64 {
        self.weights[v]
    }

    pub fn client_candidates(&self, client: usize) -> &[usize] {
        &self.by_client[client]
    }

    pub fn site_capacity(&self) -> &[usize] {
        &self.site_capacity
    }

    pub fn group_capacity(&self) -> &[f64] {
        &self.group_capacity
    }

    pub fn objective(&self, chosen: &[usize]) -> f64 {
        chosen.iter().map(|&v| self.weights[v]).sum()
    }

    /// `(sum utility, sum cost)` of a set of candidates.
    pub fn utility_and_cost(&self, chosen: &[usize]) -> (f64, f64) {
        chosen.iter().fold((0.0, 0.0), |(u, c), &v| (u + self.candidates[v].utility, c + self.candidates[v].cost))
    }

    pub fn to_assignment(&self, chosen: &[usize]) -> Assignment {
        let mut a = Assignment::default();
        for &v in chosen {
            let c = &self.candidates[v];
            a.admitted.insert(
                c.client,
                Placement::Split { site: c.site, path: c.path, cut: c.cut, bandwidth: c.demand },
            );
        }
        a
    }
}

/// Builds the linearized problem for `instance` at ratio parameter `rho`:
/// one variable per (client, site, path) whose pair has a deadline-feasible
/// cut.
pub fn build_p1(instance: &SchedulingInstance, rho: f64) -> P1Problem {
    build_p1_filtered(instance, rho, |_, _, _| true)
}

/// [`build_p1`] keeping only triples accepted by `keep(client, site, path)`.
pub fn build_p1_filtered(
    instance: &SchedulingInstance,
    rho: f64,
    keep: impl Fn(usize, usize, usize) -> bool,
) -> P1Problem {
    let topo = instance.topology();
    let mut candidates = Vec::new();
    for i in 0..instance.clients().len() {
        let utility = instance.utility_weight(i);
        for j in 0..instance.sites().len() {
            let Some(choice) = instance.pair(i, j) else { continue };
            let server_cost = instance.server_cost(i, j);
            for (l, path) in instance.paths(i, j).iter().enumerate() {
                if !keep(i, j, l) {
                    continue;
                }
                let groups = path.groups(topo).map(|g| g.0).collect();
                candidates.push(Candidate {
                    client: i,
                    site: j,
                    path: l,
                    cut: choice.cut,
                    demand: choice.phi,
                    utility,
                    cost: server_cost + instance.path_bandwidth_cost(path) * choice.phi,
                    groups,
                });
            }
        }
    }
    let site_capacity = instance.sites().iter().map(|s| s.num_servers).collect();
    let group_capacity = (0..topo.num_groups()).map(|g| topo.group_capacity(crate::topology::GroupId(g))).collect();
    P1Problem::new(rho, instance.clients().len(), site_capacity, group_capacity, candidates)
}

/// Running resource usage of a partial assignment.
#[derive(Debug, Clone)]
pub(crate) struct Usage {
    sites: Vec<usize>,
    groups: Vec<f64>,
    clients: Vec<bool>,
}

impl Usage {
    pub(crate) fn new(p1: &P1Problem) -> Self {
        Self {
            sites: vec![0; p1.site_capacity.len()],
            groups: vec![0.0; p1.group_capacity.len()],
            clients: vec![false; p1.num_clients],
        }
    }

    pub(crate) fn fits(&self, p1: &P1Problem, v: usize) -> bool {
        let c = &p1.candidates[v];
        !self.clients[c.client]
            && self.sites[c.site] < p1.site_capacity[c.site]
            && c.groups.iter().all(|&g| {
                let cap = p1.group_capacity[g];
                self.groups[g] + c.demand <= cap * (1.0 + CAPACITY_TOL)
            })
    }

    pub(crate) fn add(&mut self, p1: &P1Problem, v: usize) {
        let c = &p1.candidates[v];
        self.clients[c.client] = true;
        self.sites[c.site] += 1;
        for &g in &c.groups {
            self.groups[g] += c.demand;
        }
    }

    pub(crate) fn remove(&mut self, p1: &P1Problem, v: usize) {
        let c = &p1.candidates[v];
        self.clients[c.client] = false;
        self.sites[c.site] -= 1;
        for &g in &c.groups {
            self.groups[g] -= c.demand;
        }
    }
}

/// Whether the fixed triples jointly satisfy the one-triple-per-client,
/// server-count and link-bandwidth constraints.
pub fn feasibility_check(fixed: &[usize], p1: &P1Problem) -> bool {
    let mut usage = Usage::new(p1);
    for &v in fixed {
        if !usage.fits(p1, v) {
            return false;
        }
        usage.add(p1, v);
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackReport {
    pub sites: Vec<f64>,
    pub groups: Vec<f64>,
}

/// Integral solution of the linearized problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundedSolution {
    /// Chosen candidate indices, ascending.
    pub chosen: Vec<usize>,
    pub objective: f64,
    pub slack: SlackReport,
}

impl RoundedSolution {
    pub(crate) fn from_chosen(p1: &P1Problem, mut chosen: Vec<usize>) -> Self {
        chosen.sort_unstable();
        let mut usage = Usage::new(p1);
        for &v in &chosen {
            usage.add(p1, v);
        }
        let slack = SlackReport {
            sites: p1.site_capacity.iter().zip(&usage.sites).map(|(&c, &u)| c as f64 - u as f64).collect(),
            groups: p1.group_capacity.iter().zip(&usage.groups).map(|(c, u)| c - u).collect(),
        };
        Self { objective: p1.objective(&chosen), chosen, slack }
    }

    pub fn empty(p1: &P1Problem) -> Self {
        Self::from_chosen(p1, Vec::new())
    }
}

/// Continuous relaxation with `fixed_ones` pinned to one, the other
/// variables of their clients pinned to zero, and `excluded` variables
/// removed. Returns a value in `[0, 1]` for every candidate.
///
/// Variables with non-positive weight are zero in some optimal solution and
/// are left out of the simplex.
pub fn solve_lp_relaxation(p1: &P1Problem, fixed_ones: &[usize], excluded: &[bool]) -> Result<Vec<f64>, SolverError> {
    if !feasibility_check(fixed_ones, p1) {
        return Err(SolverError::LpInfeasible);
    }
    let mut usage = Usage::new(p1);
    for &v in fixed_ones {
        usage.add(p1, v);
    }
    let mut theta = vec![0.0; p1.len()];
    for &v in fixed_ones {
        theta[v] = 1.0;
    }

    let free: Vec<usize> = (0..p1.len())
        .filter(|&v| !excluded.get(v).copied().unwrap_or(false))
        .filter(|&v| !usage.clients[p1.candidates[v].client])
        .filter(|&v| p1.weights[v] > 0.0)
        .collect();
    if free.is_empty() {
        return Ok(theta);
    }

    let mut lp = PackingLp::new(free.len());
    let mut client_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p1.num_clients];
    let mut site_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p1.site_capacity.len()];
    let mut group_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p1.group_capacity.len()];
    for (col, &v) in free.iter().enumerate() {
        let c = &p1.candidates[v];
        lp.objective[col] = p1.weights[v];
        client_cols[c.client].push((col, 1.0));
        site_cols[c.site].push((col, 1.0));
        for &g in &c.groups {
            group_cols[g].push((col, c.demand));
        }
    }
    for cols in client_cols.into_iter().filter(|c| !c.is_empty()) {
        lp.add_row(cols, 1.0);
    }
    for (j, cols) in site_cols.into_iter().enumerate() {
        let room = (p1.site_capacity[j] - usage.sites[j]) as f64;
        let mut clients: Vec<usize> = cols.iter().map(|&(col, _)| p1.candidates[free[col]].client).collect();
        clients.dedup();
        // Non-binding when every client with a variable here could fit.
        if !cols.is_empty() && (clients.len() as f64) > room {
            lp.add_row(cols, room);
        }
    }
    for (g, cols) in group_cols.into_iter().enumerate() {
        if cols.is_empty() {
            continue;
        }
        let room = (p1.group_capacity[g] - usage.groups[g]).max(0.0);
        let mut worst: Vec<(usize, f64)> = Vec::new();
        for &(col, d) in &cols {
            let client = p1.candidates[free[col]].client;
            match worst.last_mut() {
                Some((c, w)) if *c == client => *w = w.max(d),
                _ => worst.push((client, d)),
            }
        }
        if worst.iter().map(|(_, w)| w).sum::<f64>() > room {
            lp.add_row(cols, room);
        }
    }

    let sol = lp.solve()?;
    for (col, &v) in free.iter().enumerate() {
        theta[v] = sol.x[col].clamp(0.0, 1.0);
    }
    Ok(theta)
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Candidate on `site` whose path crosses `groups`.
    pub fn cand(client: usize, site: usize, path: usize, utility: f64, cost: f64, demand: f64, groups: &[usize]) -> Candidate {
        Candidate { client, site, path, cut: 1, demand, utility, cost, groups: groups.to_vec() }
    }

    /// Brute force over every choice of at most one candidate per client.
    pub fn enumerate_best(p1: &P1Problem, score: impl Fn(&[usize]) -> f64) -> (Vec<usize>, f64) {
        let n = p1.num_clients();
        let mut best = (Vec::new(), score(&[]));
        let mut choice = vec![None::<usize>; n];
        fn rec(
            i: usize,
            p1: &P1Problem,
            choice: &mut Vec<Option<usize>>,
            best: &mut (Vec<usize>, f64),
            score: &dyn Fn(&[usize]) -> f64,
        ) {
            if i == p1.num_clients() {
                let chosen: Vec<usize> = choice.iter().flatten().copied().collect();
                if feasibility_check(&chosen, p1) {
                    let s = score(&chosen);
                    if s > best.1 + 1e-12 * best.1.abs().max(1.0) {
                        *best = (chosen, s);
                    }
                }
                return;
            }
            choice[i] = None;
            rec(i + 1, p1, choice, best, score);
            for &v in p1.client_candidates(i) {
                choice[i] = Some(v);
                rec(i + 1, p1, choice, best, score);
            }
            choice[i] = None;
        }
        rec(0, p1, &mut choice, &mut best, &score);
        best
    }
}

#[cfg(test)]
mod tests {
    use super::testing::cand;
    use super::*;

    #[test]
    fn feasibility_examples() {
        let p1 = P1Problem::new(0.0, 2, vec![2], vec![5.0], vec![cand(0, 0, 0, 1.0, 1.0, 3.0, &[0]), cand(1, 0, 0, 1.0, 1.0, 3.0, &[0])]);
        assert!(!feasibility_check(&[0, 1], &p1));
        let p1 = P1Problem::new(0.0, 2, vec![2], vec![6.0], p1.candidates().to_vec());
        assert!(feasibility_check(&[0, 1], &p1));
        let p1 = P1Problem::new(0.0, 2, vec![1], vec![100.0], p1.candidates().to_vec());
        assert!(!feasibility_check(&[0, 1], &p1));
    }

    #[test]
    fn same_client_twice_is_infeasible() {
        let p1 = P1Problem::new(0.0, 1, vec![2], vec![100.0], vec![cand(0, 0, 0, 1.0, 1.0, 1.0, &[0]), cand(0, 0, 1, 1.0, 1.0, 1.0, &[0])]);
        assert!(!feasibility_check(&[0, 1], &p1));
    }

    #[test]
    fn lp_single_variable() {
        let p1 = P1Problem::new(0.0, 1, vec![1], vec![10.0], vec![cand(0, 0, 0, 2.0, 1.0, 1.0, &[0])]);
        assert_eq!(solve_lp_relaxation(&p1, &[], &[]).unwrap(), vec![1.0]);
        let neg = p1.with_rho(5.0);
        assert_eq!(solve_lp_relaxation(&neg, &[], &[]).unwrap(), vec![0.0]);
    }

    #[test]
    fn lp_two_clients_one_server() {
        // Vertices of {t0 + t1 <= 1, t >= 0}: (0,0), (1,0), (0,1). Best value
        // is max(w0, w1) = 3 for equal weights.
        let p1 = P1Problem::new(0.0, 2, vec![1], vec![10.0], vec![cand(0, 0, 0, 3.0, 1.0, 1.0, &[0]), cand(1, 0, 0, 3.0, 1.0, 1.0, &[0])]);
        let theta = solve_lp_relaxation(&p1, &[], &[]).unwrap();
        assert!((theta[0] + theta[1] - 1.0).abs() < 1e-9);
        let value: f64 = theta.iter().enumerate().map(|(v, t)| t * p1.weight(v)).sum();
        assert!((value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn lp_pins_and_excludes() {
        let p1 = P1Problem::new(
            0.0,
            2,
            vec![1, 1],
            vec![10.0],
            vec![cand(0, 0, 0, 3.0, 1.0, 1.0, &[0]), cand(0, 1, 0, 3.0, 1.0, 1.0, &[0]), cand(1, 0, 0, 5.0, 1.0, 1.0, &[0])],
        );
        let theta = solve_lp_relaxation(&p1, &[0], &[]).unwrap();
        assert_eq!(theta, vec![1.0, 0.0, 0.0]);
        let theta = solve_lp_relaxation(&p1, &[], &[false, false, true]).unwrap();
        assert!((theta[0] + theta[1] - 1.0).abs() < 1e-9);
        assert_eq!(theta[2], 0.0);
        assert_eq!(solve_lp_relaxation(&p1, &[0, 2], &[]).unwrap_err(), SolverError::LpInfeasible);
    }
}
