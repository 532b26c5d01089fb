//! Scheduler dispatch: the proposed scheduler, its ablations, heuristic
//! baselines and alternative frameworks.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::instance::{compute_phi, Assignment, Placement, SchedulingInstance, TaskConfig};
use crate::solver::{
    build_p1, build_p1_filtered, dinkelbach, DinkelbachConfig, DinkelbachOutcome, InnerSolver, P1Problem, SolverError,
    Usage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulerKind {
    Refinery,
    /// Refinery without the fairness queue in the utility.
    NQ,
    /// Refinery over a weight-sampled subset of clients.
    RCA,
    /// Refinery with one cut shared by every client.
    RMP,
    /// Refinery restricted to the shortest path of each pair.
    RPS,
    /// First fit, clients by ascending compute capacity.
    MTU,
    /// First fit, sites by ascending server cost.
    MCC,
    /// First fit, sites by ascending hop count.
    MNC,
    FedAvgLocal,
    SplitFedLimited,
    SplitFedUnlimited,
    /// Dinkelbach with weighted randomized rounding as the inner solver.
    WRR,
    /// Dinkelbach with plain randomized rounding as the inner solver.
    RR,
    /// Dinkelbach with branch and bound as the inner solver.
    Exact,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 14] = [
        SchedulerKind::Refinery,
        SchedulerKind::NQ,
        SchedulerKind::RCA,
        SchedulerKind::RMP,
        SchedulerKind::RPS,
        SchedulerKind::MTU,
        SchedulerKind::MCC,
        SchedulerKind::MNC,
        SchedulerKind::FedAvgLocal,
        SchedulerKind::SplitFedLimited,
        SchedulerKind::SplitFedUnlimited,
        SchedulerKind::WRR,
        SchedulerKind::RR,
        SchedulerKind::Exact,
    ];
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scheduler `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub exact_budget: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50, exact_budget: crate::solver::DEFAULT_EXACT_BUDGET }
    }
}

impl SolverSettings {
    pub fn dinkelbach(&self, inner: InnerSolver) -> DinkelbachConfig {
        DinkelbachConfig { tol: self.tol, max_iter: self.max_iter, inner }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutput {
    pub assignment: Assignment,
    /// Set when the schedule ignores server and link capacities.
    pub infeasible_bound: bool,
    pub dinkelbach: Option<DinkelbachOutcome>,
}

impl ScheduleOutput {
    fn plain(assignment: Assignment) -> Self {
        Self { assignment, infeasible_bound: false, dinkelbach: None }
    }
}

/// Runs scheduler `kind` on one round.
pub fn schedule<R: Rng + ?Sized>(
    kind: SchedulerKind,
    instance: &SchedulingInstance,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<ScheduleOutput, SolverError> {
    let ratio = |p1: P1Problem, inner: InnerSolver, rng: &mut R| -> Result<ScheduleOutput, SolverError> {
        let outcome = dinkelbach(&p1, &settings.dinkelbach(inner), rng)?;
        Ok(ScheduleOutput { assignment: p1.to_assignment(&outcome.chosen), infeasible_bound: false, dinkelbach: Some(outcome) })
    };
    match kind {
        SchedulerKind::Refinery => ratio(build_p1(instance, 0.0), InnerSolver::Greedy, rng),
        SchedulerKind::WRR => ratio(build_p1(instance, 0.0), InnerSolver::WeightedRandomized, rng),
        SchedulerKind::RR => ratio(build_p1(instance, 0.0), InnerSolver::Randomized, rng),
        SchedulerKind::Exact => {
            ratio(build_p1(instance, 0.0), InnerSolver::Exact { budget: settings.exact_budget }, rng)
        }
        SchedulerKind::NQ => {
            let task = TaskConfig { fairness_weight: 0.0, ..instance.task().clone() };
            let blind = rebuild(instance, Arc::new(task), instance.candidate_cuts().to_vec());
            ratio(build_p1(&blind, 0.0), InnerSolver::Greedy, rng)
        }
        SchedulerKind::RCA => {
            let picked = sample_clients(instance, rng);
            ratio(build_p1_filtered(instance, 0.0, |i, _, _| picked[i]), InnerSolver::Greedy, rng)
        }
        SchedulerKind::RMP => {
            let shared = match shared_cut(instance, instance.candidate_cuts(), None) {
                Some(k) => vec![k],
                None => Vec::new(),
            };
            let restricted = rebuild(instance, instance.task_arc().clone(), shared);
            ratio(build_p1(&restricted, 0.0), InnerSolver::Greedy, rng)
        }
        SchedulerKind::RPS => ratio(build_p1_filtered(instance, 0.0, |_, _, l| l == 0), InnerSolver::Greedy, rng),
        SchedulerKind::MTU => {
            let mut clients: Vec<usize> = (0..instance.clients().len()).collect();
            clients.sort_by(|&a, &b| instance.clients()[a].capacity.total_cmp(&instance.clients()[b].capacity).then(a.cmp(&b)));
            let mut sites: Vec<usize> = (0..instance.sites().len()).collect();
            sites.sort_by(|&a, &b| {
                instance.sites()[b].server_capacity.total_cmp(&instance.sites()[a].server_capacity).then(a.cmp(&b))
            });
            Ok(ScheduleOutput::plain(first_fit(instance, &clients, |_| sites.clone())))
        }
        SchedulerKind::MCC => {
            let mut clients: Vec<usize> = (0..instance.clients().len()).collect();
            clients.shuffle(rng);
            let mut sites: Vec<usize> = (0..instance.sites().len()).collect();
            sites.sort_by(|&a, &b| {
                instance.sites()[a].unit_server_cost.total_cmp(&instance.sites()[b].unit_server_cost).then(a.cmp(&b))
            });
            Ok(ScheduleOutput::plain(first_fit(instance, &clients, |_| sites.clone())))
        }
        SchedulerKind::MNC => {
            let clients: Vec<usize> = (0..instance.clients().len()).collect();
            let topo = instance.topology();
            Ok(ScheduleOutput::plain(first_fit(instance, &clients, |i| {
                let from = instance.clients()[i].node;
                let mut sites: Vec<usize> = (0..instance.sites().len()).collect();
                sites.sort_by_key(|&j| (topo.hop_distance(from, instance.sites()[j].node).unwrap_or(usize::MAX), j));
                sites
            })))
        }
        SchedulerKind::FedAvgLocal => {
            let mut a = Assignment::default();
            for i in 0..instance.clients().len() {
                if instance.local_latency(i).total <= instance.task().deadline {
                    a.admitted.insert(i, Placement::Local);
                }
            }
            Ok(ScheduleOutput::plain(a))
        }
        SchedulerKind::SplitFedLimited => Ok(ScheduleOutput::plain(split_fed(instance, true))),
        SchedulerKind::SplitFedUnlimited => {
            Ok(ScheduleOutput { infeasible_bound: true, ..ScheduleOutput::plain(split_fed(instance, false)) })
        }
    }
}

fn rebuild(instance: &SchedulingInstance, task: Arc<TaskConfig>, cuts: Vec<usize>) -> SchedulingInstance {
    SchedulingInstance::with_cuts(
        instance.topology_arc().clone(),
        instance.path_set().clone(),
        instance.clients().to_vec(),
        instance.sites().to_vec(),
        task,
        cuts,
    )
}

/// Weight-proportional draws with replacement, one per available server.
fn sample_clients<R: Rng + ?Sized>(instance: &SchedulingInstance, rng: &mut R) -> Vec<bool> {
    let clients = instance.clients();
    let servers: usize = instance.sites().iter().map(|s| s.num_servers).sum();
    let mut picked = vec![false; clients.len()];
    let total: f64 = clients.iter().map(|c| c.weight).sum();
    if total <= 0.0 {
        return picked;
    }
    for _ in 0..servers {
        let mut draw = rng.gen::<f64>() * total;
        let mut hit = clients.len() - 1;
        for (i, c) in clients.iter().enumerate() {
            if draw < c.weight {
                hit = i;
                break;
            }
            draw -= c.weight;
        }
        picked[hit] = true;
    }
    picked
}

/// Cut in `cuts` that lets the most clients meet the deadline, at `site` or
/// at any site when `site` is `None`. Ties go to the smaller cut.
fn shared_cut(instance: &SchedulingInstance, cuts: &[usize], site: Option<usize>) -> Option<usize> {
    let task = instance.task();
    let mut sorted = cuts.to_vec();
    sorted.sort_unstable();
    let sites: Vec<usize> = match site {
        Some(j) => vec![j],
        None => (0..instance.sites().len()).collect(),
    };
    let mut best: Option<(usize, usize)> = None;
    for k in sorted {
        let Some(cut) = task.profile.cut(k) else { continue };
        let count = instance
            .clients()
            .iter()
            .filter(|c| sites.iter().any(|&j| compute_phi(c, &instance.sites()[j], cut, task).is_some()))
            .count();
        if count > 0 && best.map_or(true, |(_, n)| count > n) {
            best = Some((k, count));
        }
    }
    best.map(|(k, _)| k)
}

/// Admits clients in `order`, each on the first site from `sites_for` and
/// the first path that still fit, with its optimal cut and bandwidth.
fn first_fit(instance: &SchedulingInstance, order: &[usize], sites_for: impl Fn(usize) -> Vec<usize>) -> Assignment {
    let p1 = build_p1(instance, 0.0);
    let mut usage = Usage::new(&p1);
    let mut chosen = Vec::new();
    for &i in order {
        let cands = p1.client_candidates(i);
        'sites: for j in sites_for(i) {
            for &v in cands.iter().filter(|&&v| p1.candidates()[v].site == j) {
                if usage.fits(&p1, v) {
                    usage.add(&p1, v);
                    chosen.push(v);
                    break 'sites;
                }
            }
        }
    }
    p1.to_assignment(&chosen)
}

/// One cut shared by every client, chosen to let the most clients meet the
/// deadline on the largest site, and shortest paths. Unlimited puts every
/// such client on the largest site. Limited admits clients in id order on
/// the largest site with a free server and link room, spilling to smaller
/// sites as larger ones fill.
fn split_fed(instance: &SchedulingInstance, limited: bool) -> Assignment {
    let mut a = Assignment::default();
    let mut sites: Vec<usize> = (0..instance.sites().len()).collect();
    sites.sort_by(|&a, &b| instance.sites()[b].server_capacity.total_cmp(&instance.sites()[a].server_capacity).then(a.cmp(&b)));
    let Some(&largest) = sites.first() else { return a };
    let task = instance.task();
    let all_cuts: Vec<usize> = task.profile.cuts.iter().map(|c| c.k).collect();
    let Some(k) = shared_cut(instance, &all_cuts, Some(largest)) else { return a };
    let cut = task.profile.cut(k).expect("shared cut exists");
    if !limited {
        let s = &instance.sites()[largest];
        for (i, c) in instance.clients().iter().enumerate() {
            if let Some(phi) = compute_phi(c, s, cut, task) {
                if !instance.paths(i, largest).is_empty() {
                    a.admitted.insert(i, Placement::Split { site: largest, path: 0, cut: k, bandwidth: phi });
                }
            }
        }
        return a;
    }
    let topo = instance.topology();
    let mut load = vec![0.0; topo.num_groups()];
    let mut used = vec![0usize; instance.sites().len()];
    for (i, c) in instance.clients().iter().enumerate() {
        for &j in &sites {
            let s = &instance.sites()[j];
            if used[j] >= s.num_servers {
                continue;
            }
            let Some(phi) = compute_phi(c, s, cut, task) else { continue };
            let Some(path) = instance.paths(i, j).first() else { continue };
            let fits = path
                .groups(topo)
                .all(|g| load[g.0] + phi <= topo.group_capacity(g) * (1.0 + crate::solver::CAPACITY_TOL));
            if !fits {
                continue;
            }
            for g in path.groups(topo) {
                load[g.0] += phi;
            }
            used[j] += 1;
            a.admitted.insert(i, Placement::Split { site: j, path: 0, cut: k, bandwidth: phi });
            break;
        }
    }
    a
}
