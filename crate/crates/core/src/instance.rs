//! Per-round scheduling instances: derived coefficients, utility, cost,
//! latency, queue dynamics and the resource-usage-effectiveness metric.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::profile::{effective_partition_points, LayerCut, ModelProfile};
use crate::topology::{NodeId, Path, PathSet, Topology};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientState {
    pub node: NodeId,
    /// Raw client weight; weights sum to one across the population.
    pub weight: f64,
    pub dataset_size: f64,
    /// Compute capacity for the current round.
    pub capacity: f64,
    /// Fairness queue. May go negative.
    pub queue: f64,
    /// Bandwidth to the parameter server for the current round.
    pub ps_bandwidth: f64,
    /// Communication cost rate for status collection and model transfer.
    pub comm_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteState {
    pub node: NodeId,
    /// Compute capacity of one virtual training server.
    pub server_capacity: f64,
    pub num_servers: usize,
    pub unit_server_cost: f64,
    pub comm_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskConfig {
    #[serde(skip)]
    pub profile: ModelProfile,
    pub epochs: u32,
    pub batch_size: u32,
    /// Round length; every admitted pair must finish within it.
    pub deadline: f64,
    pub sched_msg_size: f64,
    pub status_msg_size: f64,
    /// Weight of the fairness queue in the utility.
    pub fairness_weight: f64,
    /// Multiplier applied to client weights inside the utility.
    pub utility_scale: f64,
    /// Threshold used when filtering effective partition points.
    pub shrink_factor: f64,
}

impl TaskConfig {
    pub fn new(profile: ModelProfile, epochs: u32, batch_size: u32, deadline: f64) -> Self {
        Self {
            profile,
            epochs,
            batch_size,
            deadline,
            sched_msg_size: 0.0,
            status_msg_size: 0.0,
            fairness_weight: 1.0,
            utility_scale: 10_000.0,
            shrink_factor: 1.0,
        }
    }

    /// Batches processed per round, `epochs * |D| / H`.
    fn iterations(&self, client: &ClientState) -> f64 {
        f64::from(self.epochs) * client.dataset_size / f64::from(self.batch_size)
    }

    /// Total exchanged data for one round at `cut`.
    pub fn scaled_exchange(&self, client: &ClientState, cut: &LayerCut) -> f64 {
        self.iterations(client) * cut.exchange_size
    }

    pub fn utility_weight(&self, client: &ClientState) -> f64 {
        self.utility_scale * client.weight + self.fairness_weight * client.queue
    }
}

/// Deadline-independent part of a pair's round latency: parameter-server
/// traffic plus client and server computation.
pub fn compute_mu(client: &ClientState, site: &SiteState, cut: &LayerCut, task: &TaskConfig) -> f64 {
    let model = task.profile.model_size;
    let iters = task.iterations(client);
    (task.sched_msg_size + task.status_msg_size + 2.0 * model) / client.ps_bandwidth
        + iters * cut.client_density / client.capacity
        + iters * cut.server_density / site.server_capacity
}

/// Bandwidth that makes the pair finish exactly at the deadline, or `None`
/// when the computation alone already uses up the round.
pub fn compute_phi(client: &ClientState, site: &SiteState, cut: &LayerCut, task: &TaskConfig) -> Option<f64> {
    phi_from(task.deadline, compute_mu(client, site, cut, task), task.scaled_exchange(client, cut))
}

fn phi_from(deadline: f64, mu: f64, scaled_exchange: f64) -> Option<f64> {
    let slack = deadline - mu;
    if slack > 0.0 {
        let phi = scaled_exchange / slack;
        (phi > 0.0 && phi.is_finite()).then_some(phi)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairChoice {
    pub cut: usize,
    pub phi: f64,
}

/// Cut with the smallest positive deadline bandwidth among `candidate_cuts`
/// (ties to the smaller cut), with that bandwidth.
pub fn optimal_partition(
    client: &ClientState,
    site: &SiteState,
    task: &TaskConfig,
    candidate_cuts: &[usize],
) -> Option<PairChoice> {
    let mut best: Option<PairChoice> = None;
    let mut cuts = candidate_cuts.to_vec();
    cuts.sort_unstable();
    for k in cuts {
        let Some(cut) = task.profile.cut(k) else { continue };
        if let Some(phi) = compute_phi(client, site, cut, task) {
            if best.map_or(true, |b| phi < b.phi) {
                best = Some(PairChoice { cut: k, phi });
            }
        }
    }
    best
}

/// `sum_i (scale * p_i + lambda * Q_i) * z_i`.
pub fn training_utility(clients: &[ClientState], admitted: &[bool], fairness_weight: f64, utility_scale: f64) -> f64 {
    clients
        .iter()
        .zip(admitted)
        .filter(|(_, &z)| z)
        .map(|(c, _)| utility_scale * c.weight + fairness_weight * c.queue)
        .sum()
}

pub fn update_queue(queue: f64, admitted: bool, weight: f64) -> f64 {
    queue - f64::from(u8::from(admitted)) + weight
}

/// How an admitted client trains this round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Placement {
    Split { site: usize, path: usize, cut: usize, bandwidth: f64 },
    /// Whole model on the client, no server or network reservation.
    Local,
}

/// Admitted clients (by index) and their placements; everyone else is rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Assignment {
    pub admitted: BTreeMap<usize, Placement>,
}

impl Assignment {
    pub fn is_empty(&self) -> bool {
        self.admitted.is_empty()
    }

    pub fn len(&self) -> usize {
        self.admitted.len()
    }

    pub fn admitted_flags(&self, num_clients: usize) -> Vec<bool> {
        let mut flags = vec![false; num_clients];
        for &i in self.admitted.keys() {
            flags[i] = true;
        }
        flags
    }

    pub fn rejected(&self, num_clients: usize) -> Vec<usize> {
        (0..num_clients).filter(|i| !self.admitted.contains_key(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Latency {
    pub download: f64,
    pub training: f64,
    pub upload: f64,
    pub total: f64,
}

/// Immutable snapshot of one scheduling round. Derived coefficients are
/// computed once from the raw fields at construction.
#[derive(Debug, Clone)]
pub struct SchedulingInstance {
    topology: Arc<Topology>,
    paths: Arc<PathSet>,
    clients: Vec<ClientState>,
    sites: Vec<SiteState>,
    task: Arc<TaskConfig>,
    candidate_cuts: Vec<usize>,
    pairs: Vec<Option<PairChoice>>,
}

impl SchedulingInstance {
    pub fn new(
        topology: Arc<Topology>,
        paths: Arc<PathSet>,
        clients: Vec<ClientState>,
        sites: Vec<SiteState>,
        task: Arc<TaskConfig>,
    ) -> Self {
        let candidate_cuts = effective_partition_points(&task.profile, task.shrink_factor);
        Self::with_cuts(topology, paths, clients, sites, task, candidate_cuts)
    }

    /// Like [`SchedulingInstance::new`] but with an explicit candidate cut set.
    pub fn with_cuts(
        topology: Arc<Topology>,
        paths: Arc<PathSet>,
        clients: Vec<ClientState>,
        sites: Vec<SiteState>,
        task: Arc<TaskConfig>,
        candidate_cuts: Vec<usize>,
    ) -> Self {
        let mut pairs = Vec::with_capacity(clients.len() * sites.len());
        for c in &clients {
            for s in &sites {
                pairs.push(optimal_partition(c, s, &task, &candidate_cuts));
            }
        }
        Self { topology, paths, clients, sites, task, candidate_cuts, pairs }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn topology_arc(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn path_set(&self) -> &Arc<PathSet> {
        &self.paths
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn sites(&self) -> &[SiteState] {
        &self.sites
    }

    pub fn task(&self) -> &TaskConfig {
        &self.task
    }

    pub fn task_arc(&self) -> &Arc<TaskConfig> {
        &self.task
    }

    pub fn candidate_cuts(&self) -> &[usize] {
        &self.candidate_cuts
    }

    /// Optimal cut and deadline bandwidth for a pair, if any cut is feasible.
    pub fn pair(&self, client: usize, site: usize) -> Option<PairChoice> {
        self.pairs[client * self.sites.len() + site]
    }

    pub fn paths(&self, client: usize, site: usize) -> &[Path] {
        self.paths.get(self.clients[client].node, self.sites[site].node)
    }

    pub fn path(&self, client: usize, site: usize, index: usize) -> &Path {
        &self.paths(client, site)[index]
    }

    /// `(alpha_j + gamma_i + gamma'_j) * deadline`.
    pub fn server_cost(&self, client: usize, site: usize) -> f64 {
        let s = &self.sites[site];
        (s.unit_server_cost + self.clients[client].comm_cost + s.comm_cost) * self.task.deadline
    }

    /// Deadline-scaled unit bandwidth cost summed along a path.
    pub fn path_bandwidth_cost(&self, path: &Path) -> f64 {
        path.unit_cost(&self.topology) * self.task.deadline
    }

    pub fn utility_weight(&self, client: usize) -> f64 {
        self.task.utility_weight(&self.clients[client])
    }

    /// Latency of training the whole model on the client.
    pub fn local_latency(&self, client: usize) -> Latency {
        let c = &self.clients[client];
        let t = &self.task;
        let download = (t.sched_msg_size + t.profile.model_size) / c.ps_bandwidth;
        let upload = (t.profile.model_size + t.status_msg_size) / c.ps_bandwidth;
        let training = t.iterations(c) * t.profile.full_density() / c.capacity;
        Latency { download, training, upload, total: download + training + upload }
    }
}

/// System cost of an assignment: server, bandwidth and communication cost,
/// all scaled by the round length.
pub fn system_cost(assignment: &Assignment, instance: &SchedulingInstance) -> f64 {
    assignment
        .admitted
        .iter()
        .map(|(&i, placement)| match *placement {
            Placement::Split { site, path, bandwidth, .. } => {
                let p = instance.path(i, site, path);
                instance.server_cost(i, site) + instance.path_bandwidth_cost(p) * bandwidth
            }
            Placement::Local => instance.clients()[i].comm_cost * instance.task().deadline,
        })
        .sum()
}

/// Utility of the admitted clients of an assignment.
pub fn assignment_utility(assignment: &Assignment, instance: &SchedulingInstance) -> f64 {
    let task = instance.task();
    training_utility(
        instance.clients(),
        &assignment.admitted_flags(instance.clients().len()),
        task.fairness_weight,
        task.utility_scale,
    )
}

/// Download, split-training and upload latency of one admitted client.
pub fn round_latency(client: usize, placement: &Placement, instance: &SchedulingInstance) -> Latency {
    let (site, cut, bandwidth) = match *placement {
        Placement::Split { site, cut, bandwidth, .. } => (site, cut, bandwidth),
        Placement::Local => return instance.local_latency(client),
    };
    let c = &instance.clients()[client];
    let s = &instance.sites()[site];
    let t = instance.task();
    let lc = t.profile.cut(cut).expect("placement cut exists in profile");
    let download = (t.sched_msg_size + t.profile.model_size) / c.ps_bandwidth;
    let upload = (t.profile.model_size + t.status_msg_size) / c.ps_bandwidth;
    let training = t.iterations(c)
        * (lc.client_density / c.capacity + lc.server_density / s.server_capacity + lc.exchange_size / bandwidth);
    Latency { download, training, upload, total: download + training + upload }
}

/// `U / C`, with an empty or cost-free round counting as zero.
pub fn round_ratio(utility: f64, cost: f64) -> f64 {
    if cost > 0.0 {
        utility / cost
    } else {
        0.0
    }
}

/// Mean per-round utility-to-cost ratio.
pub fn rue(rounds: &[(f64, f64)]) -> f64 {
    if rounds.is_empty() {
        return 0.0;
    }
    rounds.iter().map(|&(u, c)| round_ratio(u, c)).sum::<f64>() / rounds.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, LinkSpec, NodeKind, NodeSpec};

    fn client(d: f64, c: f64, b: f64) -> ClientState {
        ClientState { node: NodeId(0), weight: 0.5, dataset_size: d, capacity: c, queue: 0.0, ps_bandwidth: b, comm_cost: 0.0 }
    }

    fn site(w: f64) -> SiteState {
        SiteState { node: NodeId(1), server_capacity: w, num_servers: 1, unit_server_cost: 1.0, comm_cost: 0.0 }
    }

    fn cut(k: usize, qc: f64, qs: f64, s: f64) -> LayerCut {
        LayerCut { k, client_density: qc, server_density: qs, exchange_size: s }
    }

    fn task(cuts: Vec<LayerCut>, model: f64, deadline: f64) -> TaskConfig {
        let n = cuts.len();
        let profile = ModelProfile { name: "t".into(), num_layers: n + 1, model_size: model, q_full: None, cuts };
        TaskConfig::new(profile, 1, 10, deadline)
    }

    #[test]
    fn mu_examples() {
        let k = cut(1, 50.0, 20.0, 0.0);
        let t = task(vec![k.clone()], 0.0, 10.0);
        assert_eq!(compute_mu(&client(100.0, 100.0, 1.0), &site(200.0), &k, &t), 6.0);
        assert_eq!(compute_mu(&client(100.0, 200.0, 1.0), &site(200.0), &k, &t), 3.5);

        let k0 = cut(1, 0.0, 0.0, 0.0);
        let mut t = task(vec![k0.clone()], 10.0, 10.0);
        t.sched_msg_size = 6.0;
        t.status_msg_size = 4.0;
        assert_eq!(compute_mu(&client(100.0, 1.0, 10.0), &site(1.0), &k0, &t), 3.0);
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_from(10.0, 6.0, 8.0), Some(2.0));
        assert_eq!(phi_from(10.0, 10.0, 8.0), None);
        assert_eq!(phi_from(10.0, 12.0, 8.0), None);
    }

    #[test]
    fn optimal_partition_examples() {
        // mu = 0 for both cuts; phi = 10*s/deadline with deadline 10.
        let t = task(vec![cut(1, 0.0, 0.0, 2.0), cut(2, 0.0, 0.0, 1.5)], 0.0, 10.0);
        let best = optimal_partition(&client(100.0, 1.0, 1.0), &site(1.0), &t, &[1, 2]).unwrap();
        assert_eq!(best.cut, 2);
        assert!((best.phi - 1.5).abs() < 1e-12);

        // cut 2 needs 100*100/(10*1) = 1000 s of client compute
        let t = task(vec![cut(1, 0.0, 0.0, 2.0), cut(2, 100.0, 0.0, 1.5)], 0.0, 10.0);
        let best = optimal_partition(&client(100.0, 1.0, 1.0), &site(1.0), &t, &[1, 2]).unwrap();
        assert_eq!(best.cut, 1);
        assert!((best.phi - 2.0).abs() < 1e-12);

        let t = task(vec![cut(1, 100.0, 0.0, 2.0)], 0.0, 10.0);
        assert!(optimal_partition(&client(100.0, 1.0, 1.0), &site(1.0), &t, &[1]).is_none());
    }

    #[test]
    fn utility_examples() {
        let mk = |p: f64, q: f64| ClientState { weight: p, queue: q, ..client(1.0, 1.0, 1.0) };
        let cs = [mk(0.5, 0.0), mk(0.5, 0.0)];
        assert_eq!(training_utility(&cs, &[true, false], 1.0, 1.0), 0.5);
        let cs = [mk(0.3, 0.3), mk(0.7, -0.7)];
        assert!((training_utility(&cs, &[true, true], 1.0, 1.0) - 0.6).abs() < 1e-12);
        assert_eq!(training_utility(&cs, &[false, false], 1.0, 1.0), 0.0);
    }

    #[test]
    fn queue_examples() {
        assert!((update_queue(0.0, true, 0.3) - (-0.7)).abs() < 1e-15);
        assert_eq!(update_queue(0.0, false, 0.3), 0.3);
        let z = [true, false, false, true, true];
        let q = z.iter().fold(0.0, |q, &zt| update_queue(q, zt, 0.25));
        assert_eq!(q, 5.0 * 0.25 - 3.0);
    }

    #[test]
    fn rue_examples() {
        assert_eq!(rue(&[(2.0, 4.0), (3.0, 3.0)]), 0.75);
        assert_eq!(rue(&[(0.0, 0.0)]), 0.0);
        assert_eq!(rue(&[(3.0, 2.0); 4]), 1.5);
    }

    /// client -> r -> site with two links of unit cost 1, deadline 1, so
    /// deadline-scaled costs equal raw costs.
    fn chain_instance(server_cost: f64) -> SchedulingInstance {
        let nodes = vec![
            NodeSpec { id: "c0".into(), kind: NodeKind::Client },
            NodeSpec { id: "c1".into(), kind: NodeKind::Client },
            NodeSpec { id: "r".into(), kind: NodeKind::Router },
            NodeSpec { id: "s".into(), kind: NodeKind::Site },
        ];
        let l = |id: &str, a: &str, b: &str| LinkSpec {
            id: id.into(),
            src: a.into(),
            dst: b.into(),
            capacity: 100.0,
            cost: 1.0,
            undirected: false,
        };
        let topo = Arc::new(build_topology(&nodes, &[l("a", "c0", "r"), l("b", "r", "s"), l("c", "c1", "r")]).unwrap());
        let cn = [NodeId(0), NodeId(1)];
        let paths = Arc::new(PathSet::build(&topo, &cn, &[NodeId(3)], 3));
        let clients = cn
            .iter()
            .map(|&n| ClientState { node: n, ..client(10.0, 10.0, 10.0) })
            .collect::<Vec<_>>();
        let sites = vec![SiteState { node: NodeId(3), unit_server_cost: server_cost, ..site(10.0) }];
        let t = Arc::new(task(vec![cut(1, 1.0, 1.0, 1.0)], 0.0, 1.0));
        SchedulingInstance::new(topo, paths, clients, sites, t)
    }

    #[test]
    fn system_cost_examples() {
        let inst = chain_instance(2.0);
        let mut a = Assignment::default();
        assert_eq!(system_cost(&a, &inst), 0.0);
        a.admitted.insert(0, Placement::Split { site: 0, path: 0, cut: 1, bandwidth: 3.0 });
        assert_eq!(system_cost(&a, &inst), 8.0);

        let mut b = Assignment::default();
        b.admitted.insert(1, Placement::Split { site: 0, path: 0, cut: 1, bandwidth: 5.0 });
        let mut both = a.clone();
        both.admitted.extend(b.admitted.clone());
        assert_eq!(system_cost(&both, &inst), system_cost(&a, &inst) + system_cost(&b, &inst));
    }

    #[test]
    fn latency_saturates_deadline_at_phi() {
        let k = cut(1, 50.0, 20.0, 8.0);
        let mut t = task(vec![k.clone()], 0.0, 10.0);
        t.batch_size = 10;
        let topo = Arc::new(
            build_topology(
                &[NodeSpec { id: "c".into(), kind: NodeKind::Client }, NodeSpec { id: "s".into(), kind: NodeKind::Site }],
                &[LinkSpec { id: "e".into(), src: "c".into(), dst: "s".into(), capacity: 1e6, cost: 0.0, undirected: false }],
            )
            .unwrap(),
        );
        let paths = Arc::new(PathSet::build(&topo, &[NodeId(0)], &[NodeId(1)], 1));
        let c = ClientState { node: NodeId(0), ..client(100.0, 100.0, 1.0) };
        let s = SiteState { node: NodeId(1), ..site(200.0) };
        let inst = SchedulingInstance::new(topo, paths, vec![c], vec![s], Arc::new(t));
        let choice = inst.pair(0, 0).unwrap();
        // mu = 6, s' = 10 * 8 = 80, phi = 80 / 4 = 20
        assert!((choice.phi - 20.0).abs() < 1e-12);
        let at = |y: f64| round_latency(0, &Placement::Split { site: 0, path: 0, cut: 1, bandwidth: y }, &inst);
        assert!((at(choice.phi).total - 10.0).abs() <= 1e-9 * 10.0);
        assert!(at(2.0 * choice.phi).total < 10.0);
        assert!((at(80.0 / 4.0).total - 10.0).abs() < 1e-12);
    }
}
