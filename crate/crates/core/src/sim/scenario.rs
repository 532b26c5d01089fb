//! Network scenarios: backbone topology, site placement, client attachment
//! and the per-client static attributes.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{SiteState, TaskConfig};
use crate::profile::ModelProfile;
use crate::topology::{LinkSpec, NodeId, NodeKind, NodeSpec, PathSet, Topology, TopologyError, TopologyFile};

/// Capacity of access links. Large enough never to bind.
const ACCESS_CAPACITY: f64 = 1e12;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("layout {layout} needs the {expected} backbone, got {got}")]
    LayoutMismatch { layout: Layout, expected: Backbone, got: Backbone },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backbone {
    #[serde(rename = "NSFNET")]
    Nsfnet,
    #[serde(rename = "USNET")]
    Usnet,
}

impl Backbone {
    pub fn file(self) -> TopologyFile {
        let text = match self {
            Backbone::Nsfnet => include_str!("../../data/nsfnet.json"),
            Backbone::Usnet => include_str!("../../data/usnet.json"),
        };
        TopologyFile::from_json(text).expect("bundled topology is valid")
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Nsfnet => "NSFNET",
            Backbone::Usnet => "USNET",
        })
    }
}

/// Client placement patterns. `Tiny` is a small NSFNET layout meant for
/// exact comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layout {
    NS1,
    NS2,
    NS3,
    NS4,
    Tiny,
}

impl Layout {
    pub const ALL: [Layout; 5] = [Layout::NS1, Layout::NS2, Layout::NS3, Layout::NS4, Layout::Tiny];

    pub fn backbone(self) -> Backbone {
        match self {
            Layout::NS1 | Layout::Tiny => Backbone::Nsfnet,
            _ => Backbone::Usnet,
        }
    }

    /// `(client nodes, clients per node, servers per site, sites)`.
    fn shape(self) -> (usize, usize, usize, usize) {
        match self {
            Layout::NS1 => (8, 6, 8, 6),
            Layout::NS2 => (16, 1, 3, 6),
            Layout::NS3 => (16, 3, 8, 6),
            Layout::NS4 => (3, 16, 8, 6),
            Layout::Tiny => (4, 2, 2, 3),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Layout::ALL
            .into_iter()
            .find(|l| l.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown layout `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSetting {
    pub capacity: f64,
    pub utilization: f64,
    pub cost: f64,
}

impl SiteSetting {
    pub fn effective_capacity(&self) -> f64 {
        self.capacity * self.utilization
    }
}

/// The six computing sites used by the standard layouts.
pub fn default_sites() -> Vec<SiteSetting> {
    [(4400.0, 0.05, 800.0), (4400.0, 0.10, 800.0), (4400.0, 0.15, 800.0), (6500.0, 0.05, 1500.0), (6500.0, 0.10, 1500.0), (6500.0, 0.15, 1500.0)]
        .into_iter()
        .map(|(capacity, utilization, cost)| SiteSetting { capacity, utilization, cost })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskPreset {
    DenseNet,
    MobileNet,
}

impl TaskPreset {
    pub fn profile(self) -> ModelProfile {
        match self {
            TaskPreset::DenseNet => ModelProfile::densenet_like(),
            TaskPreset::MobileNet => ModelProfile::mobilenet_like(),
        }
    }

    /// One epoch per round; batch 8 and 150 s for the larger model, batch 4
    /// and 5 s for the smaller one.
    pub fn task(self) -> TaskConfig {
        match self {
            TaskPreset::DenseNet => TaskConfig::new(self.profile(), 1, 8, 150.0),
            TaskPreset::MobileNet => TaskConfig::new(self.profile(), 1, 4, 5.0),
        }
    }

    pub fn link_cost_range(self) -> (f64, f64) {
        match self {
            TaskPreset::DenseNet => (1.0, 10.0),
            TaskPreset::MobileNet => (0.1, 1.0),
        }
    }
}

impl FromStr for TaskPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "densenet" => Ok(TaskPreset::DenseNet),
            "mobilenet" => Ok(TaskPreset::MobileNet),
            _ => Err(format!("unknown task `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub backbone: Backbone,
    pub layout: Layout,
    pub sites: Vec<SiteSetting>,
    pub servers_per_site: usize,
    pub client_nodes: usize,
    pub clients_per_node: usize,
    pub link_capacity: (f64, f64),
    pub link_cost: (f64, f64),
    pub client_tiers: Vec<f64>,
    /// Per-round client utilization range.
    pub client_utilization: (f64, f64),
    pub dataset_size: (u32, u32),
    /// Per-round client bandwidth to the parameter server.
    pub ps_bandwidth: (f64, f64),
    pub k_paths: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Standard settings for `layout` with link costs for `task`.
    pub fn standard(layout: Layout, task: TaskPreset, seed: u64) -> Self {
        let (client_nodes, clients_per_node, servers, num_sites) = layout.shape();
        let sites = match num_sites {
            6 => default_sites(),
            _ => {
                let all = default_sites();
                vec![all[0], all[2], all[4]]
            }
        };
        Self {
            backbone: layout.backbone(),
            layout,
            sites,
            servers_per_site: servers,
            client_nodes,
            clients_per_node,
            link_capacity: (3000.0, 5000.0),
            link_cost: task.link_cost_range(),
            client_tiers: vec![400.0, 800.0, 1200.0],
            client_utilization: (0.02, 0.2),
            dataset_size: (4000, 20000),
            ps_bandwidth: (1000.0, 4000.0),
            k_paths: if layout == Layout::Tiny { 2 } else { 3 },
            seed,
        }
    }

    pub fn num_clients(&self) -> usize {
        self.client_nodes * self.clients_per_node
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        let range_ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && 0.0 <= a && a <= b;
        if self.layout.backbone() != self.backbone {
            return Err(ScenarioError::LayoutMismatch {
                layout: self.layout,
                expected: self.layout.backbone(),
                got: self.backbone,
            });
        }
        if self.sites.is_empty() || self.servers_per_site == 0 || self.k_paths == 0 || self.num_clients() == 0 {
            return bad("sites, servers, paths and clients must be non-empty");
        }
        if self.client_tiers.is_empty() || self.client_tiers.iter().any(|&c| !(c > 0.0)) {
            return bad("client tiers must be positive");
        }
        for r in [self.link_capacity, self.link_cost, self.client_utilization, self.ps_bandwidth] {
            if !range_ok(r) {
                return bad("ranges must be finite, non-negative and ordered");
            }
        }
        if self.link_capacity.0 <= 0.0 || self.client_utilization.0 <= 0.0 || self.ps_bandwidth.0 <= 0.0 {
            return bad("capacity, utilization and bandwidth ranges must be positive");
        }
        if self.dataset_size.0 == 0 || self.dataset_size.0 > self.dataset_size.1 {
            return bad("dataset size range must be positive and ordered");
        }
        if self.sites.iter().any(|s| !(s.effective_capacity() > 0.0) || !(s.cost >= 0.0)) {
            return bad("site capacity must be positive and cost non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientProfile {
    pub node: NodeId,
    /// Backbone node the client hangs off.
    pub attach: String,
    pub tier: f64,
    pub dataset_size: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub topology: Arc<Topology>,
    pub paths: Arc<PathSet>,
    pub clients: Vec<ClientProfile>,
    pub sites: Vec<SiteState>,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Places sites and clients on the configured backbone and samples link and
/// client attributes. Deterministic in `rng`.
pub fn generate_scenario<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let file = config.backbone.file();
    let backbone: Vec<String> = file.nodes.iter().map(|n| n.id.clone()).collect();
    let needed = config.sites.len() + config.client_nodes;
    if needed > backbone.len() {
        return Err(ScenarioError::Invalid(format!(
            "{} sites and {} client nodes do not fit on {} backbone nodes",
            config.sites.len(),
            config.client_nodes,
            backbone.len()
        )));
    }
    let mut order: Vec<usize> = (0..backbone.len()).collect();
    order.shuffle(rng);
    let site_at = &order[..config.sites.len()];
    let client_at = &order[config.sites.len()..needed];

    let mut nodes: Vec<NodeSpec> = file.nodes.clone();
    let mut links: Vec<LinkSpec> = file
        .links
        .iter()
        .map(|l| LinkSpec {
            capacity: uniform(rng, config.link_capacity),
            cost: uniform(rng, config.link_cost),
            undirected: true,
            ..l.clone()
        })
        .collect();
    let mut access = |name: String, kind: NodeKind, at: usize, nodes: &mut Vec<NodeSpec>| {
        nodes.push(NodeSpec { id: name.clone(), kind });
        links.push(LinkSpec {
            id: format!("{name}-{}", backbone[at]),
            src: name,
            dst: backbone[at].clone(),
            capacity: ACCESS_CAPACITY,
            cost: 0.0,
            undirected: true,
        });
    };
    for (j, &at) in site_at.iter().enumerate() {
        access(format!("site{j}"), NodeKind::Site, at, &mut nodes);
    }
    let mut attach = Vec::new();
    for &at in client_at {
        for _ in 0..config.clients_per_node {
            let i = attach.len();
            access(format!("client{i}"), NodeKind::Client, at, &mut nodes);
            attach.push(backbone[at].clone());
        }
    }
    let topology = crate::topology::build_topology(&nodes, &links)?;

    let mut clients: Vec<ClientProfile> = attach
        .into_iter()
        .enumerate()
        .map(|(i, attach)| ClientProfile {
            node: topology.node_id(&format!("client{i}")).expect("client node exists"),
            attach,
            tier: *config.client_tiers.choose(rng).expect("tiers non-empty"),
            dataset_size: f64::from(rng.gen_range(config.dataset_size.0..=config.dataset_size.1)),
            weight: 0.0,
        })
        .collect();
    let total: f64 = clients.iter().map(|c| c.dataset_size).sum();
    for c in &mut clients {
        c.weight = c.dataset_size / total;
    }

    let sites: Vec<SiteState> = config
        .sites
        .iter()
        .enumerate()
        .map(|(j, s)| SiteState {
            node: topology.node_id(&format!("site{j}")).expect("site node exists"),
            server_capacity: s.effective_capacity(),
            num_servers: config.servers_per_site,
            unit_server_cost: s.cost,
            comm_cost: 0.0,
        })
        .collect();

    let client_nodes: Vec<NodeId> = clients.iter().map(|c| c.node).collect();
    let site_nodes: Vec<NodeId> = sites.iter().map(|s| s.node).collect();
    let paths = PathSet::build(&topology, &client_nodes, &site_nodes, config.k_paths);
    Ok(Scenario { config: config.clone(), topology: Arc::new(topology), paths: Arc::new(paths), clients, sites })
}
