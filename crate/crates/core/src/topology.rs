//! Data-plane graph of clients, routers and computing sites, plus loopless
//! candidate-path enumeration between client/site pairs.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("link `{link}` references unknown node `{node}`")]
    DanglingEndpoint { link: String, node: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("link `{link}`: {reason}")]
    InvalidLink { link: String, reason: &'static str },
    #[error("topology file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Client,
    Router,
    Site,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub usize);

/// Index of a physical link. Both directions of an undirected link share one
/// group and therefore one bandwidth budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub name: String,
    pub src: NodeId,
    pub dst: NodeId,
    /// Bandwidth capacity of the physical link this direction belongs to.
    pub capacity: f64,
    /// Unit bandwidth cost per round.
    pub cost: f64,
    pub group: GroupId,
}

/// Node declaration as it appears in a topology file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
}

/// Link declaration as it appears in a topology file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub capacity: f64,
    pub cost: f64,
    #[serde(default)]
    pub undirected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

impl TopologyFile {
    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        serde_json::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))
    }

    pub fn build(&self) -> Result<Topology, TopologyError> {
        build_topology(&self.nodes, &self.links)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    group_capacity: Vec<f64>,
    out_links: Vec<Vec<LinkId>>,
    by_name: HashMap<String, NodeId>,
}

/// Validates node and link declarations and assembles a directed [`Topology`].
///
/// Links flagged `undirected` expand into two directed links (`<id>` and
/// `<id>~r`) that share a capacity group. Internal ids follow declaration
/// order, which is also the order used for every deterministic tie-break.
pub fn build_topology(nodes: &[NodeSpec], links: &[LinkSpec]) -> Result<Topology, TopologyError> {
    let mut by_name = HashMap::with_capacity(nodes.len());
    let mut out_nodes = Vec::with_capacity(nodes.len());
    for (i, spec) in nodes.iter().enumerate() {
        if by_name.insert(spec.id.clone(), NodeId(i)).is_some() {
            return Err(TopologyError::DuplicateId(spec.id.clone()));
        }
        out_nodes.push(Node { name: spec.id.clone(), kind: spec.kind });
    }

    let mut seen_links = HashMap::new();
    let mut out_links = Vec::new();
    let mut group_capacity = Vec::new();
    for spec in links {
        if seen_links.insert(spec.id.clone(), ()).is_some() {
            return Err(TopologyError::DuplicateId(spec.id.clone()));
        }
        let lookup = |name: &str| {
            by_name.get(name).copied().ok_or_else(|| TopologyError::DanglingEndpoint {
                link: spec.id.clone(),
                node: name.to_string(),
            })
        };
        let src = lookup(&spec.src)?;
        let dst = lookup(&spec.dst)?;
        if src == dst {
            return Err(TopologyError::InvalidLink { link: spec.id.clone(), reason: "self loop" });
        }
        if !(spec.capacity.is_finite() && spec.capacity > 0.0) {
            return Err(TopologyError::InvalidLink {
                link: spec.id.clone(),
                reason: "capacity must be finite and positive",
            });
        }
        if !(spec.cost.is_finite() && spec.cost >= 0.0) {
            return Err(TopologyError::InvalidLink {
                link: spec.id.clone(),
                reason: "cost must be finite and non-negative",
            });
        }
        let group = GroupId(group_capacity.len());
        group_capacity.push(spec.capacity);
        let mut push = |name: String, src: NodeId, dst: NodeId| {
            let id = LinkId(out_links.len());
            out_links.push(Link { id, name, src, dst, capacity: spec.capacity, cost: spec.cost, group });
        };
        push(spec.id.clone(), src, dst);
        if spec.undirected {
            let rev = format!("{}~r", spec.id);
            if seen_links.insert(rev.clone(), ()).is_some() {
                return Err(TopologyError::DuplicateId(rev));
            }
            push(rev, dst, src);
        }
    }

    let mut adjacency = vec![Vec::new(); out_nodes.len()];
    for link in &out_links {
        adjacency[link.src.0].push(link.id);
    }
    Ok(Topology { nodes: out_nodes, links: out_links, group_capacity, out_links: adjacency, by_name })
}

impl Topology {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn num_groups(&self) -> usize {
        self.group_capacity.len()
    }

    pub fn group_capacity(&self, group: GroupId) -> f64 {
        self.group_capacity[group.0]
    }

    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out_links[node.0]
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.kind == kind).map(|(i, _)| NodeId(i))
    }

    /// Hop distance from every node to `target` over directed links.
    fn hops_to(&self, target: NodeId) -> Vec<Option<usize>> {
        let mut incoming = vec![Vec::new(); self.nodes.len()];
        for link in &self.links {
            incoming[link.dst.0].push(link.src);
        }
        let mut dist = vec![None; self.nodes.len()];
        dist[target.0] = Some(0);
        let mut queue = VecDeque::from([target]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v.0].unwrap();
            for &u in &incoming[v.0] {
                if dist[u.0].is_none() {
                    dist[u.0] = Some(d + 1);
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Shortest hop count from `src` to `dst`, if reachable.
    pub fn hop_distance(&self, src: NodeId, dst: NodeId) -> Option<usize> {
        self.hops_to(dst)[src.0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub client: NodeId,
    pub site: NodeId,
    pub links: Vec<LinkId>,
    /// Position of this path within the candidate list of its pair.
    pub index: usize,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.links.len()
    }

    /// Capacity groups traversed by the path, in path order.
    pub fn groups<'a>(&'a self, topology: &'a Topology) -> impl Iterator<Item = GroupId> + 'a {
        self.links.iter().map(move |&l| topology.link(l).group)
    }

    /// Sum of unit bandwidth costs along the path.
    pub fn unit_cost(&self, topology: &Topology) -> f64 {
        self.links.iter().map(|&l| topology.link(l).cost).sum()
    }
}

/// 1 if `link` lies on `path`, else 0.
pub fn link_indicator(path: &Path, link: LinkId) -> u8 {
    u8::from(path.links.contains(&link))
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Partial {
    bound: usize,
    links: Vec<LinkId>,
    node: NodeId,
}

/// Up to `k_paths` loopless paths from `client` to `site`, ordered by hop
/// count and then by link-id sequence.
///
/// Best-first search over partial simple paths. The priority is the hop
/// count so far plus the unconstrained hop distance to the site, which never
/// overestimates, so completed paths pop in exactly the contract order.
/// Unreachable pairs yield an empty list.
pub fn enumerate_paths(topology: &Topology, client: NodeId, site: NodeId, k_paths: usize) -> Vec<Path> {
    let mut found = Vec::new();
    if k_paths == 0 || client == site {
        return found;
    }
    let dist = topology.hops_to(site);
    let Some(start) = dist[client.0] else {
        return found;
    };

    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Partial { bound: start, links: Vec::new(), node: client }));
    let mut on_path = vec![false; topology.nodes().len()];
    while let Some(Reverse(p)) = heap.pop() {
        if p.node == site {
            found.push(Path { client, site, index: found.len(), links: p.links });
            if found.len() == k_paths {
                break;
            }
            continue;
        }
        on_path.iter_mut().for_each(|b| *b = false);
        on_path[client.0] = true;
        for &l in &p.links {
            on_path[topology.link(l).dst.0] = true;
        }
        for &l in topology.out_links(p.node) {
            let next = topology.link(l).dst;
            if on_path[next.0] {
                continue;
            }
            let Some(rest) = dist[next.0] else { continue };
            let mut links = p.links.clone();
            links.push(l);
            heap.push(Reverse(Partial { bound: links.len() + rest, links, node: next }));
        }
    }
    found
}

/// Candidate paths for every (client, site) pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathSet {
    paths: HashMap<(NodeId, NodeId), Vec<Path>>,
    k_paths: usize,
}

impl PathSet {
    pub fn build(topology: &Topology, clients: &[NodeId], sites: &[NodeId], k_paths: usize) -> Self {
        let mut paths = HashMap::with_capacity(clients.len() * sites.len());
        for &c in clients {
            for &s in sites {
                paths.insert((c, s), enumerate_paths(topology, c, s, k_paths));
            }
        }
        Self { paths, k_paths }
    }

    pub fn get(&self, client: NodeId, site: NodeId) -> &[Path] {
        self.paths.get(&(client, site)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn k_paths(&self) -> usize {
        self.k_paths
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str, kind: NodeKind) -> NodeSpec {
        NodeSpec { id: id.into(), kind }
    }

    fn link(id: &str, src: &str, dst: &str) -> LinkSpec {
        LinkSpec { id: id.into(), src: src.into(), dst: dst.into(), capacity: 10.0, cost: 1.0, undirected: false }
    }

    fn triangle() -> Topology {
        build_topology(
            &[node("A", NodeKind::Client), node("B", NodeKind::Router), node("C", NodeKind::Site)],
            &[link("ab", "A", "B"), link("bc", "B", "C"), link("ac", "A", "C")],
        )
        .unwrap()
    }

    #[test]
    fn builds_three_node_chain() {
        let t = build_topology(
            &[node("A", NodeKind::Client), node("B", NodeKind::Router), node("C", NodeKind::Site)],
            &[link("ab", "A", "B"), link("bc", "B", "C")],
        )
        .unwrap();
        assert_eq!(t.nodes().len(), 3);
        assert_eq!(t.links().len(), 2);
    }

    #[test]
    fn rejects_dangling_and_duplicates() {
        let err = build_topology(&[node("X", NodeKind::Client)], &[link("xy", "X", "Y")]).unwrap_err();
        assert_eq!(err, TopologyError::DanglingEndpoint { link: "xy".into(), node: "Y".into() });

        let err = build_topology(
            &[node("X", NodeKind::Client), node("Y", NodeKind::Site)],
            &[link("e", "X", "Y"), link("e", "Y", "X")],
        )
        .unwrap_err();
        assert_eq!(err, TopologyError::DuplicateId("e".into()));

        let err = build_topology(&[node("X", NodeKind::Client), node("X", NodeKind::Site)], &[]).unwrap_err();
        assert_eq!(err, TopologyError::DuplicateId("X".into()));
    }

    #[test]
    fn rejects_bad_capacity() {
        let mut l = link("e", "X", "Y");
        l.capacity = 0.0;
        let err = build_topology(&[node("X", NodeKind::Client), node("Y", NodeKind::Site)], &[l]).unwrap_err();
        assert!(matches!(err, TopologyError::InvalidLink { .. }));
    }

    #[test]
    fn undirected_links_share_a_group() {
        let mut l = link("e", "X", "Y");
        l.undirected = true;
        let t = build_topology(&[node("X", NodeKind::Router), node("Y", NodeKind::Router)], &[l]).unwrap();
        assert_eq!(t.links().len(), 2);
        assert_eq!(t.num_groups(), 1);
        assert_eq!(t.links()[0].group, t.links()[1].group);
        assert_eq!(t.links()[1].src, t.links()[0].dst);
    }

    #[test]
    fn triangle_paths() {
        let t = triangle();
        let a = t.node_id("A").unwrap();
        let c = t.node_id("C").unwrap();
        let two = enumerate_paths(&t, a, c, 2);
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].links, vec![LinkId(2)]);
        assert_eq!(two[1].links, vec![LinkId(0), LinkId(1)]);
        assert_eq!(two[1].index, 1);
        let one = enumerate_paths(&t, a, c, 1);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].links, vec![LinkId(2)]);
    }

    #[test]
    fn disconnected_pair_has_no_paths() {
        let t = build_topology(&[node("A", NodeKind::Client), node("C", NodeKind::Site)], &[]).unwrap();
        assert!(enumerate_paths(&t, NodeId(0), NodeId(1), 3).is_empty());
    }

    #[test]
    fn indicator() {
        let t = triangle();
        let (a, c) = (t.node_id("A").unwrap(), t.node_id("C").unwrap());
        let paths = enumerate_paths(&t, a, c, 2);
        let direct = &paths[0];
        let via_b = &paths[1];
        assert_eq!(link_indicator(via_b, LinkId(0)), 1);
        assert_eq!(link_indicator(via_b, LinkId(2)), 0);
        assert_eq!(link_indicator(direct, LinkId(1)), 0);
    }
}
