//! Nodes, links and controller-installed routes.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Host,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub kind: NodeKind,
}

/// Parameters of one direction of a point-to-point link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Bits per second.
    pub bandwidth: u64,
    pub propagation_delay: SimTime,
    /// Tail-drop capacity in wire bytes, the frame in service included.
    pub queue_capacity: u64,
    /// Largest payload carried by one frame.
    pub mtu: u32,
    /// Header bytes added to every frame on the wire (Ethernet + IP + TCP).
    pub per_frame_overhead: u32,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            bandwidth: 100_000_000,
            propagation_delay: SimTime::from_micros(50),
            queue_capacity: 150_000,
            mtu: 65_535,
            per_frame_overhead: 58,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.bandwidth == 0 {
            return Err(SimError::Config("link bandwidth must be positive".into()));
        }
        if self.mtu < crate::packetizer::MIN_MTU as u32 {
            return Err(SimError::Config(format!("mtu {} below 64 bytes", self.mtu)));
        }
        if self.queue_capacity < self.max_wire_frame() as u64 {
            return Err(SimError::Config(format!(
                "queue capacity {} cannot hold one {}-byte frame",
                self.queue_capacity,
                self.max_wire_frame()
            )));
        }
        Ok(())
    }

    pub fn max_wire_frame(&self) -> u32 {
        self.mtu + self.per_frame_overhead
    }

    pub fn serialization(&self, wire_bytes: u32) -> SimTime {
        SimTime::transmission(wire_bytes as u64, self.bandwidth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub params: LinkParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<LinkSpec>,
    /// (current node, destination host) -> outgoing link.
    routes: BTreeMap<(NodeId, NodeId), LinkId>,
}

impl Topology {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            links: Vec::new(),
            routes: BTreeMap::new(),
        }
    }

    pub fn add_node(&mut self, name: &str, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u16);
        self.nodes.push(Node {
            id,
            name: name.to_string(),
            kind,
        });
        id
    }

    /// Adds both directions of a full-duplex link.
    pub fn connect(&mut self, a: NodeId, b: NodeId, params: LinkParams) -> (LinkId, LinkId) {
        let ab = LinkId(self.links.len() as u16);
        self.links.push(LinkSpec {
            id: ab,
            from: a,
            to: b,
            params,
        });
        let ba = LinkId(self.links.len() as u16);
        self.links.push(LinkSpec {
            id: ba,
            from: b,
            to: a,
            params,
        });
        (ab, ba)
    }

    /// The controller step: breadth-first shortest paths toward every host,
    /// ties broken by lowest link id, installed as next-hop entries.
    pub fn install_routes(&mut self) {
        self.routes.clear();
        let hosts: Vec<NodeId> = self.hosts().map(|n| n.id).collect();
        for dst in hosts {
            // BFS backwards from the destination over reversed links.
            let mut next: BTreeMap<NodeId, LinkId> = BTreeMap::new();
            let mut seen = vec![false; self.nodes.len()];
            seen[dst.0 as usize] = true;
            let mut frontier = VecDeque::from([dst]);
            while let Some(v) = frontier.pop_front() {
                for link in self.links.iter().filter(|l| l.to == v) {
                    let u = link.from;
                    if !seen[u.0 as usize] {
                        seen[u.0 as usize] = true;
                        next.insert(u, link.id);
                        frontier.push_back(u);
                    }
                }
            }
            for (u, l) in next {
                self.routes.insert((u, dst), l);
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &LinkSpec {
        &self.links[id.0 as usize]
    }

    pub fn link_mut(&mut self, id: LinkId) -> &mut LinkSpec {
        &mut self.links[id.0 as usize]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn hosts(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Host)
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn link_between(&self, from: NodeId, to: NodeId) -> Option<LinkId> {
        self.links
            .iter()
            .find(|l| l.from == from && l.to == to)
            .map(|l| l.id)
    }

    pub fn next_hop(&self, at: NodeId, dst: NodeId) -> Option<LinkId> {
        self.routes.get(&(at, dst)).copied()
    }

    /// Links traversed from `src` to `dst`; errors on missing or looping routes.
    pub fn route(&self, src: NodeId, dst: NodeId) -> Result<Vec<LinkId>, SimError> {
        let mut path = Vec::new();
        let mut at = src;
        while at != dst {
            let l = self.next_hop(at, dst).ok_or_else(|| SimError::Unroutable {
                src: self.node(src).name.clone(),
                dst: self.node(dst).name.clone(),
            })?;
            path.push(l);
            if path.len() > self.links.len() {
                return Err(SimError::Config(format!(
                    "routing loop between {} and {}",
                    self.node(src).name,
                    self.node(dst).name
                )));
            }
            at = self.link(l).to;
        }
        Ok(path)
    }

    /// Node sequence from `src` to `dst`.
    pub fn path(&self, src: NodeId, dst: NodeId) -> Result<Vec<NodeId>, SimError> {
        let mut nodes = vec![src];
        for l in self.route(src, dst)? {
            nodes.push(self.link(l).to);
        }
        Ok(nodes)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for l in &self.links {
            l.params.validate()?;
        }
        Ok(())
    }
}

impl Default for Topology {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Eight hosts split across two switches joined by one inter-switch link:
/// h1..h4 on s1, h5..h8 on s2, every link with `params`.
pub fn build_default_topology() -> Topology {
    build_dumbbell(LinkParams::default(), LinkParams::default())
}

/// Default shape with separate parameters for access and inter-switch links.
pub fn build_dumbbell(access: LinkParams, inter_switch: LinkParams) -> Topology {
    let mut t = Topology::new();
    let hosts: Vec<NodeId> = (1..=8)
        .map(|i| t.add_node(&format!("h{i}"), NodeKind::Host))
        .collect();
    let s1 = t.add_node("s1", NodeKind::Switch);
    let s2 = t.add_node("s2", NodeKind::Switch);
    for (i, &h) in hosts.iter().enumerate() {
        t.connect(h, if i < 4 { s1 } else { s2 }, access);
    }
    t.connect(s1, s2, inter_switch);
    t.install_routes();
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape() {
        let t = build_default_topology();
        assert_eq!(t.nodes().len(), 10);
        assert_eq!(t.hosts().count(), 8);
        assert_eq!(t.links().len(), 18);
        assert!(t.links().iter().all(|l| l.params.bandwidth == 100_000_000));
    }

    #[test]
    fn cross_switch_path() {
        let t = build_default_topology();
        let (h1, h5) = (t.find("h1").unwrap(), t.find("h5").unwrap());
        let names: Vec<_> = t
            .path(h1, h5)
            .unwrap()
            .iter()
            .map(|&n| t.node(n).name.clone())
            .collect();
        assert_eq!(names, ["h1", "s1", "s2", "h5"]);
        assert_eq!(t.route(h1, h5).unwrap().len(), 3);
        let h2 = t.find("h2").unwrap();
        assert_eq!(t.route(h1, h2).unwrap().len(), 2);
    }

    #[test]
    fn every_host_pair_is_routed_without_loops() {
        let t = build_default_topology();
        let hosts: Vec<_> = t.hosts().map(|h| h.id).collect();
        for &a in &hosts {
            for &b in &hosts {
                let p = t.path(a, b).unwrap();
                let mut sorted = p.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted.len(), p.len(), "loop in {p:?}");
            }
        }
    }

    #[test]
    fn disconnected_host_is_unroutable() {
        let mut t = build_default_topology();
        let h9 = t.add_node("h9", NodeKind::Host);
        t.install_routes();
        let h1 = t.find("h1").unwrap();
        assert!(matches!(t.route(h1, h9), Err(SimError::Unroutable { .. })));
    }

    #[test]
    fn params_validation() {
        let p = LinkParams {
            queue_capacity: 1000,
            mtu: 1500,
            ..LinkParams::default()
        };
        assert!(p.validate().is_err());
        assert!(LinkParams::default().validate().is_ok());
        let p = LinkParams {
            bandwidth: 0,
            ..LinkParams::default()
        };
        assert!(p.validate().is_err());
    }
}
