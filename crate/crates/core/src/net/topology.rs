use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::addr::{Ipv4Address, MacAddress};

pub type Dpid = u64;
pub type PortNo = u32;
pub type LinkId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HostId(pub u32);

/// A vertex of the topology graph. Switches order before hosts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Switch(Dpid),
    Host(HostId),
}

impl NodeId {
    pub fn dpid(&self) -> Option<Dpid> {
        match self {
            NodeId::Switch(d) => Some(*d),
            NodeId::Host(_) => None,
        }
    }

    pub fn is_switch(&self) -> bool {
        matches!(self, NodeId::Switch(_))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Switch(d) => write!(f, "s{d}"),
            NodeId::Host(h) => write!(f, "h#{}", h.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: NodeId,
    pub port: PortNo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Power {
    #[default]
    On,
    Off,
}

impl Power {
    pub fn is_on(self) -> bool {
        self == Power::On
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub a: Endpoint,
    pub b: Endpoint,
    /// Bits per second.
    pub capacity_bps: f64,
    /// One-way propagation delay in seconds.
    pub delay_s: f64,
    pub power: Power,
    /// Edge cost in the a→b direction.
    pub weight_ab: f64,
    /// Edge cost in the b→a direction.
    pub weight_ba: f64,
}

impl Link {
    /// The endpoint opposite to `node`, if the link touches it.
    pub fn far_end(&self, node: NodeId) -> Option<Endpoint> {
        if self.a.node == node {
            Some(self.b)
        } else if self.b.node == node {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn near_end(&self, node: NodeId) -> Option<Endpoint> {
        if self.a.node == node {
            Some(self.a)
        } else if self.b.node == node {
            Some(self.b)
        } else {
            None
        }
    }

    pub fn weight_from(&self, node: NodeId) -> f64 {
        if self.a.node == node {
            self.weight_ab
        } else {
            self.weight_ba
        }
    }

    /// Serialization time of `bytes` on this link.
    pub fn transmit_time(&self, bytes: u32) -> f64 {
        f64::from(bytes) * 8.0 / self.capacity_bps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostInfo {
    pub name: String,
    pub mac: MacAddress,
    pub ip: Ipv4Address,
    pub power: Power,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("duplicate dpid {0}")]
    DuplicateDpid(Dpid),
    #[error("duplicate host name `{0}`")]
    DuplicateHost(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("port {port} on {node} already has a link")]
    PortInUse { node: NodeId, port: PortNo },
    #[error("link capacity must be positive, got {0}")]
    InvalidCapacity(String),
    #[error("link delay must be non-negative, got {0}")]
    InvalidDelay(String),
    #[error("link endpoints must be distinct nodes")]
    SelfLoop,
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
}

/// A directed view of one usable link, as seen from `from`.
#[derive(Debug, Clone, Copy)]
pub struct DirectedEdge<'a> {
    pub from: NodeId,
    pub to: NodeId,
    pub out_port: PortNo,
    pub link: &'a Link,
}

impl DirectedEdge<'_> {
    pub fn weight(&self) -> f64 {
        self.link.weight_from(self.from)
    }
}

/// Switches, hosts and the links between them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    switches: BTreeMap<Dpid, Power>,
    hosts: Vec<HostInfo>,
    links: Vec<Link>,
    ports: BTreeMap<(NodeId, PortNo), LinkId>,
}

pub const DEFAULT_EDGE_WEIGHT: f64 = 1.0;

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_switch(&mut self, dpid: Dpid) -> Result<NodeId, TopologyError> {
        if self.switches.contains_key(&dpid) {
            return Err(TopologyError::DuplicateDpid(dpid));
        }
        self.switches.insert(dpid, Power::On);
        Ok(NodeId::Switch(dpid))
    }

    pub fn add_host(
        &mut self,
        name: impl Into<String>,
        mac: MacAddress,
        ip: Ipv4Address,
    ) -> Result<HostId, TopologyError> {
        let name = name.into();
        if self.hosts.iter().any(|h| h.name == name) {
            return Err(TopologyError::DuplicateHost(name));
        }
        self.hosts.push(HostInfo { name, mac, ip, power: Power::On });
        Ok(HostId(self.hosts.len() as u32 - 1))
    }

    pub fn connect(
        &mut self,
        a: Endpoint,
        b: Endpoint,
        capacity_bps: f64,
        delay_s: f64,
    ) -> Result<LinkId, TopologyError> {
        if !(capacity_bps > 0.0 && capacity_bps.is_finite()) {
            return Err(TopologyError::InvalidCapacity(capacity_bps.to_string()));
        }
        if !(delay_s >= 0.0 && delay_s.is_finite()) {
            return Err(TopologyError::InvalidDelay(delay_s.to_string()));
        }
        if a.node == b.node {
            return Err(TopologyError::SelfLoop);
        }
        for ep in [a, b] {
            if !self.contains(ep.node) {
                return Err(TopologyError::UnknownNode(ep.node));
            }
            if self.ports.contains_key(&(ep.node, ep.port)) {
                return Err(TopologyError::PortInUse { node: ep.node, port: ep.port });
            }
        }
        let id = self.links.len();
        self.links.push(Link {
            id,
            a,
            b,
            capacity_bps,
            delay_s,
            power: Power::On,
            weight_ab: DEFAULT_EDGE_WEIGHT,
            weight_ba: DEFAULT_EDGE_WEIGHT,
        });
        self.ports.insert((a.node, a.port), id);
        self.ports.insert((b.node, b.port), id);
        Ok(id)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        match node {
            NodeId::Switch(d) => self.switches.contains_key(&d),
            NodeId::Host(h) => (h.0 as usize) < self.hosts.len(),
        }
    }

    pub fn switches(&self) -> impl Iterator<Item = Dpid> + '_ {
        self.switches.keys().copied()
    }

    pub fn hosts(&self) -> impl Iterator<Item = (HostId, &HostInfo)> {
        self.hosts.iter().enumerate().map(|(i, h)| (HostId(i as u32), h))
    }

    pub fn host(&self, id: HostId) -> Option<&HostInfo> {
        self.hosts.get(id.0 as usize)
    }

    pub fn host_by_name(&self, name: &str) -> Option<HostId> {
        self.hosts().find(|(_, h)| h.name == name).map(|(id, _)| id)
    }

    pub fn host_by_mac(&self, mac: MacAddress) -> Option<HostId> {
        self.hosts().find(|(_, h)| h.mac == mac).map(|(id, _)| id)
    }

    pub fn host_by_ip(&self, ip: Ipv4Address) -> Option<HostId> {
        self.hosts().find(|(_, h)| h.ip == ip).map(|(id, _)| id)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.links.get(id)
    }

    pub fn link_at(&self, node: NodeId, port: PortNo) -> Option<&Link> {
        self.ports.get(&(node, port)).map(|&id| &self.links[id])
    }

    /// Ports of `node` that have a link attached, ascending.
    pub fn ports_of(&self, node: NodeId) -> Vec<PortNo> {
        self.ports
            .range((node, 0)..=(node, PortNo::MAX))
            .map(|((_, p), _)| *p)
            .collect()
    }

    /// The switch-side attachment point of a host (first link found).
    pub fn host_attachment(&self, host: HostId) -> Option<Endpoint> {
        let node = NodeId::Host(host);
        self.ports
            .range((node, 0)..=(node, PortNo::MAX))
            .next()
            .and_then(|(_, &l)| self.links[l].far_end(node))
    }

    pub fn node_power(&self, node: NodeId) -> Power {
        match node {
            NodeId::Switch(d) => self.switches.get(&d).copied().unwrap_or(Power::Off),
            NodeId::Host(h) => self.host(h).map(|h| h.power).unwrap_or(Power::Off),
        }
    }

    pub fn set_node_power(&mut self, node: NodeId, power: Power) -> Result<(), TopologyError> {
        match node {
            NodeId::Switch(d) => match self.switches.get_mut(&d) {
                Some(p) => *p = power,
                None => return Err(TopologyError::UnknownNode(node)),
            },
            NodeId::Host(h) => match self.hosts.get_mut(h.0 as usize) {
                Some(info) => info.power = power,
                None => return Err(TopologyError::UnknownNode(node)),
            },
        }
        Ok(())
    }

    pub fn set_link_power(&mut self, id: LinkId, power: Power) -> Result<(), TopologyError> {
        let link = self.links.get_mut(id).ok_or(TopologyError::UnknownLink(id))?;
        link.power = power;
        Ok(())
    }

    /// A link carries traffic only when it and both of its endpoints are on.
    pub fn link_usable(&self, link: &Link) -> bool {
        link.power.is_on()
            && self.node_power(link.a.node).is_on()
            && self.node_power(link.b.node).is_on()
    }

    /// Sets the cost of the directed edge leaving `node` through `port`.
    pub fn set_edge_weight(&mut self, node: NodeId, port: PortNo, weight: f64) -> bool {
        let Some(&id) = self.ports.get(&(node, port)) else {
            return false;
        };
        let link = &mut self.links[id];
        if link.a.node == node && link.a.port == port {
            link.weight_ab = weight;
        } else {
            link.weight_ba = weight;
        }
        true
    }

    /// Usable directed edges leaving `node`, one per neighbor (lowest port wins
    /// among parallel links), ordered by neighbor id.
    pub fn edges_from(&self, node: NodeId) -> Vec<DirectedEdge<'_>> {
        let mut by_neighbor: BTreeMap<NodeId, DirectedEdge<'_>> = BTreeMap::new();
        for ((_, port), &lid) in self.ports.range((node, 0)..=(node, PortNo::MAX)) {
            let link = &self.links[lid];
            if !self.link_usable(link) {
                continue;
            }
            let Some(far) = link.far_end(node) else { continue };
            by_neighbor.entry(far.node).or_insert(DirectedEdge {
                from: node,
                to: far.node,
                out_port: *port,
                link,
            });
        }
        by_neighbor.into_values().collect()
    }

    pub fn edge_between(&self, from: NodeId, to: NodeId) -> Option<DirectedEdge<'_>> {
        self.edges_from(from).into_iter().find(|e| e.to == to)
    }
}
