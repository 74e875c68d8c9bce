//! Scenario files: JSON description of a topology, controllers, traffic and
//! failures, plus validation and construction of the simulated world.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controlplane::{Arbitration, ControllerConfig, FarmServer, SegmentState, ServerFarm, DEFAULT_ALFA};
use crate::dataplane::FailMode;
use crate::manager::ConnMode;
use crate::net::{Dpid, Endpoint, HostId, Ipv4Address, LinkId, MacAddress, NodeId, PortNo, Power, Topology};

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Simulated seconds.
    pub duration: f64,
    /// Seconds for a powered-off device to come up.
    #[serde(default = "Scenario::default_activation_latency")]
    pub activation_latency: f64,
    /// One-way controller-switch and controller-manager latency, seconds.
    #[serde(default = "Scenario::default_control_latency")]
    pub control_latency: f64,
    #[serde(default = "Scenario::default_ping_timeout")]
    pub ping_timeout: f64,
    pub topology: TopologySpec,
    #[serde(default)]
    pub farm: Option<FarmSpec>,
    #[serde(default)]
    pub controllers: ControllersSpec,
    #[serde(default)]
    pub manager: ManagerSpec,
    #[serde(default)]
    pub byte_model: ByteModel,
    #[serde(default)]
    pub demands: Vec<Demand>,
    #[serde(default)]
    pub failures: Vec<FailureSpec>,
}

impl Scenario {
    fn default_activation_latency() -> f64 {
        0.5
    }
    fn default_control_latency() -> f64 {
        0.001
    }
    fn default_ping_timeout() -> f64 {
        10.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub switches: Vec<SwitchSpec>,
    #[serde(default)]
    pub hosts: Vec<HostSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSpec {
    pub dpid: Dpid,
    #[serde(default)]
    pub fail_mode: FailMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostSpec {
    pub name: String,
    pub mac: MacAddress,
    pub ip: Ipv4Address,
}

/// Endpoints are written `s<dpid>:<port>` for switches and `<host name>`
/// for hosts (hosts have a single port 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub capacity_mbps: f64,
    #[serde(default)]
    pub delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmSpec {
    pub virtual_ip: Ipv4Address,
    /// Host names of the servers, in farm order.
    pub servers: Vec<String>,
    #[serde(default)]
    pub initial_active: Option<usize>,
    #[serde(default)]
    pub flows_per_server: Option<usize>,
    #[serde(default)]
    pub idle_timer: Option<f64>,
    /// Switches that are powered together with the servers. Empty means the
    /// farm is always on.
    #[serde(default)]
    pub segment_switches: Vec<Dpid>,
    #[serde(default = "default_true")]
    pub initially_on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllersSpec {
    pub count: usize,
    pub equal_mode: bool,
    pub arbitration: Arbitration,
    /// Poll and heartbeat period, seconds.
    pub period: f64,
    pub alfa: f64,
    pub default_bw1: Option<f64>,
    pub k: f64,
    pub invert_dijkstra_weights: bool,
    pub select_groups: bool,
}

impl Default for ControllersSpec {
    fn default() -> Self {
        ControllersSpec {
            count: 1,
            equal_mode: false,
            arbitration: Arbitration::ByDpid,
            period: 1.0,
            alfa: DEFAULT_ALFA,
            default_bw1: None,
            k: 1.0,
            invert_dijkstra_weights: false,
            select_groups: true,
        }
    }
}

impl ControllersSpec {
    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            arbitration: self.arbitration,
            period: self.period,
            alfa: self.alfa,
            default_bw1: self.default_bw1,
            k: self.k,
            invert_dijkstra_weights: self.invert_dijkstra_weights,
            select_groups: self.select_groups,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManagerSpec {
    pub conn_mode: ConnMode,
    /// Bytes charged for opening one connection.
    pub setup_bytes: u64,
    /// Bytes charged for closing one connection.
    pub teardown_bytes: u64,
    /// Serial mode forgets controllers not heard from for this many periods.
    pub stale_after_periods: f64,
}

impl Default for ManagerSpec {
    fn default() -> Self {
        ManagerSpec { conn_mode: ConnMode::Concurrent, setup_bytes: 3 * 60, teardown_bytes: 4 * 60, stale_after_periods: 2.5 }
    }
}

/// Sizes used when charging control traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ByteModel {
    pub header: u64,
    pub group_bucket: u64,
    pub port_stats_entry: u64,
    pub flow_stats_entry: u64,
}

impl Default for ByteModel {
    fn default() -> Self {
        ByteModel { header: 64, group_bucket: 16, port_stats_entry: 112, flow_stats_entry: 96 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Demand {
    Ping {
        #[serde(default)]
        id: Option<String>,
        src: String,
        dst: Ipv4Address,
        count: u32,
        interval: f64,
        #[serde(default)]
        start: f64,
        #[serde(default = "Demand::default_ping_size")]
        size: u32,
    },
    Tcp {
        #[serde(default)]
        id: Option<String>,
        src: String,
        dst: Ipv4Address,
        dst_port: u16,
        start: f64,
        duration: f64,
    },
    Udp {
        #[serde(default)]
        id: Option<String>,
        src: String,
        dst: Ipv4Address,
        dst_port: u16,
        rate_mbps: f64,
        start: f64,
        duration: f64,
    },
}

impl Demand {
    fn default_ping_size() -> u32 {
        98
    }

    pub fn src(&self) -> &str {
        match self {
            Demand::Ping { src, .. } | Demand::Tcp { src, .. } | Demand::Udp { src, .. } => src,
        }
    }

    pub fn dst(&self) -> Ipv4Address {
        match self {
            Demand::Ping { dst, .. } | Demand::Tcp { dst, .. } | Demand::Udp { dst, .. } => *dst,
        }
    }

    pub fn start(&self) -> f64 {
        match self {
            Demand::Ping { start, .. } | Demand::Tcp { start, .. } | Demand::Udp { start, .. } => *start,
        }
    }

    /// Report key: the explicit id, else `<kind><index>`.
    pub fn label(&self, index: usize) -> String {
        let (id, kind) = match self {
            Demand::Ping { id, .. } => (id, "ping"),
            Demand::Tcp { id, .. } => (id, "tcp"),
            Demand::Udp { id, .. } => (id, "udp"),
        };
        id.clone().unwrap_or_else(|| format!("{kind}{index}"))
    }
}

// `flatten` rules out `deny_unknown_fields` here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSpec {
    pub at: f64,
    #[serde(flatten)]
    pub kind: FailureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureKind {
    KillController { controller: usize },
    KillMaster,
    CutControlChannel { dpid: Dpid },
    /// Every switch loses every controller session.
    CutAllControlChannels,
    /// Index into `topology.links`.
    CutLink { link: usize },
    ReviveController { controller: usize },
    /// Revives whichever controller was killed most recently.
    ReviveKilled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ScenarioInvalid {
    pub errors: Vec<FieldError>,
}

impl fmt::Display for ScenarioInvalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario")?;
        for e in &self.errors {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl ScenarioInvalid {
    fn single(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioInvalid { errors: vec![FieldError { path: path.into(), message: message.into() }] }
    }
}

/// Parses scenario JSON, reporting the path of the first offending field.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioInvalid> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ScenarioInvalid::single(if path == "." { "<root>".to_string() } else { path }, e.inner().to_string())
    })
}

/// Everything the simulator needs, resolved from names to ids.
#[derive(Debug, Clone)]
pub struct World {
    pub topology: Topology,
    pub fail_modes: BTreeMap<Dpid, FailMode>,
    pub host_ids: BTreeMap<String, HostId>,
    /// Scenario link index to topology link id (identical by construction).
    pub links: Vec<LinkId>,
    pub farm: Option<FarmWorld>,
}

#[derive(Debug, Clone)]
pub struct FarmWorld {
    pub farm: ServerFarm,
    pub server_hosts: Vec<HostId>,
    pub segment_switches: Vec<Dpid>,
    /// Links with at least one end inside the segment.
    pub segment_links: Vec<LinkId>,
}

impl FarmWorld {
    pub fn has_segment(&self) -> bool {
        !self.segment_switches.is_empty()
    }
}

fn parse_endpoint(
    text: &str,
    switches: &BTreeSet<Dpid>,
    hosts: &BTreeMap<String, HostId>,
) -> Result<Endpoint, String> {
    if let Some(host) = hosts.get(text) {
        return Ok(Endpoint { node: NodeId::Host(*host), port: 0 });
    }
    let Some(rest) = text.strip_prefix('s') else {
        return Err(format!("unknown node {text:?}"));
    };
    let Some((d, p)) = rest.split_once(':') else {
        return Err(format!("switch endpoint {text:?} must be written s<dpid>:<port>"));
    };
    let dpid: Dpid = d.parse().map_err(|_| format!("bad dpid in {text:?}"))?;
    let port: PortNo = p.parse().map_err(|_| format!("bad port in {text:?}"))?;
    if !switches.contains(&dpid) {
        return Err(format!("unknown switch s{dpid}"));
    }
    Ok(Endpoint { node: NodeId::Switch(dpid), port })
}

impl Scenario {
    /// Checks every cross-reference and numeric range, collecting all problems.
    pub fn validate(&self) -> Result<World, ScenarioInvalid> {
        let mut errors = Vec::new();
        let mut err = |path: String, message: String| errors.push(FieldError { path, message });

        if !(self.duration > 0.0 && self.duration.is_finite()) {
            err("duration".into(), "must be positive".into());
        }
        for (name, v) in [
            ("activation_latency", self.activation_latency),
            ("control_latency", self.control_latency),
            ("ping_timeout", self.ping_timeout),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                err(name.into(), "must be non-negative".into());
            }
        }
        let c = &self.controllers;
        if !(0.0..=1.0).contains(&c.alfa) {
            err("controllers.alfa".into(), "must be within [0, 1]".into());
        }
        if !(c.period > 0.0 && c.period.is_finite()) {
            err("controllers.period".into(), "must be positive".into());
        }
        if !(c.k > 0.0) {
            err("controllers.k".into(), "must be positive".into());
        }
        if c.default_bw1.is_some_and(|b| !(b >= 0.0)) {
            err("controllers.default_bw1".into(), "must be non-negative".into());
        }

        let mut topo = Topology::new();
        let mut fail_modes = BTreeMap::new();
        for (i, s) in self.topology.switches.iter().enumerate() {
            if topo.add_switch(s.dpid).is_err() {
                err(format!("topology.switches[{i}].dpid"), format!("duplicate dpid {}", s.dpid));
            }
            fail_modes.insert(s.dpid, s.fail_mode);
        }
        let mut host_ids = BTreeMap::new();
        let mut macs = BTreeSet::new();
        let mut ips = BTreeSet::new();
        for (i, h) in self.topology.hosts.iter().enumerate() {
            if !macs.insert(h.mac) {
                err(format!("topology.hosts[{i}].mac"), format!("duplicate MAC {}", h.mac));
            }
            if !ips.insert(h.ip) {
                err(format!("topology.hosts[{i}].ip"), format!("duplicate IP {}", h.ip));
            }
            match topo.add_host(h.name.clone(), h.mac, h.ip) {
                Ok(id) => {
                    host_ids.insert(h.name.clone(), id);
                }
                Err(e) => err(format!("topology.hosts[{i}].name"), e.to_string()),
            }
        }
        let switch_set: BTreeSet<Dpid> = self.topology.switches.iter().map(|s| s.dpid).collect();
        let mut links = Vec::new();
        for (i, l) in self.topology.links.iter().enumerate() {
            let a = parse_endpoint(&l.a, &switch_set, &host_ids);
            let b = parse_endpoint(&l.b, &switch_set, &host_ids);
            if let Err(m) = &a {
                err(format!("topology.links[{i}].a"), m.clone());
            }
            if let Err(m) = &b {
                err(format!("topology.links[{i}].b"), m.clone());
            }
            if let (Ok(a), Ok(b)) = (a, b) {
                match topo.connect(a, b, l.capacity_mbps * 1e6, l.delay_ms / 1e3) {
                    Ok(id) => links.push(id),
                    Err(e) => err(format!("topology.links[{i}]"), e.to_string()),
                }
            }
        }
        for (name, id) in &host_ids {
            if topo.host_attachment(*id).is_none_or(|e| !e.node.is_switch()) {
                err("topology.hosts".into(), format!("host {name:?} is not attached to a switch"));
            }
        }

        let farm = self.farm.as_ref().and_then(|f| {
            let mut servers = Vec::new();
            let mut server_hosts = Vec::new();
            for (i, name) in f.servers.iter().enumerate() {
                let Some(&id) = host_ids.get(name) else {
                    err(format!("farm.servers[{i}]"), format!("unknown host {name:?}"));
                    continue;
                };
                let info = topo.host(id).expect("registered");
                let Some(att) = topo.host_attachment(id) else { continue };
                let Some(dpid) = att.node.dpid() else { continue };
                servers.push(FarmServer { mac: info.mac, ip: info.ip, dpid, out_port: att.port });
                server_hosts.push(id);
            }
            if f.servers.is_empty() {
                err("farm.servers".into(), "at least one server is required".into());
            }
            if ips.contains(&f.virtual_ip) {
                err("farm.virtual_ip".into(), "must not belong to a host".into());
            }
            for (i, d) in f.segment_switches.iter().enumerate() {
                if !switch_set.contains(d) {
                    err(format!("farm.segment_switches[{i}]"), format!("unknown switch s{d}"));
                }
            }
            if f.idle_timer.is_some_and(|t| !(t > 0.0)) {
                err("farm.idle_timer".into(), "must be positive".into());
            }
            if !f.initially_on && f.segment_switches.is_empty() {
                err("farm.initially_on".into(), "a farm without segment switches is always on".into());
            }
            let initial = f.initial_active.unwrap_or(f.servers.len());
            if initial == 0 || initial > f.servers.len() {
                err("farm.initial_active".into(), format!("must be within 1..={}", f.servers.len()));
            }
            if servers.len() != f.servers.len() {
                return None;
            }
            let mut farm = ServerFarm::new(f.virtual_ip, servers, initial);
            farm.flows_per_server = f.flows_per_server;
            farm.idle_timer = f.idle_timer;
            farm.segment = if f.initially_on { SegmentState::On } else { SegmentState::Off };
            let seg_nodes: BTreeSet<NodeId> = f
                .segment_switches
                .iter()
                .map(|&d| NodeId::Switch(d))
                .chain(server_hosts.iter().map(|&h| NodeId::Host(h)))
                .collect();
            let segment_links = if f.segment_switches.is_empty() {
                vec![]
            } else {
                topo.links()
                    .iter()
                    .filter(|l| seg_nodes.contains(&l.a.node) || seg_nodes.contains(&l.b.node))
                    .map(|l| l.id)
                    .collect()
            };
            Some(FarmWorld { farm, server_hosts, segment_switches: f.segment_switches.clone(), segment_links })
        });

        if c.count == 0 {
            err("controllers.count".into(), "at least one controller is required".into());
        }
        if !(self.manager.stale_after_periods > 0.0) {
            err("manager.stale_after_periods".into(), "must be positive".into());
        }

        for (i, d) in self.demands.iter().enumerate() {
            if !host_ids.contains_key(d.src()) {
                err(format!("demands[{i}].src"), format!("unknown host {:?}", d.src()));
            }
            match d {
                Demand::Ping { count, interval, start, size, .. } => {
                    if *count == 0 {
                        err(format!("demands[{i}].count"), "must be at least 1".into());
                    }
                    if !(*interval > 0.0) {
                        err(format!("demands[{i}].interval"), "must be positive".into());
                    }
                    if !(*start >= 0.0) {
                        err(format!("demands[{i}].start"), "must be non-negative".into());
                    }
                    if *size < crate::net::MIN_FRAME_LEN {
                        err(format!("demands[{i}].size"), format!("must be at least {}", crate::net::MIN_FRAME_LEN));
                    }
                }
                Demand::Tcp { start, duration, .. } => {
                    if !(*start >= 0.0) {
                        err(format!("demands[{i}].start"), "must be non-negative".into());
                    }
                    if !(*duration > 0.0) {
                        err(format!("demands[{i}].duration"), "must be positive".into());
                    }
                }
                Demand::Udp { start, duration, rate_mbps, .. } => {
                    if !(*start >= 0.0) {
                        err(format!("demands[{i}].start"), "must be non-negative".into());
                    }
                    if !(*duration > 0.0) {
                        err(format!("demands[{i}].duration"), "must be positive".into());
                    }
                    if !(*rate_mbps > 0.0) {
                        err(format!("demands[{i}].rate_mbps"), "must be positive".into());
                    }
                }
            }
        }
        let mut labels = BTreeSet::new();
        for (i, d) in self.demands.iter().enumerate() {
            if !labels.insert(d.label(i)) {
                err(format!("demands[{i}].id"), format!("duplicate id {:?}", d.label(i)));
            }
        }

        for (i, f) in self.failures.iter().enumerate() {
            if !(f.at >= 0.0) {
                err(format!("failures[{i}].at"), "must be non-negative".into());
            }
            match &f.kind {
                FailureKind::KillController { controller } | FailureKind::ReviveController { controller } => {
                    if *controller >= c.count {
                        err(format!("failures[{i}].controller"), format!("no controller {controller}"));
                    }
                }
                FailureKind::CutControlChannel { dpid } => {
                    if !switch_set.contains(dpid) {
                        err(format!("failures[{i}].dpid"), format!("unknown switch s{dpid}"));
                    }
                }
                FailureKind::CutLink { link } => {
                    if *link >= self.topology.links.len() {
                        err(format!("failures[{i}].link"), format!("no link {link}"));
                    }
                }
                FailureKind::KillMaster | FailureKind::CutAllControlChannels | FailureKind::ReviveKilled => {}
            }
        }

        if errors.is_empty() {
            // Segment devices start in the farm's initial state.
            if let Some(fw) = &farm {
                if fw.has_segment() && !self.farm.as_ref().expect("present").initially_on {
                    for &d in &fw.segment_switches {
                        let _ = topo.set_node_power(NodeId::Switch(d), Power::Off);
                    }
                    for &h in &fw.server_hosts {
                        let _ = topo.set_node_power(NodeId::Host(h), Power::Off);
                    }
                    for &l in &fw.segment_links {
                        let _ = topo.set_link_power(l, Power::Off);
                    }
                }
            }
            Ok(World { topology: topo, fail_modes, host_ids, links, farm })
        } else {
            Err(ScenarioInvalid { errors })
        }
    }
}
