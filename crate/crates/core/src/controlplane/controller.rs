use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataplane::{ControllerId, FlowAction, FlowMatch, FlowModOp, FlowRule, PortStats};
use crate::manager::{parse_reply, Reply, Role};
use crate::net::{
    ArpOpcode, Dpid, EtherType, Frame, IpProto, LinkId, MacAddress, NodeId, Payload, PortNo, Power, Topology,
};

use super::arbitration::Arbitration;
use super::costs::{LinkCostTracker, DEFAULT_ALFA};
use super::farm::{generate_arp_reply, SegmentState, ServerFarm};
use super::messages::{ControllerOutput, ToSwitch};
use super::routing::{plan_paths, PathPlan, PathRequest, RouteError, PRIORITY_NAT, PRIORITY_TABLE_MISS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub arbitration: Arbitration,
    /// Poll and heartbeat period, seconds.
    pub period: f64,
    pub alfa: f64,
    /// Reference usage in bytes per period. `None` derives it per port as
    /// a tenth of what the link can carry in one period.
    pub default_bw1: Option<f64>,
    pub k: f64,
    pub invert_dijkstra_weights: bool,
    /// Balance over all simple paths with Select groups; otherwise route on
    /// the single shortest path.
    pub select_groups: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopVerdict {
    Proceed,
    Suppress,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PacketInResult {
    /// This controller was the one responsible for the event.
    pub processed: bool,
    pub outputs: Vec<ControllerOutput>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoleUpdate {
    pub changed: bool,
    /// The manager asked for a fresh id.
    pub redraw: bool,
    pub outputs: Vec<ControllerOutput>,
}

pub fn table_miss_rule(by: ControllerId) -> FlowRule {
    FlowRule::new(FlowMatch::any(), PRIORITY_TABLE_MISS, vec![FlowAction::ToController], by)
}

/// One controller instance.
///
/// Every controller observes every Packet-In (counter, loop guard, MAC
/// learning, farm bookkeeping) so that state shared by convention stays in
/// step; only the responsible controller emits messages.
#[derive(Debug, Clone)]
pub struct Controller {
    pub id: ControllerId,
    pub cont_id: u32,
    pub config: ControllerConfig,
    mode: Option<Role>,
    mode_prev: Option<Role>,
    num_serv: usize,
    order: usize,
    packet_in_counter: u64,
    processed: u64,
    peers: Vec<ControllerId>,
    learned_macs: BTreeMap<Dpid, BTreeMap<MacAddress, PortNo>>,
    mac_to_port: BTreeMap<Dpid, BTreeMap<MacAddress, PortNo>>,
    topo: Topology,
    costs: LinkCostTracker,
    farm: Option<ServerFarm>,
    switch_owner: BTreeMap<Dpid, usize>,
    /// Packet-Ins waiting for the farm segment to come up.
    parked: Vec<(Dpid, PortNo, Frame)>,
}

impl Controller {
    pub fn new(
        id: ControllerId,
        cont_id: u32,
        topo: Topology,
        farm: Option<ServerFarm>,
        peers: Vec<ControllerId>,
        config: ControllerConfig,
    ) -> Self {
        Controller {
            id,
            cont_id,
            costs: LinkCostTracker::new(config.alfa, config.k),
            config,
            mode: None,
            mode_prev: None,
            num_serv: 1,
            order: 0,
            packet_in_counter: 0,
            processed: 0,
            peers: peers.into_iter().filter(|&p| p != id).collect(),
            learned_macs: BTreeMap::new(),
            mac_to_port: BTreeMap::new(),
            topo,
            farm,
            switch_owner: BTreeMap::new(),
            parked: Vec::new(),
        }
    }

    pub fn mode(&self) -> Option<Role> {
        self.mode
    }

    pub fn mode_prev(&self) -> Option<Role> {
        self.mode_prev
    }

    pub fn num_serv(&self) -> usize {
        self.num_serv
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn packet_in_counter(&self) -> u64 {
        self.packet_in_counter
    }

    pub fn processed_count(&self) -> u64 {
        self.processed
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn costs(&self) -> &LinkCostTracker {
        &self.costs
    }

    pub fn farm(&self) -> Option<&ServerFarm> {
        self.farm.as_ref()
    }

    pub fn mac_to_port(&self, dpid: Dpid) -> Option<&BTreeMap<MacAddress, PortNo>> {
        self.mac_to_port.get(&dpid)
    }

    pub fn set_node_power(&mut self, node: NodeId, power: Power) {
        let _ = self.topo.set_node_power(node, power);
    }

    pub fn set_link_power(&mut self, link: LinkId, power: Power) {
        let _ = self.topo.set_link_power(link, power);
    }

    fn live_switches(&self) -> Vec<Dpid> {
        self.topo
            .switches()
            .filter(|&d| self.topo.node_power(NodeId::Switch(d)).is_on())
            .collect()
    }

    /// Whether this controller acts on a Packet-In from `dpid`. Expects the
    /// counter to already include the event.
    pub fn should_process(&self, dpid: Dpid) -> bool {
        match self.mode {
            Some(Role::Master) => true,
            Some(Role::Equal) => {
                self.config
                    .arbitration
                    .responsible_order(self.num_serv, dpid, self.packet_in_counter)
                    == self.order
            }
            Some(Role::Slave) | None => false,
        }
    }

    /// Broadcast frames re-entering a switch on a port other than the one
    /// their source was first seen on are dropped.
    pub fn loop_guard(&mut self, dpid: Dpid, src: MacAddress, dst: MacAddress, in_port: PortNo) -> LoopVerdict {
        let seen = self.learned_macs.entry(dpid).or_default();
        match seen.get(&src) {
            None => {
                seen.insert(src, in_port);
                LoopVerdict::Proceed
            }
            Some(&p) if p != in_port && dst.is_broadcast() => LoopVerdict::Suppress,
            Some(_) => LoopVerdict::Proceed,
        }
    }

    pub fn handle_packet_in(&mut self, now: f64, dpid: Dpid, in_port: PortNo, frame: Frame) -> PacketInResult {
        self.packet_in_counter += 1;
        let processing = self.should_process(dpid);

        let mut owner_changed = false;
        if self.mode == Some(Role::Equal) {
            let owner = self
                .config
                .arbitration
                .responsible_order(self.num_serv, dpid, self.packet_in_counter);
            owner_changed = self.switch_owner.insert(dpid, owner) != Some(owner);
        }

        let verdict = self.loop_guard(dpid, frame.eth.src, frame.eth.dst, in_port);
        if verdict == LoopVerdict::Proceed && !frame.eth.src.is_broadcast() {
            self.mac_to_port.entry(dpid).or_default().insert(frame.eth.src, in_port);
        }
        self.observe_farm(now, &frame);

        if !processing {
            return PacketInResult { processed: false, outputs: vec![] };
        }
        self.processed += 1;
        let mut outputs = Vec::new();
        if owner_changed {
            outputs.push(ControllerOutput::to(dpid, ToSwitch::RoleSet(Role::Equal)));
        }
        if verdict == LoopVerdict::Suppress {
            return PacketInResult { processed: true, outputs };
        }
        self.update_topology_weights();
        outputs.extend(self.dispatch(dpid, in_port, frame));
        PacketInResult { processed: true, outputs }
    }

    fn observe_farm(&mut self, now: f64, frame: &Frame) {
        let Some(farm) = self.farm.as_mut() else { return };
        match frame.payload {
            Payload::Arp(a) if a.opcode == ArpOpcode::Request && a.dst_ip == farm.virtual_ip => {
                farm.note_client(a.src_ip, now);
            }
            Payload::Ipv4(h) if h.dst == farm.virtual_ip || farm.is_server_mac(frame.eth.dst) => {
                farm.last_activity = now;
            }
            _ => {}
        }
    }

    fn concerns_farm(&self, frame: &Frame) -> bool {
        let Some(farm) = &self.farm else { return false };
        match frame.payload {
            Payload::Arp(a) => a.opcode == ArpOpcode::Request && a.dst_ip == farm.virtual_ip,
            Payload::Ipv4(h) => h.dst == farm.virtual_ip || farm.is_server_mac(frame.eth.dst),
        }
    }

    fn dispatch(&mut self, dpid: Dpid, in_port: PortNo, frame: Frame) -> Vec<ControllerOutput> {
        if self.concerns_farm(&frame) {
            let farm = self.farm.as_mut().expect("checked");
            match farm.segment {
                SegmentState::On => {}
                SegmentState::Off => {
                    farm.segment = SegmentState::Activating;
                    self.parked.push((dpid, in_port, frame));
                    return vec![ControllerOutput::ActivateFarm];
                }
                SegmentState::Activating => {
                    self.parked.push((dpid, in_port, frame));
                    return vec![];
                }
            }
        }
        match frame.payload {
            Payload::Arp(a) => {
                let vip = self.farm.as_ref().map(|f| f.virtual_ip);
                if a.opcode == ArpOpcode::Request && Some(a.dst_ip) == vip {
                    self.proxy_arp(dpid, in_port, &frame)
                } else {
                    self.forward_l2(dpid, in_port, frame)
                }
            }
            Payload::Ipv4(h) => {
                if let IpProto::Other(n) = h.transport.proto() {
                    log::warn!("controller {}: unsupported protocol {n} at s{dpid}", self.id.0);
                    return vec![];
                }
                if self.farm.as_ref().is_some_and(|f| f.virtual_ip == h.dst) {
                    self.handle_virtual_ip_packet(dpid, in_port, frame)
                } else {
                    self.forward_l2(dpid, in_port, frame)
                }
            }
        }
    }

    fn flood(dpid: Dpid, in_port: PortNo, frame: Frame) -> Vec<ControllerOutput> {
        vec![ControllerOutput::to(
            dpid,
            ToSwitch::PacketOut { in_port: Some(in_port), frame, actions: vec![FlowAction::Flood] },
        )]
    }

    fn proxy_arp(&mut self, dpid: Dpid, in_port: PortNo, frame: &Frame) -> Vec<ControllerOutput> {
        let farm = self.farm.as_ref().expect("checked by caller");
        let arp = frame.arp().expect("checked by caller");
        match generate_arp_reply(farm, arp.src_ip, arp.src_mac) {
            Ok((reply, _)) => vec![ControllerOutput::to(
                dpid,
                ToSwitch::PacketOut { in_port: None, frame: reply, actions: vec![FlowAction::Output(in_port)] },
            )],
            Err(e) => {
                log::warn!("controller {}: {e}", self.id.0);
                vec![]
            }
        }
    }

    /// Known destinations get rules along their path(s); unknown ones are flooded.
    fn forward_l2(&mut self, dpid: Dpid, in_port: PortNo, frame: Frame) -> Vec<ControllerOutput> {
        let dst = frame.eth.dst;
        if dst.is_broadcast() {
            return Self::flood(dpid, in_port, frame);
        }
        let farm_dst = self.farm.as_ref().is_some_and(|f| f.is_server_mac(dst));
        let known = farm_dst || self.mac_to_port.values().any(|m| m.contains_key(&dst));
        if !known {
            return Self::flood(dpid, in_port, frame);
        }
        match self.install_paths(dpid, frame.eth.src, dst, farm_dst) {
            Ok(plan) => {
                let mut out = plan_messages(&plan);
                out.push(ControllerOutput::to(
                    dpid,
                    ToSwitch::PacketOut { in_port: Some(in_port), frame, actions: plan.ingress_actions },
                ));
                out
            }
            Err(RouteError::UnknownDestination(_)) => Self::flood(dpid, in_port, frame),
            Err(e) => {
                log::debug!("controller {}: {e}", self.id.0);
                vec![]
            }
        }
    }

    pub fn install_paths(
        &self,
        dpid: Dpid,
        src: MacAddress,
        dst: MacAddress,
        skip_last_switch: bool,
    ) -> Result<PathPlan, RouteError> {
        plan_paths(
            &self.topo,
            &PathRequest {
                dpid,
                src_mac: src,
                dst_mac: dst,
                multipath: self.config.select_groups,
                invert_weights: self.config.invert_dijkstra_weights,
                skip_last_switch,
                installed_by: self.id,
            },
        )
    }

    /// Rewrites farm traffic at the switch in front of the chosen server.
    pub fn handle_virtual_ip_packet(&mut self, dpid: Dpid, in_port: PortNo, frame: Frame) -> Vec<ControllerOutput> {
        let farm = self.farm.as_ref().expect("checked by caller");
        let Some(i) = farm.server_by_mac(frame.eth.dst) else {
            log::warn!("controller {}: {} is not a farm server", self.id.0, frame.eth.dst);
            return vec![];
        };
        let server = farm.servers[i];
        if dpid != server.dpid {
            return self.forward_l2(dpid, in_port, frame);
        }
        let vip = farm.virtual_ip;
        let client = frame.ipv4_header().expect("ipv4").src;
        let fwd_actions = vec![FlowAction::SetIpv4Dst(server.ip), FlowAction::Output(server.out_port)];
        let forward = FlowRule::new(
            FlowMatch {
                in_port: Some(in_port),
                eth_type: Some(EtherType::Ipv4),
                ipv4_src: Some(client),
                ipv4_dst: Some(vip),
                ..FlowMatch::any()
            },
            PRIORITY_NAT,
            fwd_actions.clone(),
            self.id,
        );
        let reverse = FlowRule::new(
            FlowMatch {
                in_port: Some(server.out_port),
                eth_type: Some(EtherType::Ipv4),
                ipv4_src: Some(server.ip),
                ipv4_dst: Some(client),
                ..FlowMatch::any()
            },
            PRIORITY_NAT,
            vec![FlowAction::SetIpv4Src(vip), FlowAction::Output(in_port)],
            self.id,
        );
        vec![
            ControllerOutput::to(dpid, ToSwitch::FlowMod(FlowModOp::Add(forward))),
            ControllerOutput::to(dpid, ToSwitch::FlowMod(FlowModOp::Add(reverse))),
            ControllerOutput::to(
                dpid,
                ToSwitch::PacketOut { in_port: Some(in_port), frame, actions: fwd_actions },
            ),
        ]
    }

    /// Called when the simulator reports a new farm segment state. Parked
    /// frames are handled once the segment is up.
    pub fn on_segment_state(&mut self, now: f64, state: SegmentState) -> Vec<ControllerOutput> {
        let Some(farm) = self.farm.as_mut() else { return vec![] };
        farm.segment = state;
        match state {
            SegmentState::On => {
                farm.last_activity = now;
                let parked = std::mem::take(&mut self.parked);
                self.update_topology_weights();
                parked.into_iter().flat_map(|(d, p, f)| self.dispatch(d, p, f)).collect()
            }
            SegmentState::Off => {
                farm.reset_demand();
                vec![]
            }
            SegmentState::Activating => vec![],
        }
    }

    fn leads_farm(&self) -> bool {
        match self.mode {
            Some(Role::Master) => true,
            Some(Role::Equal) => self.order == 0,
            _ => false,
        }
    }

    /// Periodic stats requests plus the farm idle check.
    pub fn poll_stats(&mut self, now: f64) -> Vec<ControllerOutput> {
        let live = self.live_switches();
        let mut out: Vec<_> = live
            .iter()
            .flat_map(|&d| {
                [
                    ControllerOutput::to(d, ToSwitch::PortStatsRequest),
                    ControllerOutput::to(d, ToSwitch::FlowStatsRequest),
                ]
            })
            .collect();
        let expired = self.farm.as_ref().is_some_and(|f| f.idle_expired(now));
        if expired && self.leads_farm() {
            let farm = self.farm.as_ref().expect("checked");
            out.push(ControllerOutput::DeactivateFarm);
            let mut filters: Vec<FlowMatch> = farm
                .servers
                .iter()
                .map(|s| FlowMatch { eth_dst: Some(s.mac), ..FlowMatch::any() })
                .collect();
            filters.push(FlowMatch { ipv4_dst: Some(farm.virtual_ip), ..FlowMatch::any() });
            for &d in &live {
                for f in &filters {
                    out.push(ControllerOutput::to(d, ToSwitch::FlowMod(FlowModOp::DeleteMatching(*f))));
                }
            }
        }
        out
    }

    /// Reference usage for a port in bytes per period.
    fn reference_bw(&self, dpid: Dpid, port: PortNo) -> f64 {
        if let Some(v) = self.config.default_bw1 {
            return v;
        }
        let cap = self
            .topo
            .link_at(NodeId::Switch(dpid), port)
            .map_or(0.0, |l| l.capacity_bps);
        0.1 * cap / 8.0 * self.config.period
    }

    pub fn on_port_stats(&mut self, now: f64, dpid: Dpid, stats: &[PortStats]) {
        if let Some(farm) = self.farm.as_mut() {
            for s in stats {
                let server_port = farm.servers.iter().any(|srv| srv.dpid == dpid && srv.out_port == s.port);
                let prev = self.costs.tx_prev(dpid, s.port).unwrap_or(0);
                if server_port && s.counters.tx_bytes > prev {
                    farm.last_activity = now;
                }
            }
        }
        let refs: BTreeMap<PortNo, f64> = stats.iter().map(|s| (s.port, self.reference_bw(dpid, s.port))).collect();
        self.costs.update(dpid, stats, |p| refs[&p]);
    }

    /// Copies the current port costs onto the outgoing switch edges.
    pub fn update_topology_weights(&mut self) {
        let switches: Vec<Dpid> = self.topo.switches().collect();
        for d in switches {
            let node = NodeId::Switch(d);
            for port in self.topo.ports_of(node) {
                let c = self.costs.cost(d, port);
                self.topo.set_edge_weight(node, port, c);
            }
        }
    }

    /// Applies a manager reply and returns the switch messages a role change requires.
    pub fn role_monitor(&mut self, reply_line: &str) -> RoleUpdate {
        let assignment = match parse_reply(reply_line) {
            Ok(Reply::Assign(a)) => a,
            Ok(Reply::Redraw) => return RoleUpdate { redraw: true, ..Default::default() },
            Err(e) => {
                log::warn!("controller {}: {e}; keeping role {:?}", self.id.0, self.mode);
                return RoleUpdate::default();
            }
        };
        self.num_serv = assignment.count;
        self.order = assignment.order;
        let mode = if assignment.count == 1 { Role::Master } else { assignment.role };
        if self.mode == Some(mode) {
            return RoleUpdate::default();
        }
        self.mode_prev = self.mode;
        self.mode = Some(mode);
        self.switch_owner.clear();
        RoleUpdate { changed: true, redraw: false, outputs: self.role_change_messages(mode) }
    }

    fn role_change_messages(&self, mode: Role) -> Vec<ControllerOutput> {
        let mut out = Vec::new();
        for d in self.live_switches() {
            out.push(ControllerOutput::to(d, ToSwitch::RoleSet(mode)));
            let controls = match mode {
                Role::Master => true,
                Role::Equal => match self.config.arbitration {
                    Arbitration::ByDpid => (d % self.num_serv as u64) as usize == self.order,
                    Arbitration::ByCounter => true,
                },
                Role::Slave => false,
            };
            if !controls {
                continue;
            }
            if mode == Role::Master {
                for &p in &self.peers {
                    out.push(ControllerOutput::to(d, ToSwitch::FlowMod(FlowModOp::DeleteAllFrom(p))));
                }
            }
            out.push(ControllerOutput::to(d, ToSwitch::FlowMod(FlowModOp::Add(table_miss_rule(self.id)))));
        }
        out
    }
}

/// Group-Mods first, then Flow-Mods, so rules never reference a missing group.
pub fn plan_messages(plan: &PathPlan) -> Vec<ControllerOutput> {
    let mut out: Vec<_> = plan
        .groups
        .iter()
        .map(|(d, g)| ControllerOutput::to(*d, ToSwitch::GroupMod(g.clone())))
        .collect();
    out.extend(
        plan.rules
            .iter()
            .map(|(d, r)| ControllerOutput::to(*d, ToSwitch::FlowMod(FlowModOp::Add(r.clone())))),
    );
    out
}
