use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Dpid, Frame, MacAddress, PortNo, Power};

use super::flow::{ControllerId, FlowAction, FlowMatch, FlowModOp, FlowTable};
use super::group::{select_bucket, GroupId, SelectGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailMode {
    Secure,
    #[default]
    Standalone,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwitchError {
    #[error("switch {0} is powered off")]
    PoweredOff(Dpid),
    #[error("switch {dpid} has no port {port}")]
    UnknownPort { dpid: Dpid, port: PortNo },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PortCounters {
    pub tx_bytes: u64,
    pub rx_bytes: u64,
    pub tx_packets: u64,
    pub rx_packets: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PortStats {
    pub port: PortNo,
    pub counters: PortCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowStats {
    pub matcher: FlowMatch,
    pub priority: u16,
    pub packet_count: u64,
    pub byte_count: u64,
    pub installed_by: ControllerId,
}

/// Which of the four mutually exclusive paths a frame took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameOutcome {
    RuleApplied { priority: u16 },
    PacketIn,
    Standalone,
    SecureDrop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SwitchOutput {
    Forward { port: PortNo, frame: Frame },
    PacketIn { controllers: Vec<ControllerId>, in_port: PortNo, frame: Frame },
}

/// Result of [`SwitchState::trace`].
#[derive(Debug, Clone, PartialEq)]
pub enum TraceStep {
    Forward(Vec<(PortNo, Frame)>),
    Dropped,
    /// A real frame would be sent to the controllers.
    NeedsController,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub outcome: FrameOutcome,
    pub outputs: Vec<SwitchOutput>,
}

impl FrameResult {
    pub fn forwarded_ports(&self) -> Vec<PortNo> {
        self.outputs
            .iter()
            .filter_map(|o| match o {
                SwitchOutput::Forward { port, .. } => Some(*port),
                _ => None,
            })
            .collect()
    }
}

/// One simulated OpenFlow-style switch.
#[derive(Debug, Clone)]
pub struct SwitchState {
    pub dpid: Dpid,
    pub fail_mode: FailMode,
    connected: BTreeSet<ControllerId>,
    flow_table: FlowTable,
    groups: BTreeMap<GroupId, SelectGroup>,
    l2_table: BTreeMap<MacAddress, PortNo>,
    port_stats: BTreeMap<PortNo, PortCounters>,
    power: Power,
}

const MAX_GROUP_DEPTH: usize = 4;

impl SwitchState {
    pub fn new(dpid: Dpid, fail_mode: FailMode, ports: impl IntoIterator<Item = PortNo>) -> Self {
        SwitchState {
            dpid,
            fail_mode,
            connected: BTreeSet::new(),
            flow_table: FlowTable::default(),
            groups: BTreeMap::new(),
            l2_table: BTreeMap::new(),
            port_stats: ports.into_iter().map(|p| (p, PortCounters::default())).collect(),
            power: Power::On,
        }
    }

    pub fn power(&self) -> Power {
        self.power
    }

    /// Powering off loses all volatile state; powering on starts from zeroed counters.
    pub fn set_power(&mut self, power: Power) {
        if power == self.power {
            return;
        }
        self.power = power;
        self.flow_table = FlowTable::default();
        self.groups.clear();
        self.l2_table.clear();
        self.connected.clear();
        for c in self.port_stats.values_mut() {
            *c = PortCounters::default();
        }
    }

    pub fn ports(&self) -> impl Iterator<Item = PortNo> + '_ {
        self.port_stats.keys().copied()
    }

    pub fn connected_controllers(&self) -> &BTreeSet<ControllerId> {
        &self.connected
    }

    pub fn connect_controller(&mut self, c: ControllerId) {
        if self.power.is_on() {
            self.connected.insert(c);
        }
    }

    pub fn disconnect_controller(&mut self, c: ControllerId) {
        self.connected.remove(&c);
    }

    pub fn disconnect_all(&mut self) {
        self.connected.clear();
    }

    pub fn flow_table(&self) -> &FlowTable {
        &self.flow_table
    }

    pub fn group(&self, id: GroupId) -> Option<&SelectGroup> {
        self.groups.get(&id)
    }

    pub fn l2_table(&self) -> &BTreeMap<MacAddress, PortNo> {
        &self.l2_table
    }

    fn ensure_on(&self) -> Result<(), SwitchError> {
        if self.power.is_on() {
            Ok(())
        } else {
            Err(SwitchError::PoweredOff(self.dpid))
        }
    }

    /// Runs one received frame through the switch.
    pub fn process_frame(&mut self, in_port: PortNo, frame: Frame) -> Result<FrameResult, SwitchError> {
        self.ensure_on()?;
        let rx = self
            .port_stats
            .get_mut(&in_port)
            .ok_or(SwitchError::UnknownPort { dpid: self.dpid, port: in_port })?;
        rx.rx_bytes += u64::from(frame.len);
        rx.rx_packets += 1;

        if self.connected.is_empty() && self.fail_mode == FailMode::Secure {
            return Ok(FrameResult { outcome: FrameOutcome::SecureDrop, outputs: vec![] });
        }

        let hit = self
            .flow_table
            .lookup(in_port, &frame)
            .filter(|&idx| !self.flow_table.get(idx).unwrap().sends_to_controller());
        if let Some(idx) = hit {
            self.flow_table.count_hit(idx, u64::from(frame.len));
            let rule = self.flow_table.get(idx).unwrap();
            let priority = rule.priority;
            let actions = rule.actions.clone();
            let outputs = self.run_actions(in_port, frame, &actions, 0);
            return Ok(FrameResult {
                outcome: FrameOutcome::RuleApplied { priority },
                outputs: self.emit(outputs),
            });
        }

        if !self.connected.is_empty() {
            return Ok(FrameResult {
                outcome: FrameOutcome::PacketIn,
                outputs: vec![SwitchOutput::PacketIn {
                    controllers: self.connected.iter().copied().collect(),
                    in_port,
                    frame,
                }],
            });
        }

        let outputs = self.l2_learn_and_forward(in_port, frame);
        Ok(FrameResult { outcome: FrameOutcome::Standalone, outputs: self.emit(outputs) })
    }

    /// MAC-learning fallback used by a disconnected standalone switch.
    pub fn l2_learn_and_forward(&mut self, in_port: PortNo, frame: Frame) -> Vec<(PortNo, Frame)> {
        if !frame.eth.src.is_broadcast() {
            self.l2_table.insert(frame.eth.src, in_port);
        }
        match self.l2_table.get(&frame.eth.dst) {
            Some(&port) if !frame.eth.dst.is_broadcast() => {
                if port == in_port {
                    vec![]
                } else {
                    vec![(port, frame)]
                }
            }
            _ => self.flood(in_port, frame),
        }
    }

    /// Executes a controller-supplied action list on `frame` (Packet-Out).
    pub fn packet_out(
        &mut self,
        in_port: Option<PortNo>,
        frame: Frame,
        actions: &[FlowAction],
    ) -> Result<Vec<SwitchOutput>, SwitchError> {
        self.ensure_on()?;
        let outputs = self.run_actions(in_port.unwrap_or(PortNo::MAX), frame, actions, 0);
        Ok(self.emit(outputs))
    }

    pub fn apply_flow_mod(&mut self, op: FlowModOp) -> Result<(), SwitchError> {
        self.ensure_on()?;
        self.flow_table.apply(op);
        Ok(())
    }

    /// Installs or replaces a group. Returns true if the bucket weights or
    /// actions changed (flows may remap).
    pub fn apply_group_mod(&mut self, group: SelectGroup) -> Result<bool, SwitchError> {
        self.ensure_on()?;
        let changed = self.groups.get(&group.group_id) != Some(&group);
        self.groups.insert(group.group_id, group);
        Ok(changed)
    }

    pub fn read_port_stats(&self) -> Result<Vec<PortStats>, SwitchError> {
        self.ensure_on()?;
        Ok(self
            .port_stats
            .iter()
            .map(|(&port, &counters)| PortStats { port, counters })
            .collect())
    }

    pub fn read_flow_stats(&self) -> Result<Vec<FlowStats>, SwitchError> {
        self.ensure_on()?;
        Ok(self
            .flow_table
            .rules()
            .iter()
            .map(|r| FlowStats {
                matcher: r.matcher,
                priority: r.priority,
                packet_count: r.packet_count,
                byte_count: r.byte_count,
                installed_by: r.installed_by,
            })
            .collect())
    }

    /// Adds bulk (fluid) traffic to port counters without per-packet processing.
    pub fn account_bulk(&mut self, in_port: Option<PortNo>, out_port: Option<PortNo>, bytes: u64) {
        if !self.power.is_on() {
            return;
        }
        if let Some(c) = in_port.and_then(|p| self.port_stats.get_mut(&p)) {
            c.rx_bytes += bytes;
        }
        if let Some(c) = out_port.and_then(|p| self.port_stats.get_mut(&p)) {
            c.tx_bytes += bytes;
        }
    }

    /// Side-effect-free walk: where would this frame go right now?
    pub fn trace(&self, in_port: PortNo, frame: Frame) -> TraceStep {
        if !self.power.is_on() {
            return TraceStep::Dropped;
        }
        let disconnected = self.connected.is_empty();
        if disconnected && self.fail_mode == FailMode::Secure {
            return TraceStep::Dropped;
        }
        let hit = self
            .flow_table
            .lookup(in_port, &frame)
            .and_then(|idx| self.flow_table.get(idx))
            .filter(|r| !r.sends_to_controller());
        if let Some(rule) = hit {
            return TraceStep::Forward(self.run_actions(in_port, frame, &rule.actions, 0));
        }
        if !disconnected {
            return TraceStep::NeedsController;
        }
        match self.l2_table.get(&frame.eth.dst) {
            Some(&port) if port != in_port => TraceStep::Forward(vec![(port, frame)]),
            Some(_) => TraceStep::Dropped,
            None => TraceStep::Forward(self.flood(in_port, frame)),
        }
    }

    fn flood(&self, in_port: PortNo, frame: Frame) -> Vec<(PortNo, Frame)> {
        self.port_stats
            .keys()
            .filter(|&&p| p != in_port)
            .map(|&p| (p, frame))
            .collect()
    }

    fn run_actions(
        &self,
        in_port: PortNo,
        mut frame: Frame,
        actions: &[FlowAction],
        depth: usize,
    ) -> Vec<(PortNo, Frame)> {
        let mut out = Vec::new();
        for action in actions {
            match *action {
                FlowAction::SetIpv4Dst(ip) => {
                    if let Some(h) = frame.ipv4_mut() {
                        h.dst = ip;
                    }
                }
                FlowAction::SetIpv4Src(ip) => {
                    if let Some(h) = frame.ipv4_mut() {
                        h.src = ip;
                    }
                }
                FlowAction::Output(port) => {
                    if self.port_stats.contains_key(&port) {
                        out.push((port, frame));
                    }
                }
                FlowAction::OutputGroup(gid) => {
                    if depth >= MAX_GROUP_DEPTH {
                        continue;
                    }
                    if let Some(group) = self.groups.get(&gid) {
                        let bucket = &group.buckets[select_bucket(group, &frame)];
                        out.extend(self.run_actions(in_port, frame, &bucket.actions, depth + 1));
                    }
                }
                FlowAction::Flood => out.extend(self.flood(in_port, frame)),
                FlowAction::Drop => break,
                FlowAction::ToController => {}
            }
        }
        out
    }

    fn emit(&mut self, outputs: Vec<(PortNo, Frame)>) -> Vec<SwitchOutput> {
        outputs
            .into_iter()
            .map(|(port, frame)| {
                if let Some(c) = self.port_stats.get_mut(&port) {
                    c.tx_bytes += u64::from(frame.len);
                    c.tx_packets += 1;
                }
                SwitchOutput::Forward { port, frame }
            })
            .collect()
    }
}
