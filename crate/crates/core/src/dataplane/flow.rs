use serde::Serialize;

use crate::net::{EtherType, Frame, IpProto, Ipv4Address, MacAddress, PortNo};

use super::group::GroupId;

/// Stable identity of a controller instance within one run.
///
/// This tags installed rules; it is not the random identifier the controller
/// announces to the cluster manager.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ControllerId(pub u32);

/// Match fields; `None` is a wildcard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FlowMatch {
    pub in_port: Option<PortNo>,
    pub eth_type: Option<EtherType>,
    pub eth_src: Option<MacAddress>,
    pub eth_dst: Option<MacAddress>,
    pub ipv4_src: Option<Ipv4Address>,
    pub ipv4_dst: Option<Ipv4Address>,
    pub proto: Option<IpProto>,
}

fn field_ok<T: PartialEq>(want: Option<T>, have: Option<T>) -> bool {
    match want {
        None => true,
        Some(w) => have == Some(w),
    }
}

impl FlowMatch {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn matches(&self, in_port: PortNo, frame: &Frame) -> bool {
        let ip = frame.ipv4_header();
        field_ok(self.in_port, Some(in_port))
            && field_ok(self.eth_type, Some(frame.ethertype()))
            && field_ok(self.eth_src, Some(frame.eth.src))
            && field_ok(self.eth_dst, Some(frame.eth.dst))
            && field_ok(self.ipv4_src, ip.map(|h| h.src))
            && field_ok(self.ipv4_dst, ip.map(|h| h.dst))
            && field_ok(self.proto, ip.map(|h| h.transport.proto()))
    }

    /// Non-strict delete semantics: true when every field set in `self` is
    /// set to the same value in `rule`.
    pub fn covers(&self, rule: &FlowMatch) -> bool {
        field_ok(self.in_port, rule.in_port)
            && field_ok(self.eth_type, rule.eth_type)
            && field_ok(self.eth_src, rule.eth_src)
            && field_ok(self.eth_dst, rule.eth_dst)
            && field_ok(self.ipv4_src, rule.ipv4_src)
            && field_ok(self.ipv4_dst, rule.ipv4_dst)
            && field_ok(self.proto, rule.proto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowAction {
    SetIpv4Dst(Ipv4Address),
    SetIpv4Src(Ipv4Address),
    Output(PortNo),
    OutputGroup(GroupId),
    /// All ports except the ingress port.
    Flood,
    Drop,
    /// Hand the frame to the connected controllers (table-miss rule).
    ToController,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRule {
    pub matcher: FlowMatch,
    pub priority: u16,
    pub actions: Vec<FlowAction>,
    pub packet_count: u64,
    pub byte_count: u64,
    pub installed_by: ControllerId,
}

impl FlowRule {
    pub fn new(matcher: FlowMatch, priority: u16, actions: Vec<FlowAction>, installed_by: ControllerId) -> Self {
        FlowRule { matcher, priority, actions, packet_count: 0, byte_count: 0, installed_by }
    }

    pub fn sends_to_controller(&self) -> bool {
        self.actions.contains(&FlowAction::ToController)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowModOp {
    Add(FlowRule),
    DeleteAllFrom(ControllerId),
    DeleteAll,
    /// Removes every rule whose match is covered by the filter.
    DeleteMatching(FlowMatch),
}

/// Single flow table ordered by descending priority, then installation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowTable {
    rules: Vec<FlowRule>,
}

impl FlowTable {
    pub fn rules(&self) -> &[FlowRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Adds a rule. A rule with an identical match and priority is replaced in
    /// place, keeping its position and counters.
    pub fn insert(&mut self, rule: FlowRule) {
        if let Some(existing) = self
            .rules
            .iter_mut()
            .find(|r| r.priority == rule.priority && r.matcher == rule.matcher)
        {
            existing.actions = rule.actions;
            existing.installed_by = rule.installed_by;
            return;
        }
        let pos = self.rules.partition_point(|r| r.priority >= rule.priority);
        self.rules.insert(pos, rule);
    }

    pub fn apply(&mut self, op: FlowModOp) {
        match op {
            FlowModOp::Add(rule) => self.insert(rule),
            FlowModOp::DeleteAllFrom(c) => self.rules.retain(|r| r.installed_by != c),
            FlowModOp::DeleteAll => self.rules.clear(),
            FlowModOp::DeleteMatching(filter) => self.rules.retain(|r| !filter.covers(&r.matcher)),
        }
    }

    /// Index of the highest-priority matching rule.
    pub fn lookup(&self, in_port: PortNo, frame: &Frame) -> Option<usize> {
        self.rules.iter().position(|r| r.matcher.matches(in_port, frame))
    }

    pub fn get(&self, idx: usize) -> Option<&FlowRule> {
        self.rules.get(idx)
    }

    pub(crate) fn count_hit(&mut self, idx: usize, bytes: u64) {
        if let Some(r) = self.rules.get_mut(idx) {
            r.packet_count += 1;
            r.byte_count += bytes;
        }
    }
}
