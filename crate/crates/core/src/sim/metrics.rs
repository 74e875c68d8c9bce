//! Control-traffic classification and the run report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::controlplane::{FromSwitch, ToSwitch};
use crate::manager::Role;
use crate::scenario::ByteModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ByteClass {
    ManageCluster,
    DataPathControl,
    StatsCollection,
    OtherControlMsg,
}

impl ByteClass {
    pub const ALL: [ByteClass; 4] =
        [ByteClass::ManageCluster, ByteClass::DataPathControl, ByteClass::StatsCollection, ByteClass::OtherControlMsg];
}

/// Anything that crosses a controller channel.
#[derive(Debug, Clone, Copy)]
pub enum ControlMessage<'a> {
    ToSwitch(&'a ToSwitch),
    FromSwitch(&'a FromSwitch),
    /// One line of the manager protocol, including its newline.
    ManagerLine(&'a str),
    /// Connection setup or teardown on the manager channel.
    ManagerHandshake(u64),
}

pub fn account_control_bytes(model: &ByteModel, msg: ControlMessage<'_>) -> (ByteClass, u64) {
    let h = model.header;
    match msg {
        ControlMessage::ManagerLine(line) => (ByteClass::ManageCluster, h + line.len() as u64),
        ControlMessage::ManagerHandshake(bytes) => (ByteClass::ManageCluster, bytes),
        ControlMessage::ToSwitch(m) => match m {
            ToSwitch::PacketOut { frame, .. } => (ByteClass::DataPathControl, h + u64::from(frame.len)),
            ToSwitch::FlowMod(_) => (ByteClass::DataPathControl, h),
            ToSwitch::GroupMod(g) => (ByteClass::DataPathControl, h + model.group_bucket * g.buckets.len() as u64),
            ToSwitch::PortStatsRequest | ToSwitch::FlowStatsRequest => (ByteClass::StatsCollection, h),
            ToSwitch::RoleSet(_) => (ByteClass::OtherControlMsg, h),
        },
        ControlMessage::FromSwitch(m) => match m {
            FromSwitch::PacketIn { frame, .. } => (ByteClass::DataPathControl, h + u64::from(frame.len)),
            FromSwitch::PortStatsReply(v) => (ByteClass::StatsCollection, h + model.port_stats_entry * v.len() as u64),
            FromSwitch::FlowStatsReply(v) => (ByteClass::StatsCollection, h + model.flow_stats_entry * v.len() as u64),
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlBytes {
    pub totals: BTreeMap<ByteClass, u64>,
    pub total: u64,
    /// One row per simulated second, indexed by second.
    pub per_second: Vec<BTreeMap<ByteClass, u64>>,
}

impl ControlBytes {
    pub fn add(&mut self, second: usize, class: ByteClass, bytes: u64) {
        *self.totals.entry(class).or_default() += bytes;
        self.total += bytes;
        if self.per_second.len() <= second {
            self.per_second.resize_with(second + 1, Self::zero_row);
        }
        *self.per_second[second].entry(class).or_default() += bytes;
    }

    pub fn zero_row() -> BTreeMap<ByteClass, u64> {
        ByteClass::ALL.iter().map(|&c| (c, 0)).collect()
    }

    pub fn class(&self, class: ByteClass) -> u64 {
        self.totals.get(&class).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerLoad {
    /// Packet-In copies delivered to this controller.
    pub received: u64,
    /// Packet-Ins this controller acted on.
    pub processed: u64,
    /// Every identifier this controller registered with, in order.
    pub cont_ids: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PacketInSummary {
    /// Keyed by controller label (`c0`, `c1`, ...).
    pub per_controller: BTreeMap<String, ControllerLoad>,
    /// Distinct table-miss events (one per switch-side miss).
    pub events: u64,
    pub processed_by_none: u64,
    pub processed_by_many: u64,
    /// Events processed under dpid arbitration by a controller whose order
    /// differs from `dpid mod count`.
    pub order_mismatches: u64,
    pub packet_outs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub kind: String,
    pub src: String,
    pub dst: String,
    pub start: f64,
    pub duration: f64,
    pub established_at: Option<f64>,
    /// Delivered bits over the flow's scheduled lifetime.
    pub throughput_bps: f64,
    /// Delivered rate per simulated second, aligned with `throughput_series`.
    pub rate_series: Vec<f64>,
    /// Node names along the last route the flow used.
    pub path: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailoverReport {
    pub master_kill_time: Option<f64>,
    pub new_master_time: Option<f64>,
    pub dataplane_loss_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManagerReport {
    pub connection_setups: u64,
    pub heartbeats: u64,
    pub registry_clears: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleEvent {
    pub time: f64,
    pub controller: String,
    pub cont_id: u32,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEvent {
    pub time: f64,
    /// `on` or `off`.
    pub state: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FarmReport {
    pub activations: u64,
    pub deactivations: u64,
    /// `on`, `off` or `activating` at the end of the run.
    pub final_state: String,
    pub n_active: usize,
    pub power_events: Vec<PowerEvent>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataplaneReport {
    pub delivered: u64,
    pub secure_drops: u64,
    pub hop_limit_drops: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Quiescence {
    /// Last time a frame or data-path control message was handled.
    pub last_activity: f64,
    /// Frames and data-path control messages still queued at the end.
    pub pending_at_end: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub duration: f64,
    pub control_bytes: ControlBytes,
    pub packet_in: PacketInSummary,
    /// Keyed by demand label.
    pub flows: BTreeMap<String, FlowReport>,
    /// Aggregate delivered rate of all bulk flows per simulated second.
    pub throughput_series: Vec<f64>,
    /// RTT in ms per try; `null` marks a lost try.
    pub rtt: BTreeMap<String, Vec<Option<f64>>>,
    pub failover: FailoverReport,
    pub manager: ManagerReport,
    pub role_events: Vec<RoleEvent>,
    pub farm: Option<FarmReport>,
    /// Echo replies whose source differs from the address that was pinged.
    pub nat_violations: u64,
    pub dataplane: DataplaneReport,
    pub quiescence: Quiescence,
    pub warnings: Vec<String>,
}
