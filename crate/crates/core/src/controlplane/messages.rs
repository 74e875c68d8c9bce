//! In-memory messages between controllers and switches.

use crate::dataplane::{FlowAction, FlowModOp, FlowStats, PortStats, SelectGroup};
use crate::manager::Role;
use crate::net::{Dpid, Frame, PortNo};

#[derive(Debug, Clone, PartialEq)]
pub enum ToSwitch {
    /// Emit `frame` after applying `actions`. `in_port` is the port the
    /// frame originally arrived on, if any (used by Flood).
    PacketOut { in_port: Option<PortNo>, frame: Frame, actions: Vec<FlowAction> },
    FlowMod(FlowModOp),
    GroupMod(SelectGroup),
    PortStatsRequest,
    FlowStatsRequest,
    RoleSet(Role),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FromSwitch {
    /// `id` identifies the miss event; every controller copy shares it.
    PacketIn { id: u64, in_port: PortNo, frame: Frame },
    PortStatsReply(Vec<PortStats>),
    FlowStatsReply(Vec<FlowStats>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerOutput {
    Switch { dpid: Dpid, msg: ToSwitch },
    /// Power on the farm segment.
    ActivateFarm,
    /// Power off the farm segment.
    DeactivateFarm,
}

impl ControllerOutput {
    pub fn to(dpid: Dpid, msg: ToSwitch) -> Self {
        ControllerOutput::Switch { dpid, msg }
    }
}
