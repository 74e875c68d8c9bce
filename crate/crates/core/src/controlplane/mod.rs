//! Controllers: arbitration, proxy-ARP farm balancing, link costs,
//! multipath installation and cluster-role handling.

mod arbitration;
mod controller;
mod costs;
mod farm;
mod messages;
mod routing;

#[cfg(test)]
mod tests;

pub use arbitration::{should_process, Arbitration};
pub use controller::{
    plan_messages, table_miss_rule, Controller, ControllerConfig, LoopVerdict, PacketInResult, RoleUpdate,
};
pub use costs::{ema, link_cost, LinkCostTracker, PortLoad, DEFAULT_ALFA, IDLE_COST};
pub use farm::{generate_arp_reply, FarmError, FarmServer, SegmentState, ServerFarm};
pub use messages::{ControllerOutput, FromSwitch, ToSwitch};
pub use routing::{
    group_id_for, plan_paths, PathPlan, PathRequest, RouteError, PRIORITY_INGRESS, PRIORITY_NAT,
    PRIORITY_TABLE_MISS, PRIORITY_TRANSIT,
};
