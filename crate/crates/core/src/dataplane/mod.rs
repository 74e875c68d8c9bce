//! Switch engine: flow tables, Select groups, fail modes and counters.

mod flow;
mod group;
mod switch;

pub use flow::{ControllerId, FlowAction, FlowMatch, FlowModOp, FlowRule, FlowTable};
pub use group::{flow_hash, select_bucket, select_by_hash, Bucket, GroupId, SelectGroup};
pub use switch::{
    FailMode, FlowStats, FrameOutcome, FrameResult, PortCounters, PortStats, SwitchError,
    SwitchOutput, SwitchState, TraceStep,
};
