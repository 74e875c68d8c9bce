//! Cluster manager: registry, election and the controller wire protocol.

mod state;
mod wire;

pub use state::{ClusterManager, ConnId, ConnMode};
pub use wire::{
    encode_reply, encode_request, parse_reply, parse_request, Assignment, Reply, Role, WireError,
};
