//! Network vocabulary: addresses, header stacks, the topology graph and
//! weighted path computation.

mod addr;
mod frame;
mod paths;
mod topology;

pub use addr::{mac_as_integer, AddrParseError, Ipv4Address, MacAddress};
pub use frame::{
    ArpHeader, ArpOpcode, EthHeader, EtherType, FlowKey, Frame, IcmpHeader, IcmpKind, IpProto,
    Ipv4Header, L4Ports, Payload, Transport, MIN_FRAME_LEN,
};
pub use paths::{all_simple_paths, path_cost, path_cost_by, shortest_path, shortest_path_by, PathError};
pub use topology::{
    DirectedEdge, Dpid, Endpoint, HostId, HostInfo, Link, LinkId, NodeId, PortNo, Power, Topology,
    TopologyError, DEFAULT_EDGE_WEIGHT,
};
