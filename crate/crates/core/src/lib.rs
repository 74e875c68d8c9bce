//! Deterministic discrete-event simulator of a programmable edge network.
//!
//! The crate is layered bottom-up:
//!
//! * [`net`]: addresses, header stacks, topology and path computation.
//! * [`dataplane`]: the switch engine (flow tables, Select groups, fail modes).
//! * [`controlplane`]: controllers with proxy-ARP farm balancing, link-cost
//!   tracking, multipath installation and cluster-role handling.
//! * [`manager`]: the cluster manager and its line-oriented wire protocol.
//! * [`sim`]: the event loop tying everything together, traffic generation,
//!   max-min fair throughput and byte accounting.
//! * [`scenario`]: the JSON scenario format consumed by the runner.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controlplane;
pub mod dataplane;
pub mod manager;
pub mod net;
pub mod scenario;
pub mod sim;
