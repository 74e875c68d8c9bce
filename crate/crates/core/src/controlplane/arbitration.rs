use serde::{Deserialize, Serialize};

use crate::net::Dpid;

/// How controllers sharing the EQUAL role split Packet-In work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arbitration {
    /// Each switch belongs to one controller: `dpid mod n == order`.
    #[default]
    ByDpid,
    /// Round robin over the shared Packet-In count: `counter mod n == order`.
    ByCounter,
}

impl Arbitration {
    /// The order of the controller that handles this event. `counter` must
    /// already include the event.
    pub fn responsible_order(self, num_serv: usize, dpid: Dpid, counter: u64) -> usize {
        let n = num_serv.max(1) as u64;
        match self {
            Arbitration::ByDpid => (dpid % n) as usize,
            Arbitration::ByCounter => (counter % n) as usize,
        }
    }
}

pub fn should_process(scheme: Arbitration, num_serv: usize, order: usize, dpid: Dpid, counter: u64) -> bool {
    scheme.responsible_order(num_serv, dpid, counter) == order
}
