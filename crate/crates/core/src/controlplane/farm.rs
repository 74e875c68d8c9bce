//! Server farm behind a virtual IP, answered by proxy-ARP.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{mac_as_integer, Dpid, Frame, Ipv4Address, MacAddress, PortNo};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FarmError {
    #[error("no active servers in the farm")]
    EmptyFarm,
    #[error("destination {0} is not a farm server")]
    UnknownServerMac(MacAddress),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FarmServer {
    pub mac: MacAddress,
    pub ip: Ipv4Address,
    /// Last switch before the server.
    pub dpid: Dpid,
    pub out_port: PortNo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentState {
    On,
    Off,
    Activating,
}

#[derive(Debug, Clone)]
pub struct ServerFarm {
    pub virtual_ip: Ipv4Address,
    pub servers: Vec<FarmServer>,
    pub n_active: usize,
    pub initial_active: usize,
    /// Grow `n_active` once distinct clients exceed this many per server.
    pub flows_per_server: Option<usize>,
    /// Seconds without farm traffic before the segment is switched off.
    pub idle_timer: Option<f64>,
    pub segment: SegmentState,
    pub last_activity: f64,
    pub active_clients: BTreeSet<Ipv4Address>,
}

impl ServerFarm {
    pub fn new(virtual_ip: Ipv4Address, servers: Vec<FarmServer>, initial_active: usize) -> Self {
        let n = initial_active.min(servers.len());
        ServerFarm {
            virtual_ip,
            servers,
            n_active: n,
            initial_active: n,
            flows_per_server: None,
            idle_timer: None,
            segment: SegmentState::On,
            last_activity: 0.0,
            active_clients: BTreeSet::new(),
        }
    }

    /// Server index for a requester: its MAC as an integer modulo the number
    /// of active servers.
    pub fn select_server(&self, requester_mac: MacAddress) -> Result<usize, FarmError> {
        if self.n_active == 0 {
            return Err(FarmError::EmptyFarm);
        }
        Ok((mac_as_integer(requester_mac) % self.n_active as u64) as usize)
    }

    pub fn server_by_mac(&self, mac: MacAddress) -> Option<usize> {
        self.servers.iter().position(|s| s.mac == mac)
    }

    pub fn is_server_mac(&self, mac: MacAddress) -> bool {
        self.server_by_mac(mac).is_some()
    }

    /// Records a client asking for the service and grows the active set if
    /// demand exceeds the per-server threshold.
    pub fn note_client(&mut self, client: Ipv4Address, now: f64) {
        self.last_activity = now;
        self.active_clients.insert(client);
        if let Some(per) = self.flows_per_server {
            while self.n_active < self.servers.len() && self.active_clients.len() > per * self.n_active {
                self.n_active += 1;
            }
        }
    }

    pub fn idle_expired(&self, now: f64) -> bool {
        match self.idle_timer {
            Some(t) => self.segment == SegmentState::On && now - self.last_activity >= t,
            None => false,
        }
    }

    pub fn reset_demand(&mut self) {
        self.n_active = self.initial_active;
        self.active_clients.clear();
    }
}

/// Proxy-ARP answer for the virtual IP. The boolean is true when the chosen
/// server's segment must be powered on before the reply may be released.
pub fn generate_arp_reply(
    farm: &ServerFarm,
    requester_ip: Ipv4Address,
    requester_mac: MacAddress,
) -> Result<(Frame, bool), FarmError> {
    let i = farm.select_server(requester_mac)?;
    let server = &farm.servers[i];
    let reply = Frame::arp_reply(server.mac, farm.virtual_ip, requester_mac, requester_ip);
    Ok((reply, farm.segment != SegmentState::On))
}
