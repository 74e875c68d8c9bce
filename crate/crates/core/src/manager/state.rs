use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::wire::{parse_request, Assignment, Reply, Role, WireError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnMode {
    /// One connection per heartbeat: accept, reply, close.
    Serial,
    /// One long-lived connection per controller.
    #[default]
    Concurrent,
}

pub type ConnId = u64;

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    conn: ConnId,
    conn_open: bool,
    last_seen: f64,
}

/// Registry and election logic of the cluster manager, independent of
/// transport. Both the simulator and the socket server drive this.
#[derive(Debug, Clone)]
pub struct ClusterManager {
    pub equal_mode: bool,
    pub conn_mode: ConnMode,
    registry: BTreeMap<u32, Entry>,
    registry_clears: u64,
}

impl ClusterManager {
    pub fn new(equal_mode: bool, conn_mode: ConnMode) -> Self {
        ClusterManager { equal_mode, conn_mode, registry: BTreeMap::new(), registry_clears: 0 }
    }

    pub fn registered(&self) -> impl Iterator<Item = u32> + '_ {
        self.registry.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.registry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registry.is_empty()
    }

    pub fn registry_clears(&self) -> u64 {
        self.registry_clears
    }

    /// Handles one request line. A malformed line clears the registry and the
    /// caller must close the connection.
    pub fn handle_line(&mut self, conn: ConnId, line: &str, now: f64) -> Result<Reply, WireError> {
        match parse_request(line) {
            Ok(id) => Ok(self.register_or_heartbeat(conn, id, now)),
            Err(e) => {
                log::warn!("manager: malformed request on conn {conn}: {e}");
                self.clear();
                Err(e)
            }
        }
    }

    pub fn register_or_heartbeat(&mut self, conn: ConnId, cont_id: u32, now: f64) -> Reply {
        match self.registry.get_mut(&cont_id) {
            Some(e) if e.conn != conn && e.conn_open => return Reply::Redraw,
            Some(e) => {
                e.conn = conn;
                e.conn_open = true;
                e.last_seen = now;
            }
            None => {
                self.registry.insert(cont_id, Entry { conn, conn_open: true, last_seen: now });
            }
        }
        Reply::Assign(self.assignment(cont_id).expect("just inserted"))
    }

    /// Current election output for a registered id.
    pub fn assignment(&self, cont_id: u32) -> Option<Assignment> {
        let order = self.registry.keys().position(|&k| k == cont_id)?;
        let count = self.registry.len();
        let role = if self.equal_mode {
            Role::Equal
        } else if order + 1 == count {
            Role::Master
        } else {
            Role::Slave
        };
        Some(Assignment { role, count, order })
    }

    /// A connection went away. In concurrent mode any disconnect wipes the
    /// registry; in serial mode the manager's own close after a reply is
    /// routine and only marks the entry's connection as closed.
    pub fn on_disconnect(&mut self, conn: ConnId, routine_close: bool) {
        if self.conn_mode == ConnMode::Serial && routine_close {
            for e in self.registry.values_mut().filter(|e| e.conn == conn) {
                e.conn_open = false;
            }
            return;
        }
        if self.registry.values().any(|e| e.conn == conn) || self.conn_mode == ConnMode::Concurrent {
            self.clear();
        }
    }

    /// Drops entries not refreshed within `max_age` seconds. Serial mode has
    /// no persistent connection whose loss would signal a dead controller.
    pub fn prune_stale(&mut self, now: f64, max_age: f64) -> usize {
        let before = self.registry.len();
        self.registry.retain(|_, e| now - e.last_seen <= max_age);
        before - self.registry.len()
    }

    fn clear(&mut self) {
        if !self.registry.is_empty() {
            self.registry_clears += 1;
        }
        self.registry.clear();
    }
}
