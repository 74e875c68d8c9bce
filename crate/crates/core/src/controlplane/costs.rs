//! Link-cost tracking from periodic transmit counters.

use std::collections::BTreeMap;

use crate::dataplane::PortStats;
use crate::net::{Dpid, PortNo};

pub const DEFAULT_ALFA: f64 = 0.2;
/// Cost of a port whose smoothed usage is at or below the reference level.
pub const IDLE_COST: f64 = 1000.0;

pub fn ema(prev: f64, sample: f64, alfa: f64) -> f64 {
    alfa * prev + (1.0 - alfa) * sample
}

/// `c = 1 - bw_ref / (k * bw)`; 1000 when `c <= 0`, else `10 / c`.
pub fn link_cost(bw_ref: f64, k: f64, bandwidth: f64) -> f64 {
    if bandwidth <= 0.0 || k <= 0.0 {
        return IDLE_COST;
    }
    let c = 1.0 - bw_ref / (k * bandwidth);
    if c <= 0.0 {
        IDLE_COST
    } else {
        10.0 / c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PortLoad {
    pub tx_prev: u64,
    /// Smoothed bytes per poll interval.
    pub rate: f64,
    /// Smoothed `rate`.
    pub bandwidth: f64,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct LinkCostTracker {
    pub alfa: f64,
    pub k: f64,
    loads: BTreeMap<(Dpid, PortNo), PortLoad>,
}

impl LinkCostTracker {
    pub fn new(alfa: f64, k: f64) -> Self {
        LinkCostTracker { alfa, k, loads: BTreeMap::new() }
    }

    /// Folds one port-stats snapshot in. `bw_ref` gives the reference level
    /// (bytes per interval) for each port.
    pub fn update(&mut self, dpid: Dpid, stats: &[PortStats], mut bw_ref: impl FnMut(PortNo) -> f64) {
        for s in stats {
            let load = self.loads.entry((dpid, s.port)).or_default();
            let tx = s.counters.tx_bytes;
            // A counter that went backwards means the switch restarted.
            let delta = if tx >= load.tx_prev { tx - load.tx_prev } else { tx };
            load.rate = ema(load.rate, delta as f64, self.alfa);
            load.tx_prev = tx;
            load.bandwidth = ema(load.bandwidth, load.rate, self.alfa);
            load.cost = link_cost(bw_ref(s.port), self.k, load.bandwidth);
        }
    }

    pub fn cost(&self, dpid: Dpid, port: PortNo) -> f64 {
        self.loads.get(&(dpid, port)).map_or(IDLE_COST, |l| l.cost)
    }

    pub fn load(&self, dpid: Dpid, port: PortNo) -> Option<&PortLoad> {
        self.loads.get(&(dpid, port))
    }

    /// Transmit counter seen in the latest snapshot.
    pub fn tx_prev(&self, dpid: Dpid, port: PortNo) -> Option<u64> {
        self.loads.get(&(dpid, port)).map(|l| l.tx_prev)
    }

    pub fn costs(&self) -> impl Iterator<Item = ((Dpid, PortNo), f64)> + '_ {
        self.loads.iter().map(|(&k, l)| (k, l.cost))
    }
}
