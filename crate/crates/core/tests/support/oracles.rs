//! Oracle checks shared by the core test suite and the acceptance run.
//!
//! Each check returns a short summary on success and the first disagreement
//! on failure.

#![allow(dead_code)]

use std::collections::BTreeMap;

use edgesim_core::controlplane::{ema, link_cost, LinkCostTracker, IDLE_COST};
use edgesim_core::dataplane::{PortCounters, PortStats};
use edgesim_core::net::{
    all_simple_paths, path_cost, shortest_path, Endpoint, Ipv4Address, MacAddress, NodeId, PathError, Power,
    Topology,
};
use edgesim_core::sim::maxmin_allocate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- shortest path vs exhaustive enumeration --------------------------------

pub struct RandomGraph {
    pub topo: Topology,
    pub nodes: Vec<NodeId>,
}

/// 2-6 switches plus up to 2 hosts (at most 8 nodes), random integer edge
/// weights per direction, sometimes a link or switch powered off.
pub fn random_graph(rng: &mut ChaCha8Rng) -> RandomGraph {
    let n_sw = rng.gen_range(2..=6u64);
    let n_hosts = rng.gen_range(0..=(8 - n_sw).min(2));
    let mut topo = Topology::new();
    let mut next_port: BTreeMap<NodeId, u32> = BTreeMap::new();
    let mut nodes = Vec::new();
    for d in 1..=n_sw {
        nodes.push(topo.add_switch(d).unwrap());
    }
    let mut port = |n: NodeId| {
        let p = next_port.entry(n).or_insert(0);
        *p += 1;
        *p
    };
    let density = rng.gen_range(0.2..0.9);
    let mut links = Vec::new();
    for a in 1..=n_sw {
        for b in (a + 1)..=n_sw {
            if rng.gen_bool(density) {
                let (sa, sb) = (NodeId::Switch(a), NodeId::Switch(b));
                let ea = Endpoint { node: sa, port: port(sa) };
                let eb = Endpoint { node: sb, port: port(sb) };
                links.push(topo.connect(ea, eb, 1e7, 0.001).unwrap());
                // Integer weights keep path sums exact.
                topo.set_edge_weight(sa, ea.port, f64::from(rng.gen_range(1..=20u32)));
                topo.set_edge_weight(sb, eb.port, f64::from(rng.gen_range(1..=20u32)));
            }
        }
    }
    for i in 0..n_hosts {
        let id = topo
            .add_host(format!("h{i}"), MacAddress::from_integer(i + 1), Ipv4Address([10, 0, 0, i as u8 + 1]))
            .unwrap();
        let h = NodeId::Host(id);
        let s = NodeId::Switch(rng.gen_range(1..=n_sw));
        let es = Endpoint { node: s, port: port(s) };
        topo.connect(Endpoint { node: h, port: 0 }, es, 1e7, 0.001).unwrap();
        nodes.push(h);
    }
    if !links.is_empty() && rng.gen_bool(0.3) {
        let l = links[rng.gen_range(0..links.len())];
        topo.set_link_power(l, Power::Off).unwrap();
    }
    if rng.gen_bool(0.2) {
        let d = rng.gen_range(1..=n_sw);
        topo.set_node_power(NodeId::Switch(d), Power::Off).unwrap();
    }
    RandomGraph { topo, nodes }
}

/// Compares `shortest_path` cost with the cheapest enumerated simple path
/// for every ordered node pair of `graphs` random graphs.
pub fn check_shortest_paths(seed: u64, graphs: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for g in 0..graphs {
        let RandomGraph { topo, nodes } = random_graph(&mut rng);
        if nodes.len() > 8 {
            return Err(format!("graph {g} has {} nodes", nodes.len()));
        }
        for &src in &nodes {
            for &dst in &nodes {
                if src == dst {
                    continue;
                }
                let best = all_simple_paths(&topo, src, dst)
                    .iter()
                    .filter_map(|p| path_cost(&topo, p))
                    .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))));
                match (shortest_path(&topo, src, dst), best) {
                    (Ok(path), Some(b)) => {
                        let ends_ok = path.first() == Some(&src) && path.last() == Some(&dst);
                        let c = path_cost(&topo, &path);
                        if !ends_ok || c != Some(b) {
                            return Err(format!("graph {g}: {src} -> {dst}: {path:?} costs {c:?}, best {b}"));
                        }
                        compared += 1;
                    }
                    (Err(PathError::NoPath(..)), None) => {}
                    (got, want) => return Err(format!("graph {g}: {src} -> {dst}: {got:?} vs enumeration {want:?}")),
                }
            }
        }
    }
    if compared < 500 {
        return Err(format!("only {compared} connected pairs exercised"));
    }
    Ok(format!("{graphs} graphs, {compared} connected pairs agree exactly"))
}

// ---- max-min allocation vs brute-force water-filling ------------------------

/// Bottleneck elimination: repeatedly find the link with the smallest equal
/// share among unresolved flows (or the smallest unmet demand) and freeze.
pub fn waterfill_oracle(
    routes: &BTreeMap<usize, Vec<u32>>,
    demands: &BTreeMap<usize, f64>,
    residual: &mut BTreeMap<u32, f64>,
) -> BTreeMap<usize, f64> {
    let mut rate: BTreeMap<usize, f64> = BTreeMap::new();
    let mut open: Vec<usize> = routes.keys().copied().collect();
    while !open.is_empty() {
        let users = |l: &u32, open: &[usize]| open.iter().filter(|f| routes[f].contains(l)).count();
        let mut best_share = f64::INFINITY;
        for (l, &c) in residual.iter() {
            let n = users(l, &open);
            if n > 0 {
                best_share = best_share.min(c / n as f64);
            }
        }
        let min_demand = open
            .iter()
            .map(|f| demands.get(f).copied().unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        let frozen: Vec<(usize, f64)> = if min_demand <= best_share {
            open.iter()
                .filter(|f| demands.get(f).copied() == Some(min_demand))
                .map(|&f| (f, min_demand))
                .collect()
        } else {
            let tight: Vec<u32> = residual
                .iter()
                .filter(|(l, &c)| {
                    let n = users(l, &open);
                    n > 0 && (c / n as f64 - best_share).abs() <= 1e-12 * best_share.max(1.0)
                })
                .map(|(&l, _)| l)
                .collect();
            open.iter()
                .filter(|f| routes[f].iter().any(|l| tight.contains(l)))
                .map(|&f| (f, best_share))
                .collect()
        };
        for (f, r) in frozen {
            for l in &routes[&f] {
                let c = residual.get_mut(l).unwrap();
                *c = (*c - r).max(0.0);
            }
            rate.insert(f, r);
            open.retain(|&g| g != f);
        }
    }
    rate
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub routes: BTreeMap<usize, Vec<u32>>,
    pub caps: BTreeMap<u32, f64>,
    pub udp: BTreeMap<usize, f64>,
}

/// Inelastic flows are water-filled first against their offered rates;
/// elastic flows share what is left.
pub fn oracle(inst: &Instance) -> BTreeMap<usize, f64> {
    let mut residual = inst.caps.clone();
    let (udp, tcp): (BTreeMap<_, _>, BTreeMap<_, _>) =
        inst.routes.clone().into_iter().partition(|(f, _)| inst.udp.contains_key(f));
    let mut out = waterfill_oracle(&udp, &inst.udp, &mut residual);
    out.extend(waterfill_oracle(&tcp, &BTreeMap::new(), &mut residual));
    out
}

/// At most 6 links and 8 flows, about a third of them inelastic.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_links = rng.gen_range(1..=6u32);
    let n_flows = rng.gen_range(1..=8usize);
    let caps: BTreeMap<u32, f64> = (0..n_links).map(|l| (l, rng.gen_range(1.0..100.0))).collect();
    let mut routes = BTreeMap::new();
    let mut udp = BTreeMap::new();
    for f in 0..n_flows {
        let mut r: Vec<u32> = (0..n_links).filter(|_| rng.gen_bool(0.4)).collect();
        if r.is_empty() {
            r.push(rng.gen_range(0..n_links));
        }
        routes.insert(f, r);
        if rng.gen_bool(0.35) {
            udp.insert(f, rng.gen_range(0.5..40.0));
        }
    }
    Instance { routes, caps, udp }
}

/// Relative agreement within 1e-9, with an absolute floor of 1e-9 of
/// `scale` so a flow starved to zero compares against floating residue.
pub fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(scale)
}

pub fn check_maxmin(seed: u64, instances: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let inst = random_instance(&mut rng);
        let got = maxmin_allocate(&inst.routes, &inst.caps, &inst.udp);
        let want = oracle(&inst);
        let scale = inst.caps.values().fold(0.0f64, |a, &b| a.max(b));
        if got.len() != want.len() {
            return Err(format!("instance {i}: {} rates vs {}", got.len(), want.len()));
        }
        for (f, w) in &want {
            let g = got[f];
            if !close(g, *w, scale) {
                return Err(format!("instance {i} flow {f}: got {g} want {w}"));
            }
            if *w > 1e-9 * scale {
                worst = worst.max((g - w).abs() / w);
            }
        }
    }
    Ok(format!("{instances} instances agree, worst relative error {worst:.1e}"))
}

// ---- EMA and link-cost vectors ----------------------------------------------

fn snap(port: u32, tx: u64) -> PortStats {
    PortStats { port, counters: PortCounters { tx_bytes: tx, ..Default::default() } }
}

/// Hand-computed vectors for alfa = 0.2, k = 1, reference 100 bytes/poll.
pub fn check_cost_vectors() -> Result<String, String> {
    let exact: [(&str, f64, f64); 8] = [
        ("ema(0,1000)", ema(0.0, 1000.0, 0.2), 800.0),
        ("ema(800,1000)", ema(800.0, 1000.0, 0.2), 960.0),
        ("ema(500,500)", ema(500.0, 500.0, 0.2), 500.0),
        ("cost(100,1,640)", link_cost(100.0, 1.0, 640.0), 10.0 / 0.84375),
        ("cost(100,1,200)", link_cost(100.0, 1.0, 200.0), 20.0),
        ("cost(100,2,100)", link_cost(100.0, 2.0, 100.0), 20.0),
        ("cost(100,1,100)", link_cost(100.0, 1.0, 100.0), IDLE_COST),
        ("cost(100,1,50)", link_cost(100.0, 1.0, 50.0), IDLE_COST),
    ];
    for (name, got, want) in exact {
        if got != want {
            return Err(format!("{name} = {got}, want {want}"));
        }
    }
    // Cumulative tx counter -> (smoothed rate, smoothed bandwidth).
    let steps: [(u64, f64, f64); 3] = [(1000, 800.0, 640.0), (3000, 1760.0, 1536.0), (3000, 352.0, 588.8)];
    let mut t = LinkCostTracker::new(0.2, 1.0);
    for (tx, rate, bw) in steps {
        t.update(1, &[snap(1, tx)], |_| 100.0);
        let l = *t.load(1, 1).unwrap();
        if (l.rate - rate).abs() > 1e-9 || (l.bandwidth - bw).abs() > 1e-9 {
            return Err(format!("tx {tx}: rate {} bw {}, want {rate} {bw}", l.rate, l.bandwidth));
        }
        let want_cost = 10.0 / (1.0 - 100.0 / bw);
        if (l.cost - want_cost).abs() > 1e-9 * want_cost {
            return Err(format!("tx {tx}: cost {}, want {want_cost}", l.cost));
        }
    }
    Ok(format!("{} exact values and {} tracker steps match", exact.len(), steps.len()))
}
