//! Turning paths into flow rules and Select groups.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataplane::{Bucket, ControllerId, FlowAction, FlowMatch, FlowRule, GroupId, SelectGroup};
use crate::net::{
    all_simple_paths, path_cost, shortest_path_by, Dpid, MacAddress, NodeId, PathError, PortNo, Topology,
};

pub const PRIORITY_TABLE_MISS: u16 = 0;
pub const PRIORITY_INGRESS: u16 = 10;
pub const PRIORITY_TRANSIT: u16 = 20;
pub const PRIORITY_NAT: u16 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("destination {0} is not a known host")]
    UnknownDestination(MacAddress),
    #[error(transparent)]
    Path(#[from] PathError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRequest {
    pub dpid: Dpid,
    pub src_mac: MacAddress,
    pub dst_mac: MacAddress,
    /// Enumerate all simple paths and balance over them with Select groups.
    pub multipath: bool,
    /// Use `1/weight` for the single shortest path instead of the weight.
    pub invert_weights: bool,
    /// Leave the destination's own switch without a rule so the next frame
    /// is still seen there by the controller.
    pub skip_last_switch: bool,
    pub installed_by: ControllerId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathPlan {
    pub paths: Vec<Vec<NodeId>>,
    pub groups: Vec<(Dpid, SelectGroup)>,
    pub rules: Vec<(Dpid, FlowRule)>,
    /// What to do with the frame that triggered the request.
    pub ingress_actions: Vec<FlowAction>,
}

#[derive(Debug, Clone, Copy)]
struct Hop {
    dpid: Dpid,
    in_port: Option<PortNo>,
    out_port: PortNo,
}

/// Remaining nodes after a switch, and the port that leads there.
type Suffix = (Vec<NodeId>, PortNo);

fn hops(topo: &Topology, path: &[NodeId], last_port: PortNo) -> Option<Vec<Hop>> {
    let mut out = Vec::with_capacity(path.len());
    let mut in_port = None;
    for (i, node) in path.iter().enumerate() {
        let dpid = node.dpid()?;
        let out_port = match path.get(i + 1) {
            Some(&next) => topo.edge_between(*node, next)?.out_port,
            None => last_port,
        };
        out.push(Hop { dpid, in_port, out_port });
        if let Some(&next) = path.get(i + 1) {
            let edge = topo.edge_between(*node, next)?;
            in_port = Some(edge.link.far_end(*node)?.port);
        }
    }
    Some(out)
}

/// Stable group id for one (src, dst) pair at one switch entry point.
pub fn group_id_for(src: MacAddress, dst: MacAddress, dpid: Dpid, in_port: Option<PortNo>) -> GroupId {
    let mut h: u32 = 0x811c_9dc5;
    let port = in_port.map_or(u32::MAX, |p| p);
    for b in src.octets().into_iter().chain(dst.octets()).chain(dpid.to_be_bytes()).chain(port.to_be_bytes()) {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

/// Rules (and groups where paths diverge) steering `src -> dst` from the
/// switch that reported the miss to the destination host.
pub fn plan_paths(topo: &Topology, req: &PathRequest) -> Result<PathPlan, RouteError> {
    let host = topo.host_by_mac(req.dst_mac).ok_or(RouteError::UnknownDestination(req.dst_mac))?;
    let attach = topo.host_attachment(host).ok_or(RouteError::UnknownDestination(req.dst_mac))?;
    let src = NodeId::Switch(req.dpid);
    let dst = attach.node;
    if topo.link_at(dst, attach.port).is_none_or(|l| !topo.link_usable(l)) {
        return Err(PathError::NoPath(src, NodeId::Host(host)).into());
    }

    let paths = if req.multipath {
        let all = all_simple_paths(topo, src, dst);
        if all.is_empty() {
            return Err(PathError::NoPath(src, dst).into());
        }
        all
    } else {
        let invert = req.invert_weights;
        vec![shortest_path_by(topo, src, dst, |e| {
            let w = e.weight();
            if invert {
                if w > 0.0 { 1.0 / w } else { f64::MAX }
            } else {
                w
            }
        })?]
    };

    let hop_lists: Vec<Vec<Hop>> = paths
        .iter()
        .map(|p| hops(topo, p, attach.port).ok_or(PathError::NoPath(src, dst)))
        .collect::<Result<_, _>>()?;

    let base = FlowMatch { eth_src: Some(req.src_mac), eth_dst: Some(req.dst_mac), ..FlowMatch::any() };
    let last = dst.dpid().expect("hosts attach to switches");
    let mut plan = PathPlan { paths: paths.clone(), ..Default::default() };

    // Ingress switch.
    let ingress_actions = if paths.len() == 1 {
        vec![FlowAction::Output(hop_lists[0][0].out_port)]
    } else {
        let gid = group_id_for(req.src_mac, req.dst_mac, req.dpid, None);
        let buckets = paths
            .iter()
            .zip(&hop_lists)
            .map(|(p, h)| Bucket {
                weight: path_cost(topo, p).unwrap_or(0.0),
                actions: vec![FlowAction::Output(h[0].out_port)],
            })
            .collect();
        plan.groups.push((req.dpid, SelectGroup::new(gid, buckets).expect("non-empty")));
        vec![FlowAction::OutputGroup(gid)]
    };
    if !(req.skip_last_switch && req.dpid == last) {
        plan.rules.push((
            req.dpid,
            FlowRule::new(base, PRIORITY_INGRESS, ingress_actions.clone(), req.installed_by),
        ));
    }
    plan.ingress_actions = ingress_actions;

    // Downstream switches: one entry per (switch, in_port), listing the
    // distinct remaining suffixes reachable from there.
    let mut transit: BTreeMap<(Dpid, PortNo), Vec<Suffix>> = BTreeMap::new();
    for (p, h) in paths.iter().zip(&hop_lists) {
        for (i, hop) in h.iter().enumerate().skip(1) {
            let key = (hop.dpid, hop.in_port.expect("non-ingress hop has an in_port"));
            let suffix = p[i..].to_vec();
            let entry = transit.entry(key).or_default();
            if !entry.iter().any(|(s, _)| *s == suffix) {
                entry.push((suffix, hop.out_port));
            }
        }
    }
    for ((dpid, in_port), suffixes) in transit {
        if req.skip_last_switch && dpid == last {
            continue;
        }
        let matcher = FlowMatch { in_port: Some(in_port), ..base };
        let first = suffixes[0].1;
        let actions = if suffixes.iter().all(|(_, port)| *port == first) {
            vec![FlowAction::Output(first)]
        } else {
            let gid = group_id_for(req.src_mac, req.dst_mac, dpid, Some(in_port));
            let buckets = suffixes
                .iter()
                .map(|(s, port)| Bucket {
                    weight: path_cost(topo, s).unwrap_or(0.0),
                    actions: vec![FlowAction::Output(*port)],
                })
                .collect();
            plan.groups.push((dpid, SelectGroup::new(gid, buckets).expect("non-empty")));
            vec![FlowAction::OutputGroup(gid)]
        };
        plan.rules.push((dpid, FlowRule::new(matcher, PRIORITY_TRANSIT, actions, req.installed_by)));
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Endpoint, Ipv4Address};

    const C: ControllerId = ControllerId(0);

    fn sw(d: Dpid) -> NodeId {
        NodeId::Switch(d)
    }

    fn ep(node: NodeId, port: PortNo) -> Endpoint {
        Endpoint { node, port }
    }

    /// h1 - s1 =(s2|s3)= s4 - h2
    fn diamond() -> (Topology, MacAddress, MacAddress) {
        let mut t = Topology::new();
        for d in 1..=4 {
            t.add_switch(d).unwrap();
        }
        let a = MacAddress::from_integer(0xa);
        let b = MacAddress::from_integer(0xb);
        let h1 = t.add_host("h1", a, Ipv4Address::new(10, 0, 0, 1)).unwrap();
        let h2 = t.add_host("h2", b, Ipv4Address::new(10, 0, 0, 2)).unwrap();
        let cap = 10e6;
        t.connect(ep(NodeId::Host(h1), 0), ep(sw(1), 1), cap, 0.0).unwrap();
        t.connect(ep(sw(1), 2), ep(sw(2), 1), cap, 0.0).unwrap();
        t.connect(ep(sw(1), 3), ep(sw(3), 1), cap, 0.0).unwrap();
        t.connect(ep(sw(2), 2), ep(sw(4), 1), cap, 0.0).unwrap();
        t.connect(ep(sw(3), 2), ep(sw(4), 2), cap, 0.0).unwrap();
        t.connect(ep(sw(4), 3), ep(NodeId::Host(h2), 0), cap, 0.0).unwrap();
        (t, a, b)
    }

    fn req(a: MacAddress, b: MacAddress, multipath: bool) -> PathRequest {
        PathRequest {
            dpid: 1,
            src_mac: a,
            dst_mac: b,
            multipath,
            invert_weights: false,
            skip_last_switch: false,
            installed_by: C,
        }
    }

    #[test]
    fn single_path_gives_plain_rules() {
        let (t, a, b) = diamond();
        let plan = plan_paths(&t, &req(a, b, false)).unwrap();
        assert!(plan.groups.is_empty());
        assert_eq!(plan.paths, vec![vec![sw(1), sw(2), sw(4)]]);
        assert_eq!(plan.ingress_actions, vec![FlowAction::Output(2)]);
        let at: Vec<_> = plan.rules.iter().map(|(d, r)| (*d, r.actions.clone())).collect();
        assert_eq!(
            at,
            vec![
                (1, vec![FlowAction::Output(2)]),
                (2, vec![FlowAction::Output(2)]),
                (4, vec![FlowAction::Output(3)]),
            ]
        );
    }

    #[test]
    fn bucket_weights_are_path_costs() {
        let (mut t, a, b) = diamond();
        t.set_edge_weight(sw(1), 2, 4.0);
        t.set_edge_weight(sw(2), 2, 6.0);
        t.set_edge_weight(sw(1), 3, 20.0);
        t.set_edge_weight(sw(3), 2, 10.0);
        let plan = plan_paths(&t, &req(a, b, true)).unwrap();
        assert_eq!(plan.groups.len(), 1);
        let (d, g) = &plan.groups[0];
        assert_eq!(*d, 1);
        assert_eq!(g.weights(), vec![10.0, 30.0]);
        assert_eq!(plan.ingress_actions, vec![FlowAction::OutputGroup(g.group_id)]);
        // s4 is reached on two in_ports, each with its own rule.
        let s4: Vec<_> = plan.rules.iter().filter(|(d, _)| *d == 4).map(|(_, r)| r.matcher.in_port).collect();
        assert_eq!(s4, vec![Some(1), Some(2)]);
    }

    #[test]
    fn last_switch_can_be_left_reactive() {
        let (t, a, b) = diamond();
        let mut r = req(a, b, false);
        r.skip_last_switch = true;
        let plan = plan_paths(&t, &r).unwrap();
        assert!(plan.rules.iter().all(|(d, _)| *d != 4));
    }

    #[test]
    fn unknown_destination_and_no_path() {
        let (mut t, a, b) = diamond();
        assert!(matches!(
            plan_paths(&t, &req(a, MacAddress::from_integer(0x77), false)),
            Err(RouteError::UnknownDestination(_))
        ));
        t.set_node_power(sw(4), crate::net::Power::Off).unwrap();
        assert!(matches!(plan_paths(&t, &req(a, b, true)), Err(RouteError::Path(_))));
    }
}
