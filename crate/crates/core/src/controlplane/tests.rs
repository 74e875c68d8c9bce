use super::*;
use crate::dataplane::{ControllerId, FlowAction, FlowModOp, PortCounters, PortStats};
use crate::manager::Role;
use crate::net::{
    ArpOpcode, Endpoint, Frame, IcmpHeader, IcmpKind, Ipv4Address, MacAddress, NodeId, Power, Topology, Transport,
};

const VIP: Ipv4Address = Ipv4Address::new(10, 0, 0, 100);

fn sw(d: u64) -> NodeId {
    NodeId::Switch(d)
}

fn ep(node: NodeId, port: u32) -> Endpoint {
    Endpoint { node, port }
}

/// h1(mac 1) - s1 - s2 - srv(mac 0x50, 10.0.1.1)
fn line() -> (Topology, ServerFarm) {
    let mut t = Topology::new();
    t.add_switch(1).unwrap();
    t.add_switch(2).unwrap();
    let h1 = t.add_host("h1", MacAddress::from_integer(1), Ipv4Address::new(10, 0, 0, 1)).unwrap();
    let srv = t.add_host("srv", MacAddress::from_integer(0x50), Ipv4Address::new(10, 0, 1, 1)).unwrap();
    t.connect(ep(NodeId::Host(h1), 0), ep(sw(1), 1), 100e6, 1e-4).unwrap();
    t.connect(ep(sw(1), 2), ep(sw(2), 1), 10e6, 1e-4).unwrap();
    t.connect(ep(sw(2), 2), ep(NodeId::Host(srv), 0), 100e6, 1e-4).unwrap();
    let farm = ServerFarm::new(
        VIP,
        vec![FarmServer { mac: MacAddress::from_integer(0x50), ip: Ipv4Address::new(10, 0, 1, 1), dpid: 2, out_port: 2 }],
        1,
    );
    (t, farm)
}

fn controller(mode_reply: &str) -> Controller {
    let (t, farm) = line();
    let mut c = Controller::new(ControllerId(0), 11, t, Some(farm), vec![ControllerId(0), ControllerId(1)], ControllerConfig::default());
    c.role_monitor(mode_reply);
    c
}

fn ping(src: u64, dst_mac: u64, dst_ip: Ipv4Address) -> Frame {
    Frame::ipv4(
        MacAddress::from_integer(src),
        MacAddress::from_integer(dst_mac),
        Ipv4Address::new(10, 0, 0, src as u8),
        dst_ip,
        Transport::Icmp(IcmpHeader { kind: IcmpKind::EchoRequest, seq: 1 }),
        98,
    )
}

fn count(outs: &[ControllerOutput], pred: impl Fn(&ToSwitch) -> bool) -> usize {
    outs.iter()
        .filter(|o| matches!(o, ControllerOutput::Switch { msg, .. } if pred(msg)))
        .count()
}

fn is_flow_add(m: &ToSwitch) -> bool {
    matches!(m, ToSwitch::FlowMod(FlowModOp::Add(_)))
}

fn is_packet_out(m: &ToSwitch) -> bool {
    matches!(m, ToSwitch::PacketOut { .. })
}

#[test]
fn slave_ignores_packet_in() {
    let mut c = controller("SLAVE:2:0\n");
    let r = c.handle_packet_in(0.0, 1, 1, Frame::arp_request(MacAddress::from_integer(1), Ipv4Address::new(10, 0, 0, 1), VIP));
    assert!(!r.processed);
    assert!(r.outputs.is_empty());
    assert_eq!(c.packet_in_counter(), 1);
}

#[test]
fn equal_rejected_still_counts() {
    // ByDpid, order 0 of 2: dpid 1 belongs to order 1.
    let mut c = controller("EQUAL:2:0\n");
    let r = c.handle_packet_in(0.0, 1, 1, ping(1, 0x50, VIP));
    assert!(!r.processed && r.outputs.is_empty());
    assert_eq!(c.packet_in_counter(), 1);
}

#[test]
fn arp_for_virtual_ip_gets_one_reply() {
    let mut c = controller("MASTER:1:0\n");
    let req = Frame::arp_request(MacAddress::from_integer(1), Ipv4Address::new(10, 0, 0, 1), VIP);
    let r = c.handle_packet_in(0.0, 1, 1, req);
    assert_eq!(r.outputs.len(), 1);
    match &r.outputs[0] {
        ControllerOutput::Switch { dpid: 1, msg: ToSwitch::PacketOut { frame, actions, .. } } => {
            let arp = frame.arp().unwrap();
            assert_eq!(arp.opcode, ArpOpcode::Reply);
            assert_eq!(arp.src_ip, VIP);
            assert_eq!(arp.src_mac, MacAddress::from_integer(0x50));
            assert_eq!(actions, &vec![FlowAction::Output(1)]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn loop_guard_examples() {
    let mut c = controller("MASTER:1:0\n");
    let a = MacAddress::from_integer(0xa);
    assert_eq!(c.loop_guard(1, a, MacAddress::BROADCAST, 1), LoopVerdict::Proceed);
    assert_eq!(c.loop_guard(1, a, MacAddress::BROADCAST, 2), LoopVerdict::Suppress);
    assert_eq!(c.loop_guard(1, a, MacAddress::from_integer(0xb), 2), LoopVerdict::Proceed);
}

#[test]
fn virtual_ip_first_packet_installs_nat_pair() {
    let mut c = controller("MASTER:1:0\n");
    let r = c.handle_packet_in(0.0, 2, 1, ping(1, 0x50, VIP));
    assert_eq!(count(&r.outputs, is_flow_add), 2);
    assert_eq!(count(&r.outputs, is_packet_out), 1);
    match r.outputs.last().unwrap() {
        ControllerOutput::Switch { msg: ToSwitch::PacketOut { actions, .. }, .. } => {
            assert_eq!(actions[0], FlowAction::SetIpv4Dst(Ipv4Address::new(10, 0, 1, 1)));
            assert_eq!(actions[1], FlowAction::Output(2));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn upstream_of_farm_routes_without_rule_at_last_switch() {
    let mut c = controller("MASTER:1:0\n");
    let r = c.handle_packet_in(0.0, 1, 1, ping(1, 0x50, VIP));
    let rule_switches: Vec<u64> = r
        .outputs
        .iter()
        .filter_map(|o| match o {
            ControllerOutput::Switch { dpid, msg } if is_flow_add(msg) => Some(*dpid),
            _ => None,
        })
        .collect();
    assert_eq!(rule_switches, vec![1]);
}

#[test]
fn cold_segment_parks_until_on() {
    let (t, mut farm) = line();
    farm.segment = SegmentState::Off;
    let mut c = Controller::new(ControllerId(0), 1, t, Some(farm), vec![], ControllerConfig::default());
    c.role_monitor("MASTER:1:0\n");
    let req = Frame::arp_request(MacAddress::from_integer(1), Ipv4Address::new(10, 0, 0, 1), VIP);
    let r = c.handle_packet_in(0.0, 1, 1, req);
    assert_eq!(r.outputs, vec![ControllerOutput::ActivateFarm]);
    let r2 = c.handle_packet_in(0.1, 1, 1, req);
    assert!(r2.outputs.is_empty());
    let released = c.on_segment_state(0.5, SegmentState::On);
    assert_eq!(count(&released, is_packet_out), 2);
}

#[test]
fn polls_two_requests_per_live_switch() {
    let mut c = controller("MASTER:1:0\n");
    assert_eq!(c.poll_stats(1.0).len(), 4);
    c.set_node_power(sw(2), Power::Off);
    assert_eq!(c.poll_stats(2.0).len(), 2);
    let empty = Controller::new(ControllerId(0), 1, Topology::new(), None, vec![], ControllerConfig::default());
    let mut empty = empty;
    assert!(empty.poll_stats(1.0).is_empty());
}

fn stats(port: u32, tx: u64) -> PortStats {
    PortStats { port, counters: PortCounters { tx_bytes: tx, ..Default::default() } }
}

#[test]
fn topology_weights_follow_costs() {
    let mut c = controller("MASTER:1:0\n");
    c.update_topology_weights();
    let w = |c: &Controller| c.topology().edge_between(sw(1), sw(2)).unwrap().weight();
    assert_eq!(w(&c), IDLE_COST);
    // 10 Mbps link, T = 1 s: reference 125 000 bytes per period.
    c.on_port_stats(1.0, 1, &[stats(2, 1_000_000)]);
    c.update_topology_weights();
    let bw = c.costs().load(1, 2).unwrap().bandwidth;
    assert_eq!(w(&c), link_cost(125_000.0, 1.0, bw));
    // Reverse direction untouched.
    assert_eq!(c.topology().edge_between(sw(2), sw(1)).unwrap().weight(), IDLE_COST);
}

#[test]
fn role_change_messages() {
    let (t, farm) = line();
    let peers = vec![ControllerId(0), ControllerId(1)];
    let mut c = Controller::new(ControllerId(0), 5, t, Some(farm), peers, ControllerConfig::default());
    let u = c.role_monitor("SLAVE:2:0\n");
    assert!(u.changed);
    assert_eq!((c.mode(), c.num_serv(), c.order()), (Some(Role::Slave), 2, 0));
    assert_eq!(count(&u.outputs, |m| matches!(m, ToSwitch::RoleSet(Role::Slave))), 2);
    assert!(c.role_monitor("SLAVE:2:0\n").outputs.is_empty());

    let u = c.role_monitor("MASTER:2:1\n");
    assert_eq!(count(&u.outputs, |m| matches!(m, ToSwitch::FlowMod(FlowModOp::DeleteAllFrom(ControllerId(1))))), 2);
    assert_eq!(count(&u.outputs, is_flow_add), 2);

    // Sole controller is master whatever the reply says.
    let mut solo = controller("SLAVE:1:0\n");
    assert_eq!(solo.mode(), Some(Role::Master));
    // Malformed replies keep the previous role.
    assert!(!solo.role_monitor("garbage\n").changed);
    assert_eq!(solo.mode(), Some(Role::Master));
    assert!(solo.role_monitor("REDRAW\n").redraw);
}

#[test]
fn equal_by_counter_takes_turns() {
    let mk = |order: usize| {
        let cfg = ControllerConfig { arbitration: Arbitration::ByCounter, ..ControllerConfig::default() };
        let (t, farm) = line();
        let mut c = Controller::new(ControllerId(order as u32), 1, t, Some(farm), vec![], cfg);
        c.role_monitor(&format!("EQUAL:2:{order}\n"));
        c
    };
    let mut cs = [mk(0), mk(1)];
    for i in 0..100u64 {
        let f = ping(1 + (i % 3), 0x99, Ipv4Address::new(10, 0, 0, 9));
        let processed: usize = cs.iter_mut().map(|c| c.handle_packet_in(0.0, 1, 1, f).processed as usize).sum();
        assert_eq!(processed, 1);
    }
    assert_eq!(cs[0].processed_count(), 50);
    assert_eq!(cs[1].processed_count(), 50);
}
