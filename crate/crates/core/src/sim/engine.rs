//! The event loop and the control-plane side of the simulation.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hosts::{BulkFlow, FlowKind, HostState, PingState};
use super::metrics::{
    account_control_bytes, ByteClass, ControlMessage, FarmReport, FlowReport, MetricsReport, PowerEvent, RoleEvent,
    SCHEMA_VERSION,
};
use crate::controlplane::{
    Arbitration, Controller, ControllerConfig, ControllerOutput, FromSwitch, SegmentState, ToSwitch,
};
use crate::dataplane::{ControllerId, FrameOutcome, SwitchOutput, SwitchState};
use crate::manager::{encode_reply, encode_request, ClusterManager, ConnId, ConnMode, Role};
use crate::net::{Dpid, Frame, Ipv4Address, LinkId, NodeId, PortNo, Power, Topology};
use crate::scenario::{Demand, FailureKind, FarmWorld, Scenario, World};

pub(super) type Ns = u64;

/// Frames crossing more switches than this are dropped.
pub(super) const HOP_LIMIT: u32 = 64;
/// Retransmission interval for ARP, connection setup and stalled flows.
pub(super) const RETRY: Ns = 1_000_000_000;

pub(super) fn to_ns(s: f64) -> Ns {
    (s * 1e9).round().max(0.0) as Ns
}

pub(super) fn to_secs(t: Ns) -> f64 {
    t as f64 / 1e9
}

pub(super) fn label(ctrl: usize) -> String {
    format!("c{ctrl}")
}

#[derive(Debug)]
pub(super) enum Event {
    Frame { node: NodeId, port: PortNo, frame: Frame, hops: u32 },
    ToSwitch { ctrl: usize, epoch: u32, dpid: Dpid, msg: ToSwitch },
    ToController { ctrl: usize, epoch: u32, dpid: Dpid, msg: FromSwitch },
    ManagerRequest { ctrl: usize, epoch: u32, conn: ConnId, line: String },
    ManagerReply { ctrl: usize, epoch: u32, line: String },
    Heartbeat { ctrl: usize, epoch: u32 },
    Poll { ctrl: usize, epoch: u32 },
    PingSend { ping: usize, attempt: u32 },
    PingTimeout { ping: usize, attempt: u32 },
    ArpRetry { host: usize, ip: Ipv4Address, attempt: u32 },
    FlowStart { flow: usize },
    FlowStop { flow: usize },
    FlowRetry { flow: usize },
    ActivationDone,
    Failure(usize),
}

impl Event {
    /// Frames and data-path control messages; periodic timers are excluded.
    fn is_dataplane(&self) -> bool {
        match self {
            Event::Frame { .. } => true,
            Event::ToSwitch { msg, .. } => {
                matches!(msg, ToSwitch::PacketOut { .. } | ToSwitch::FlowMod(_) | ToSwitch::GroupMod(_))
            }
            Event::ToController { msg, .. } => matches!(msg, FromSwitch::PacketIn { .. }),
            _ => false,
        }
    }
}

#[derive(Debug)]
struct Scheduled {
    time: Ns,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

struct CtrlSlot {
    ctrl: Controller,
    alive: bool,
    epoch: u32,
    /// Persistent manager connection, if any.
    conn: Option<ConnId>,
}

#[derive(Default)]
struct PacketInRecord {
    processors: u32,
}

pub(super) struct Sim<'a> {
    pub(super) sc: &'a Scenario,
    pub(super) now: Ns,
    end: Ns,
    seq: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    pub(super) rng: ChaCha8Rng,
    pub(super) topo: Topology,
    pub(super) switches: BTreeMap<Dpid, SwitchState>,
    cut_channels: BTreeSet<Dpid>,
    cut_links: BTreeSet<LinkId>,
    pub(super) hosts: Vec<HostState>,
    ctrls: Vec<CtrlSlot>,
    config: ControllerConfig,
    manager: ClusterManager,
    next_conn: ConnId,
    farm: Option<FarmWorld>,
    link_ids: Vec<LinkId>,
    latency: Ns,
    pub(super) pings: Vec<PingState>,
    pub(super) flows: Vec<BulkFlow>,
    pub(super) fluid_dirty: bool,
    pub(super) fluid_clock: Ns,
    packet_ins: BTreeMap<u64, PacketInRecord>,
    next_packet_in: u64,
    last_killed: Option<usize>,
    pub(super) report: MetricsReport,
}

impl<'a> Sim<'a> {
    pub(super) fn new(sc: &'a Scenario, world: World) -> Self {
        let World { topology, fail_modes, links, farm, .. } = world;
        let switches = topology
            .switches()
            .map(|d| {
                let mut s = SwitchState::new(d, fail_modes[&d], topology.ports_of(NodeId::Switch(d)));
                s.set_power(topology.node_power(NodeId::Switch(d)));
                (d, s)
            })
            .collect();
        let hosts = topology.hosts().map(|(id, info)| HostState::new(id, info.mac, info.ip)).collect();
        let mut sim = Sim {
            sc,
            now: 0,
            end: to_ns(sc.duration),
            seq: 0,
            queue: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            switches,
            cut_channels: BTreeSet::new(),
            cut_links: BTreeSet::new(),
            hosts,
            ctrls: Vec::new(),
            config: sc.controllers.controller_config(),
            manager: ClusterManager::new(sc.controllers.equal_mode, sc.manager.conn_mode),
            next_conn: 0,
            farm,
            link_ids: links,
            latency: to_ns(sc.control_latency),
            pings: Vec::new(),
            flows: Vec::new(),
            fluid_dirty: false,
            fluid_clock: 0,
            packet_ins: BTreeMap::new(),
            next_packet_in: 0,
            last_killed: None,
            topo: topology,
            report: MetricsReport {
                schema_version: SCHEMA_VERSION,
                scenario: sc.name.clone(),
                seed: sc.seed,
                duration: sc.duration,
                ..Default::default()
            },
        };
        for i in 0..sc.controllers.count {
            sim.spawn_controller(i, true);
        }
        sim.setup_demands();
        for (i, f) in sc.failures.iter().enumerate() {
            sim.at(to_ns(f.at), Event::Failure(i));
        }
        sim
    }

    pub(super) fn at(&mut self, time: Ns, event: Event) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        self.seq += 1;
        self.queue.push(Reverse(Scheduled { time, seq: self.seq, event }));
    }

    pub(super) fn after(&mut self, delay: Ns, event: Event) {
        self.at(self.now + delay, event);
    }

    pub(super) fn now_s(&self) -> f64 {
        to_secs(self.now)
    }

    fn second(&self) -> usize {
        (self.now / 1_000_000_000) as usize
    }

    fn account(&mut self, msg: ControlMessage<'_>) {
        let (class, bytes) = account_control_bytes(&self.sc.byte_model, msg);
        let s = self.second();
        self.report.control_bytes.add(s, class, bytes);
    }

    fn draw_cont_id(&mut self) -> u32 {
        self.rng.gen_range(1..=1_000_000)
    }

    fn period(&self) -> Ns {
        to_ns(self.config.period)
    }

    /// Creates (or recreates) controller `i` and starts its timers.
    fn spawn_controller(&mut self, i: usize, initial: bool) {
        let cont_id = self.draw_cont_id();
        let peers = (0..self.sc.controllers.count).map(|p| ControllerId(p as u32)).collect();
        let farm = self.farm.as_ref().map(|f| f.farm.clone());
        let ctrl = Controller::new(ControllerId(i as u32), cont_id, self.topo.clone(), farm, peers, self.config.clone());
        let epoch = if initial { 0 } else { self.ctrls[i].epoch + 1 };
        let slot = CtrlSlot { ctrl, alive: true, epoch, conn: None };
        if initial {
            self.ctrls.push(slot);
            self.report.packet_in.per_controller.insert(label(i), Default::default());
        } else {
            self.ctrls[i] = slot;
        }
        self.report.packet_in.per_controller.get_mut(&label(i)).expect("registered").cont_ids.push(cont_id);

        let id = ControllerId(i as u32);
        for (d, sw) in self.switches.iter_mut() {
            if !self.cut_channels.contains(d) {
                sw.connect_controller(id);
            }
        }
        if self.sc.manager.conn_mode == ConnMode::Concurrent {
            self.ctrls[i].conn = Some(self.open_manager_connection());
        }
        let t = self.period();
        let stagger = 3_000_000 * i as Ns;
        if initial {
            self.at(10_000_000 + stagger, Event::Heartbeat { ctrl: i, epoch });
            self.at(t + stagger, Event::Poll { ctrl: i, epoch });
        } else {
            self.after(0, Event::Heartbeat { ctrl: i, epoch });
            self.after(t, Event::Poll { ctrl: i, epoch });
        }
        self.fluid_dirty = true;
    }

    fn open_manager_connection(&mut self) -> ConnId {
        self.next_conn += 1;
        self.report.manager.connection_setups += 1;
        self.account(ControlMessage::ManagerHandshake(self.sc.manager.setup_bytes));
        self.next_conn
    }

    fn setup_demands(&mut self) {
        for (i, d) in self.sc.demands.iter().enumerate() {
            let host = self.topo.host_by_name(d.src()).expect("validated");
            let label = d.label(i);
            match *d {
                Demand::Ping { dst, count, interval, start, size, .. } => {
                    let p = self.pings.len();
                    self.pings.push(PingState::new(label, host, dst, count, to_ns(interval), size));
                    self.at(to_ns(start), Event::PingSend { ping: p, attempt: 0 });
                }
                Demand::Tcp { dst, dst_port, start, duration, .. } => {
                    self.add_flow(label, FlowKind::Tcp, host, dst, dst_port, start, duration);
                }
                Demand::Udp { dst, dst_port, rate_mbps, start, duration, .. } => {
                    self.add_flow(label, FlowKind::Udp { rate_bps: rate_mbps * 1e6 }, host, dst, dst_port, start, duration);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn add_flow(
        &mut self,
        label: String,
        kind: FlowKind,
        client: crate::net::HostId,
        dst: Ipv4Address,
        dst_port: u16,
        start: f64,
        duration: f64,
    ) {
        let src_port = loop {
            let p: u16 = self.rng.gen_range(49152..=65535);
            if !self.flows.iter().any(|f| f.client == client && f.src_port == p) {
                break p;
            }
        };
        let f = self.flows.len();
        let (start, stop) = (to_ns(start), to_ns(start + duration));
        self.flows.push(BulkFlow::new(label, kind, client, dst, src_port, dst_port, start, stop));
        self.at(start, Event::FlowStart { flow: f });
        self.at(stop, Event::FlowStop { flow: f });
    }

    pub(super) fn run(mut self) -> MetricsReport {
        while let Some(Reverse(s)) = self.queue.pop() {
            if s.time >= self.end {
                self.queue.push(Reverse(s));
                break;
            }
            self.advance_fluid(s.time);
            self.now = s.time;
            if s.event.is_dataplane() {
                self.report.quiescence.last_activity = to_secs(self.now);
            }
            self.dispatch(s.event);
            if self.fluid_dirty {
                self.reallocate();
            }
        }
        self.advance_fluid(self.end);
        self.now = self.end;
        self.finish()
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::Frame { node, port, frame, hops } => match node {
                NodeId::Switch(d) => self.frame_at_switch(d, port, frame, hops),
                NodeId::Host(h) => self.frame_at_host(h.0 as usize, frame),
            },
            Event::ToSwitch { ctrl, epoch, dpid, msg } => {
                if self.current(ctrl, epoch) && self.channel_up(ctrl, dpid) {
                    self.switch_handles(ctrl, dpid, msg);
                }
            }
            Event::ToController { ctrl, epoch, dpid, msg } => {
                if self.current(ctrl, epoch) {
                    self.controller_handles(ctrl, dpid, msg);
                }
            }
            Event::ManagerRequest { ctrl, epoch, conn, line } => self.manager_handles(ctrl, epoch, conn, &line),
            Event::ManagerReply { ctrl, epoch, line } => {
                if self.current(ctrl, epoch) {
                    self.role_reply(ctrl, &line);
                }
            }
            Event::Heartbeat { ctrl, epoch } => {
                if self.current(ctrl, epoch) {
                    self.send_heartbeat(ctrl);
                    self.after(self.period(), Event::Heartbeat { ctrl, epoch });
                }
            }
            Event::Poll { ctrl, epoch } => {
                if self.current(ctrl, epoch) {
                    let now = self.now_s();
                    let outs = self.ctrls[ctrl].ctrl.poll_stats(now);
                    self.handle_outputs(ctrl, outs);
                    self.after(self.period(), Event::Poll { ctrl, epoch });
                }
            }
            Event::PingSend { ping, attempt } => self.ping_send(ping, attempt),
            Event::PingTimeout { ping, attempt } => self.ping_timeout(ping, attempt),
            Event::ArpRetry { host, ip, attempt } => self.arp_retry(host, ip, attempt),
            Event::FlowStart { flow } => self.flow_start(flow),
            Event::FlowStop { flow } => self.flow_stop(flow),
            Event::FlowRetry { flow } => self.flow_retry(flow),
            Event::ActivationDone => self.activation_done(),
            Event::Failure(i) => self.inject(i),
        }
    }

    fn current(&self, ctrl: usize, epoch: u32) -> bool {
        let s = &self.ctrls[ctrl];
        s.alive && s.epoch == epoch
    }

    fn channel_up(&self, ctrl: usize, dpid: Dpid) -> bool {
        self.ctrls[ctrl].alive
            && self
                .switches
                .get(&dpid)
                .is_some_and(|s| s.power().is_on() && s.connected_controllers().contains(&ControllerId(ctrl as u32)))
    }

    // ---- data plane -------------------------------------------------------

    pub(super) fn transmit(&mut self, from: NodeId, port: PortNo, frame: Frame, hops: u32) {
        let Some(link) = self.topo.link_at(from, port) else { return };
        if !self.topo.link_usable(link) {
            return;
        }
        let Some(far) = link.far_end(from) else { return };
        let delay = to_ns(link.delay_s + link.transmit_time(frame.len));
        self.after(delay, Event::Frame { node: far.node, port: far.port, frame, hops });
    }

    fn frame_at_switch(&mut self, dpid: Dpid, port: PortNo, frame: Frame, hops: u32) {
        if hops >= HOP_LIMIT {
            self.report.dataplane.hop_limit_drops += 1;
            return;
        }
        let Some(sw) = self.switches.get_mut(&dpid) else { return };
        let Ok(result) = sw.process_frame(port, frame) else { return };
        if result.outcome == FrameOutcome::SecureDrop {
            self.report.dataplane.secure_drops += 1;
        }
        self.switch_outputs(dpid, result.outputs, hops + 1);
    }

    fn switch_outputs(&mut self, dpid: Dpid, outputs: Vec<SwitchOutput>, hops: u32) {
        for out in outputs {
            match out {
                SwitchOutput::Forward { port, frame } => self.transmit(NodeId::Switch(dpid), port, frame, hops),
                SwitchOutput::PacketIn { controllers, in_port, frame } => {
                    let id = self.next_packet_in;
                    self.next_packet_in += 1;
                    self.packet_ins.insert(id, PacketInRecord::default());
                    for c in controllers {
                        self.switch_sends(dpid, c.0 as usize, FromSwitch::PacketIn { id, in_port, frame });
                    }
                }
            }
        }
    }

    fn switch_sends(&mut self, dpid: Dpid, ctrl: usize, msg: FromSwitch) {
        if !self.channel_up(ctrl, dpid) {
            return;
        }
        self.account(ControlMessage::FromSwitch(&msg));
        let epoch = self.ctrls[ctrl].epoch;
        self.after(self.latency, Event::ToController { ctrl, epoch, dpid, msg });
    }

    fn switch_handles(&mut self, ctrl: usize, dpid: Dpid, msg: ToSwitch) {
        let sw = self.switches.get_mut(&dpid).expect("channel is up");
        match msg {
            ToSwitch::PacketOut { in_port, frame, actions } => {
                self.report.packet_in.packet_outs += 1;
                if let Ok(outs) = sw.packet_out(in_port, frame, &actions) {
                    self.switch_outputs(dpid, outs, 0);
                }
            }
            ToSwitch::FlowMod(op) => {
                let _ = sw.apply_flow_mod(op);
                self.fluid_dirty = true;
            }
            ToSwitch::GroupMod(g) => {
                if sw.apply_group_mod(g).unwrap_or(false) {
                    self.fluid_dirty = true;
                }
            }
            ToSwitch::PortStatsRequest => {
                if let Ok(stats) = sw.read_port_stats() {
                    self.switch_sends(dpid, ctrl, FromSwitch::PortStatsReply(stats));
                }
            }
            ToSwitch::FlowStatsRequest => {
                if let Ok(stats) = sw.read_flow_stats() {
                    self.switch_sends(dpid, ctrl, FromSwitch::FlowStatsReply(stats));
                }
            }
            ToSwitch::RoleSet(_) => {}
        }
    }

    // ---- controllers ------------------------------------------------------

    fn controller_handles(&mut self, ctrl: usize, dpid: Dpid, msg: FromSwitch) {
        let now = self.now_s();
        match msg {
            FromSwitch::PacketIn { id, in_port, frame } => {
                let load = self.report.packet_in.per_controller.get_mut(&label(ctrl)).expect("registered");
                load.received += 1;
                let c = &mut self.ctrls[ctrl].ctrl;
                let result = c.handle_packet_in(now, dpid, in_port, frame);
                if result.processed {
                    load.processed += 1;
                    if let Some(r) = self.packet_ins.get_mut(&id) {
                        r.processors += 1;
                    }
                    let by_dpid = c.config.arbitration == Arbitration::ByDpid;
                    if c.mode() == Some(Role::Equal) && by_dpid && (dpid % c.num_serv() as u64) as usize != c.order() {
                        self.report.packet_in.order_mismatches += 1;
                    }
                }
                self.handle_outputs(ctrl, result.outputs);
            }
            FromSwitch::PortStatsReply(stats) => self.ctrls[ctrl].ctrl.on_port_stats(now, dpid, &stats),
            FromSwitch::FlowStatsReply(_) => {}
        }
    }

    fn handle_outputs(&mut self, ctrl: usize, outputs: Vec<ControllerOutput>) {
        for out in outputs {
            match out {
                ControllerOutput::Switch { dpid, msg } => {
                    if self.channel_up(ctrl, dpid) {
                        self.account(ControlMessage::ToSwitch(&msg));
                        let epoch = self.ctrls[ctrl].epoch;
                        self.after(self.latency, Event::ToSwitch { ctrl, epoch, dpid, msg });
                    }
                }
                ControllerOutput::ActivateFarm => self.activate_farm(),
                ControllerOutput::DeactivateFarm => self.deactivate_farm(),
            }
        }
    }

    // ---- cluster manager --------------------------------------------------

    fn send_heartbeat(&mut self, ctrl: usize) {
        let line = encode_request(self.ctrls[ctrl].ctrl.cont_id);
        let conn = match self.ctrls[ctrl].conn {
            Some(c) => c,
            None => self.open_manager_connection(),
        };
        self.report.manager.heartbeats += 1;
        self.account(ControlMessage::ManagerLine(&line));
        let epoch = self.ctrls[ctrl].epoch;
        self.after(self.latency, Event::ManagerRequest { ctrl, epoch, conn, line });
    }

    fn manager_handles(&mut self, ctrl: usize, epoch: u32, conn: ConnId, line: &str) {
        let serial = self.sc.manager.conn_mode == ConnMode::Serial;
        if !self.current(ctrl, epoch) {
            // The sender died in flight; a per-request connection just closes.
            if serial {
                self.manager.on_disconnect(conn, true);
            }
            return;
        }
        let now = self.now_s();
        if serial {
            let max_age = self.sc.manager.stale_after_periods * self.config.period;
            self.manager.prune_stale(now, max_age);
        }
        let reply = match self.manager.handle_line(conn, line, now) {
            Ok(r) => encode_reply(&r),
            Err(e) => {
                self.report.warnings.push(format!("manager rejected {line:?}: {e}"));
                return;
            }
        };
        self.account(ControlMessage::ManagerLine(&reply));
        self.after(self.latency, Event::ManagerReply { ctrl, epoch, line: reply });
        if serial {
            self.manager.on_disconnect(conn, true);
            self.account(ControlMessage::ManagerHandshake(self.sc.manager.teardown_bytes));
        }
    }

    fn role_reply(&mut self, ctrl: usize, line: &str) {
        let update = self.ctrls[ctrl].ctrl.role_monitor(line);
        if update.redraw {
            let id = self.draw_cont_id();
            self.ctrls[ctrl].ctrl.cont_id = id;
            self.report.packet_in.per_controller.get_mut(&label(ctrl)).expect("registered").cont_ids.push(id);
            self.send_heartbeat(ctrl);
            return;
        }
        if update.changed {
            let c = &self.ctrls[ctrl].ctrl;
            let role = c.mode().expect("changed to a role");
            self.report.role_events.push(RoleEvent {
                time: self.now_s(),
                controller: label(ctrl),
                cont_id: c.cont_id,
                role,
            });
            let f = &mut self.report.failover;
            if role == Role::Master && f.master_kill_time.is_some() && f.new_master_time.is_none() {
                f.new_master_time = Some(to_secs(self.now));
            }
        }
        self.handle_outputs(ctrl, update.outputs);
    }

    // ---- farm segment -----------------------------------------------------

    fn segment_state(&self) -> Option<SegmentState> {
        self.farm.as_ref().map(|f| f.farm.segment)
    }

    fn notify_segment(&mut self, state: SegmentState) {
        let now = self.now_s();
        for i in 0..self.ctrls.len() {
            if self.ctrls[i].alive {
                let outs = self.ctrls[i].ctrl.on_segment_state(now, state);
                self.handle_outputs(i, outs);
            }
        }
    }

    fn activate_farm(&mut self) {
        if self.segment_state() != Some(SegmentState::Off) {
            return;
        }
        self.farm.as_mut().expect("present").farm.segment = SegmentState::Activating;
        self.farm_report().activations += 1;
        self.notify_segment(SegmentState::Activating);
        self.after(to_ns(self.sc.activation_latency), Event::ActivationDone);
    }

    fn activation_done(&mut self) {
        if self.segment_state() != Some(SegmentState::Activating) {
            return;
        }
        self.power_segment(Power::On);
        self.farm.as_mut().expect("present").farm.segment = SegmentState::On;
        self.record_power("on");
        self.notify_segment(SegmentState::On);
    }

    fn deactivate_farm(&mut self) {
        if self.segment_state() != Some(SegmentState::On) || !self.farm.as_ref().is_some_and(FarmWorld::has_segment) {
            return;
        }
        self.power_segment(Power::Off);
        self.farm.as_mut().expect("present").farm.segment = SegmentState::Off;
        self.farm_report().deactivations += 1;
        self.record_power("off");
        self.notify_segment(SegmentState::Off);
    }

    fn farm_report(&mut self) -> &mut FarmReport {
        self.report.farm.get_or_insert_with(FarmReport::default)
    }

    fn record_power(&mut self, state: &str) {
        let time = self.now_s();
        self.farm_report().power_events.push(PowerEvent { time, state: state.into() });
    }

    fn power_segment(&mut self, power: Power) {
        let fw = self.farm.as_ref().expect("present");
        let nodes: Vec<NodeId> = fw
            .segment_switches
            .iter()
            .map(|&d| NodeId::Switch(d))
            .chain(fw.server_hosts.iter().map(|&h| NodeId::Host(h)))
            .collect();
        let links: Vec<LinkId> = fw.segment_links.iter().copied().filter(|l| !self.cut_links.contains(l)).collect();
        for &n in &nodes {
            let _ = self.topo.set_node_power(n, power);
            if let NodeId::Switch(d) = n {
                let sw = self.switches.get_mut(&d).expect("validated");
                sw.set_power(power);
                if power.is_on() && !self.cut_channels.contains(&d) {
                    for (i, slot) in self.ctrls.iter().enumerate() {
                        if slot.alive {
                            sw.connect_controller(ControllerId(i as u32));
                        }
                    }
                }
            }
        }
        for &l in &links {
            let _ = self.topo.set_link_power(l, power);
        }
        for slot in &mut self.ctrls {
            for &n in &nodes {
                slot.ctrl.set_node_power(n, power);
            }
            for &l in &links {
                slot.ctrl.set_link_power(l, power);
            }
        }
        self.fluid_dirty = true;
    }

    // ---- failures ---------------------------------------------------------

    fn inject(&mut self, index: usize) {
        let f = &self.sc.failures[index];
        match f.kind {
            FailureKind::KillController { controller } => self.kill(controller),
            FailureKind::KillMaster => {
                let master = (0..self.ctrls.len())
                    .find(|&i| self.ctrls[i].alive && self.ctrls[i].ctrl.mode() == Some(Role::Master));
                match master {
                    Some(i) => self.kill(i),
                    None => self.report.warnings.push(format!("kill_master at {}: no master", f.at)),
                }
            }
            FailureKind::ReviveController { controller } => self.revive(controller),
            FailureKind::ReviveKilled => match self.last_killed {
                Some(i) => self.revive(i),
                None => self.report.warnings.push(format!("revive_killed at {}: nothing was killed", f.at)),
            },
            FailureKind::CutControlChannel { dpid } => self.cut_channel(dpid),
            FailureKind::CutAllControlChannels => {
                let all: Vec<Dpid> = self.switches.keys().copied().collect();
                for d in all {
                    self.cut_channel(d);
                }
            }
            FailureKind::CutLink { link } => {
                let id = self.link_ids[link];
                self.cut_links.insert(id);
                let _ = self.topo.set_link_power(id, Power::Off);
                for slot in &mut self.ctrls {
                    slot.ctrl.set_link_power(id, Power::Off);
                }
                self.fluid_dirty = true;
            }
        }
    }

    fn revive(&mut self, i: usize) {
        if self.ctrls[i].alive {
            self.report.warnings.push(format!("c{i} is already up"));
        } else {
            self.spawn_controller(i, false);
        }
    }

    fn kill(&mut self, i: usize) {
        let slot = &mut self.ctrls[i];
        if !slot.alive {
            self.report.warnings.push(format!("c{i} is already down"));
            return;
        }
        let was_master = slot.ctrl.mode() == Some(Role::Master);
        slot.alive = false;
        slot.epoch += 1;
        self.last_killed = Some(i);
        if let Some(conn) = slot.conn.take() {
            self.manager.on_disconnect(conn, false);
        }
        for sw in self.switches.values_mut() {
            sw.disconnect_controller(ControllerId(i as u32));
        }
        if was_master {
            self.report.failover = Default::default();
            self.report.failover.master_kill_time = Some(self.now_s());
        }
        self.fluid_dirty = true;
    }

    fn cut_channel(&mut self, dpid: Dpid) {
        self.cut_channels.insert(dpid);
        if let Some(sw) = self.switches.get_mut(&dpid) {
            sw.disconnect_all();
        }
        self.fluid_dirty = true;
    }

    // ---- report -----------------------------------------------------------

    fn finish(mut self) -> MetricsReport {
        let pending = self.queue.iter().filter(|s| s.0.event.is_dataplane()).count();
        self.report.quiescence.pending_at_end = pending as u64;

        let pi = &mut self.report.packet_in;
        pi.events = self.packet_ins.len() as u64;
        pi.processed_by_none = self.packet_ins.values().filter(|r| r.processors == 0).count() as u64;
        pi.processed_by_many = self.packet_ins.values().filter(|r| r.processors > 1).count() as u64;

        self.report.manager.registry_clears = self.manager.registry_clears();
        let seconds = self.end.div_ceil(1_000_000_000) as usize;
        let cb = &mut self.report.control_bytes;
        if cb.per_second.len() < seconds {
            cb.per_second.resize_with(seconds, super::metrics::ControlBytes::zero_row);
        }
        for class in ByteClass::ALL {
            cb.totals.entry(class).or_insert(0);
        }

        if let Some(kill) = self.report.failover.master_kill_time {
            let kill = to_ns(kill);
            self.report.failover.dataplane_loss_count = self
                .pings
                .iter()
                .flat_map(|p| p.sent_at.iter().zip(&p.rtt))
                .filter(|(sent, rtt)| sent.is_some_and(|t| t >= kill) && rtt.is_none())
                .count() as u64;
        }

        for p in &self.pings {
            self.report.rtt.insert(p.label.clone(), p.rtt.clone());
        }

        let widths: Vec<f64> = (0..seconds)
            .map(|s| to_secs(self.end.min((s as Ns + 1) * 1_000_000_000) - s as Ns * 1_000_000_000))
            .collect();
        let mut aggregate = vec![0.0; seconds];
        for f in &self.flows {
            let rate_series: Vec<f64> = (0..seconds)
                .map(|s| f.series.get(s).copied().unwrap_or(0.0) / widths[s])
                .collect();
            for (a, r) in aggregate.iter_mut().zip(&rate_series) {
                *a += r;
            }
            let stop = f.stop.min(self.end);
            let lifetime = to_secs(stop.saturating_sub(f.start));
            let src = self.topo.host(f.client).map(|h| h.name.clone()).unwrap_or_default();
            self.report.flows.insert(
                f.label.clone(),
                FlowReport {
                    kind: f.kind.name().into(),
                    src,
                    dst: f.dst.to_string(),
                    start: to_secs(f.start),
                    duration: to_secs(f.stop - f.start),
                    established_at: f.established.map(to_secs),
                    throughput_bps: if lifetime > 0.0 { f.delivered_bits / lifetime } else { 0.0 },
                    rate_series,
                    path: f.path.clone(),
                },
            );
        }
        self.report.throughput_series = aggregate;

        if let Some(fw) = &self.farm {
            let n_active = self
                .ctrls
                .iter()
                .filter(|s| s.alive)
                .filter_map(|s| s.ctrl.farm().map(|f| f.n_active))
                .max()
                .unwrap_or(fw.farm.n_active);
            let state = match fw.farm.segment {
                SegmentState::On => "on",
                SegmentState::Off => "off",
                SegmentState::Activating => "activating",
            };
            let fr = self.report.farm.get_or_insert_with(FarmReport::default);
            fr.final_state = state.into();
            fr.n_active = n_active;
        }
        self.report
    }
}

/// Node display names used in flow paths.
pub(super) fn node_name(topo: &Topology, node: NodeId) -> String {
    match node {
        NodeId::Switch(d) => format!("s{d}"),
        NodeId::Host(h) => topo.host(h).map(|i| i.name.clone()).unwrap_or_default(),
    }
}
