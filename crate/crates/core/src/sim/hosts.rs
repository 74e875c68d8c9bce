//! End hosts, ping trains and fluid bulk flows.

use std::collections::{BTreeMap, BTreeSet};

use super::engine::{node_name, to_ns, to_secs, Event, Ns, Sim, HOP_LIMIT, RETRY};
use super::maxmin::maxmin_allocate;
use crate::dataplane::TraceStep;
use crate::net::{
    ArpOpcode, Dpid, Frame, HostId, IcmpHeader, IcmpKind, Ipv4Address, L4Ports, LinkId, MacAddress, NodeId, Payload,
    PortNo, Transport,
};

const ARP_ATTEMPTS: u32 = 3;
const SYN_LEN: u32 = 74;
const ACK_LEN: u32 = 66;
const DATA_LEN: u32 = 1514;

pub(super) struct HostState {
    pub id: HostId,
    pub mac: MacAddress,
    pub ip: Ipv4Address,
    /// Entries never expire.
    pub arp: BTreeMap<Ipv4Address, MacAddress>,
    /// Frames waiting for address resolution, destination MAC unset.
    pub pending: BTreeMap<Ipv4Address, Vec<Frame>>,
}

impl HostState {
    pub fn new(id: HostId, mac: MacAddress, ip: Ipv4Address) -> Self {
        HostState { id, mac, ip, arp: BTreeMap::new(), pending: BTreeMap::new() }
    }
}

pub(super) struct PingState {
    pub label: String,
    pub host: HostId,
    pub dst: Ipv4Address,
    pub count: u32,
    pub interval: Ns,
    pub size: u32,
    pub sent_at: Vec<Option<Ns>>,
    pub rtt: Vec<Option<f64>>,
    pub expired: Vec<bool>,
}

impl PingState {
    pub fn new(label: String, host: HostId, dst: Ipv4Address, count: u32, interval: Ns, size: u32) -> Self {
        let n = count as usize;
        PingState { label, host, dst, count, interval, size, sent_at: vec![None; n], rtt: vec![None; n], expired: vec![false; n] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) enum FlowKind {
    Tcp,
    Udp { rate_bps: f64 },
}

impl FlowKind {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Tcp => "tcp",
            FlowKind::Udp { .. } => "udp",
        }
    }
}

/// A resolved route: directed link resources plus per-switch port pairs.
#[derive(Debug, Clone, PartialEq)]
pub(super) struct Route {
    pub resources: Vec<(LinkId, bool)>,
    pub hops: Vec<(Dpid, PortNo, PortNo)>,
    pub nodes: Vec<NodeId>,
}

pub(super) struct BulkFlow {
    pub label: String,
    pub kind: FlowKind,
    pub client: HostId,
    pub dst: Ipv4Address,
    pub src_port: u16,
    pub dst_port: u16,
    pub start: Ns,
    pub stop: Ns,
    pub active: bool,
    pub established: Option<Ns>,
    pub rate: f64,
    pub route: Option<Route>,
    pub delivered_bits: f64,
    /// Bytes delivered but not yet added to switch counters.
    pub byte_carry: f64,
    /// Delivered bits per simulated second.
    pub series: Vec<f64>,
    pub path: Vec<String>,
}

impl BulkFlow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: String,
        kind: FlowKind,
        client: HostId,
        dst: Ipv4Address,
        src_port: u16,
        dst_port: u16,
        start: Ns,
        stop: Ns,
    ) -> Self {
        BulkFlow {
            label,
            kind,
            client,
            dst,
            src_port,
            dst_port,
            start,
            stop,
            active: false,
            established: None,
            rate: 0.0,
            route: None,
            delivered_bits: 0.0,
            byte_carry: 0.0,
            series: Vec::new(),
            path: Vec::new(),
        }
    }

    fn transport(&self) -> Transport {
        let ports = L4Ports { src_port: self.src_port, dst_port: self.dst_port };
        match self.kind {
            FlowKind::Tcp => Transport::Tcp(ports),
            FlowKind::Udp { .. } => Transport::Udp(ports),
        }
    }
}

fn ping_seq(ping: usize, attempt: u32) -> u32 {
    ((ping as u32) << 16) | (attempt & 0xffff)
}

impl Sim<'_> {
    // ---- host stack -------------------------------------------------------

    fn host_transmit(&mut self, h: usize, frame: Frame) {
        let id = self.hosts[h].id;
        if !self.topo.node_power(NodeId::Host(id)).is_on() {
            return;
        }
        self.transmit(NodeId::Host(id), 0, frame, 0);
    }

    /// Sends an IPv4 frame, resolving the destination MAC first if needed.
    fn host_send_ipv4(&mut self, h: usize, mut frame: Frame) {
        let dst = frame.ipv4_header().expect("ipv4 frame").dst;
        if let Some(&mac) = self.hosts[h].arp.get(&dst) {
            frame.eth.dst = mac;
            self.host_transmit(h, frame);
            return;
        }
        let host = &mut self.hosts[h];
        let queue = host.pending.entry(dst).or_default();
        queue.push(frame);
        if queue.len() == 1 {
            let req = Frame::arp_request(host.mac, host.ip, dst);
            self.host_transmit(h, req);
            self.after(RETRY, Event::ArpRetry { host: h, ip: dst, attempt: 1 });
        }
    }

    pub(super) fn arp_retry(&mut self, h: usize, ip: Ipv4Address, attempt: u32) {
        if !self.hosts[h].pending.contains_key(&ip) {
            return;
        }
        if attempt >= ARP_ATTEMPTS {
            self.hosts[h].pending.remove(&ip);
            return;
        }
        let host = &self.hosts[h];
        let req = Frame::arp_request(host.mac, host.ip, ip);
        self.host_transmit(h, req);
        self.after(RETRY, Event::ArpRetry { host: h, ip, attempt: attempt + 1 });
    }

    fn learn(&mut self, h: usize, ip: Ipv4Address, mac: MacAddress) {
        let host = &mut self.hosts[h];
        host.arp.entry(ip).or_insert(mac);
        if let Some(frames) = host.pending.remove(&ip) {
            for mut f in frames {
                f.eth.dst = mac;
                self.host_transmit(h, f);
            }
        }
    }

    pub(super) fn frame_at_host(&mut self, h: usize, frame: Frame) {
        let (id, mac, ip) = {
            let host = &self.hosts[h];
            (host.id, host.mac, host.ip)
        };
        if !self.topo.node_power(NodeId::Host(id)).is_on() {
            return;
        }
        if frame.eth.dst != mac && !frame.eth.dst.is_broadcast() {
            return;
        }
        self.report.dataplane.delivered += 1;
        match frame.payload {
            Payload::Arp(a) => {
                if a.dst_ip != ip {
                    return;
                }
                self.learn(h, a.src_ip, a.src_mac);
                if a.opcode == ArpOpcode::Request {
                    self.host_transmit(h, Frame::arp_reply(mac, ip, a.src_mac, a.src_ip));
                }
            }
            Payload::Ipv4(hdr) => {
                if hdr.dst != ip {
                    return;
                }
                self.learn(h, hdr.src, frame.eth.src);
                match hdr.transport {
                    Transport::Icmp(IcmpHeader { kind: IcmpKind::EchoRequest, seq }) => {
                        let reply = Frame::ipv4(
                            mac,
                            frame.eth.src,
                            ip,
                            hdr.src,
                            Transport::Icmp(IcmpHeader { kind: IcmpKind::EchoReply, seq }),
                            frame.len,
                        );
                        self.host_transmit(h, reply);
                    }
                    Transport::Icmp(IcmpHeader { kind: IcmpKind::EchoReply, seq }) => {
                        self.ping_reply(id, hdr.src, seq);
                    }
                    Transport::Tcp(p) => self.tcp_segment(h, frame, hdr.src, p),
                    Transport::Udp(p) => {
                        if let Some(f) = self.flow_by_client(hdr.src, p.src_port) {
                            self.establish(f);
                        }
                    }
                    Transport::Other(_) => {}
                }
            }
        }
    }

    fn flow_by_client(&self, client_ip: Ipv4Address, src_port: u16) -> Option<usize> {
        self.flows.iter().position(|f| {
            f.src_port == src_port && self.topo.host(f.client).is_some_and(|h| h.ip == client_ip)
        })
    }

    fn tcp_segment(&mut self, h: usize, frame: Frame, src_ip: Ipv4Address, ports: L4Ports) {
        let me = self.hosts[h].id;
        // Client side: the server answered.
        if let Some(f) = self.flows.iter().position(|f| f.client == me && f.src_port == ports.dst_port) {
            self.establish(f);
            return;
        }
        // Server side: acknowledge whatever arrived.
        if self.flow_by_client(src_ip, ports.src_port).is_some() {
            let host = &self.hosts[h];
            let reply = Frame::ipv4(
                host.mac,
                frame.eth.src,
                host.ip,
                src_ip,
                Transport::Tcp(L4Ports { src_port: ports.dst_port, dst_port: ports.src_port }),
                if frame.len == SYN_LEN { SYN_LEN } else { ACK_LEN },
            );
            self.host_transmit(h, reply);
        }
    }

    // ---- ping -------------------------------------------------------------

    pub(super) fn ping_send(&mut self, p: usize, attempt: u32) {
        let ping = &mut self.pings[p];
        ping.sent_at[attempt as usize] = Some(self.now);
        let (host, dst, size, count, interval) = (ping.host, ping.dst, ping.size, ping.count, ping.interval);
        let h = host.0 as usize;
        let src = &self.hosts[h];
        let frame = Frame::ipv4(
            src.mac,
            MacAddress::ZERO,
            src.ip,
            dst,
            Transport::Icmp(IcmpHeader { kind: IcmpKind::EchoRequest, seq: ping_seq(p, attempt) }),
            size,
        );
        self.host_send_ipv4(h, frame);
        self.after(to_ns(self.sc.ping_timeout), Event::PingTimeout { ping: p, attempt });
        if attempt + 1 < count {
            self.after(interval, Event::PingSend { ping: p, attempt: attempt + 1 });
        }
    }

    pub(super) fn ping_timeout(&mut self, p: usize, attempt: u32) {
        let ping = &mut self.pings[p];
        if ping.rtt[attempt as usize].is_none() {
            ping.expired[attempt as usize] = true;
        }
    }

    fn ping_reply(&mut self, host: HostId, src: Ipv4Address, seq: u32) {
        let (p, attempt) = ((seq >> 16) as usize, (seq & 0xffff) as usize);
        let now = self.now;
        let Some(ping) = self.pings.get_mut(p) else { return };
        if ping.host != host || attempt >= ping.rtt.len() {
            return;
        }
        if src != ping.dst {
            self.report.nat_violations += 1;
        }
        if ping.expired[attempt] || ping.rtt[attempt].is_some() {
            return;
        }
        if let Some(sent) = ping.sent_at[attempt] {
            ping.rtt[attempt] = Some(to_secs(now - sent) * 1e3);
        }
    }

    // ---- bulk flows -------------------------------------------------------

    fn flow_frame(&self, f: usize, len: u32) -> (usize, Frame) {
        let flow = &self.flows[f];
        let h = flow.client.0 as usize;
        let host = &self.hosts[h];
        (h, Frame::ipv4(host.mac, MacAddress::ZERO, host.ip, flow.dst, flow.transport(), len))
    }

    /// Connection setup for TCP, a datagram for UDP.
    fn flow_opening(&mut self, f: usize) {
        let len = match self.flows[f].kind {
            FlowKind::Tcp => SYN_LEN,
            FlowKind::Udp { .. } => DATA_LEN,
        };
        let (h, frame) = self.flow_frame(f, len);
        self.host_send_ipv4(h, frame);
    }

    pub(super) fn flow_start(&mut self, f: usize) {
        self.flows[f].active = true;
        self.flow_opening(f);
        self.after(RETRY, Event::FlowRetry { flow: f });
    }

    pub(super) fn flow_retry(&mut self, f: usize) {
        let flow = &self.flows[f];
        if !flow.active {
            return;
        }
        if flow.established.is_none() {
            self.flow_opening(f);
        } else if flow.route.is_none() {
            // Stalled: a data segment re-enters the network and may trigger
            // fresh rule installation.
            let (h, frame) = self.flow_frame(f, DATA_LEN);
            self.host_send_ipv4(h, frame);
        }
        self.after(RETRY, Event::FlowRetry { flow: f });
    }

    pub(super) fn flow_stop(&mut self, f: usize) {
        self.flows[f].active = false;
        self.fluid_dirty = true;
    }

    fn establish(&mut self, f: usize) {
        let flow = &mut self.flows[f];
        if flow.active && flow.established.is_none() {
            flow.established = Some(self.now);
            self.fluid_dirty = true;
        }
    }

    /// Adds delivered bits and switch counters for the interval up to `to`.
    pub(super) fn advance_fluid(&mut self, to: Ns) {
        if to <= self.fluid_clock {
            return;
        }
        let from = self.fluid_clock;
        self.fluid_clock = to;
        const SEC: Ns = 1_000_000_000;
        for flow in &mut self.flows {
            if flow.rate <= 0.0 {
                continue;
            }
            let Some(route) = &flow.route else { continue };
            let mut t = from;
            while t < to {
                let boundary = (t / SEC + 1) * SEC;
                let seg_end = boundary.min(to);
                let bits = flow.rate * to_secs(seg_end - t);
                let s = (t / SEC) as usize;
                if flow.series.len() <= s {
                    flow.series.resize(s + 1, 0.0);
                }
                flow.series[s] += bits;
                flow.delivered_bits += bits;
                t = seg_end;
            }
            flow.byte_carry += flow.rate * to_secs(to - from) / 8.0;
            let whole = flow.byte_carry.floor();
            flow.byte_carry -= whole;
            let bytes = whole as u64;
            if bytes > 0 {
                for &(d, inp, out) in &route.hops {
                    if let Some(sw) = self.switches.get_mut(&d) {
                        sw.account_bulk(Some(inp), Some(out), bytes);
                    }
                }
            }
        }
    }

    /// Follows installed state from the client to the intended server.
    fn trace_route(&self, f: usize) -> Option<Route> {
        let flow = &self.flows[f];
        let client = &self.hosts[flow.client.0 as usize];
        let dst_mac = *client.arp.get(&flow.dst)?;
        let mut frame = Frame::ipv4(client.mac, dst_mac, client.ip, flow.dst, flow.transport(), DATA_LEN);
        let origin = NodeId::Host(flow.client);
        let uplink = self.topo.link_at(origin, 0)?;
        if !self.topo.link_usable(uplink) {
            return None;
        }
        let mut resources = vec![(uplink.id, uplink.a.node == origin)];
        let mut nodes = vec![origin];
        let mut hops = Vec::new();
        let mut at = uplink.far_end(origin)?;
        for _ in 0..HOP_LIMIT {
            let NodeId::Switch(d) = at.node else { return None };
            nodes.push(at.node);
            let sw = self.switches.get(&d)?;
            let (out, next) = match sw.trace(at.port, frame) {
                TraceStep::Forward(v) if v.len() == 1 => v[0],
                _ => return None,
            };
            let link = self.topo.link_at(at.node, out)?;
            if !self.topo.link_usable(link) {
                return None;
            }
            resources.push((link.id, link.a.node == at.node));
            hops.push((d, at.port, out));
            frame = next;
            let far = link.far_end(at.node)?;
            if let NodeId::Host(h) = far.node {
                let target = &self.hosts[h.0 as usize];
                let hdr = frame.ipv4_header()?;
                let reachable = self.topo.node_power(far.node).is_on()
                    && frame.eth.dst == target.mac
                    && hdr.dst == target.ip;
                if !reachable {
                    return None;
                }
                nodes.push(far.node);
                return Some(Route { resources, hops, nodes });
            }
            at = far;
        }
        None
    }

    pub(super) fn reallocate(&mut self) {
        self.fluid_dirty = false;
        let live: Vec<usize> = (0..self.flows.len())
            .filter(|&f| self.flows[f].active && self.flows[f].established.is_some())
            .collect();
        for f in 0..self.flows.len() {
            if !live.contains(&f) {
                self.flows[f].rate = 0.0;
                self.flows[f].route = None;
            }
        }
        if live.is_empty() {
            return;
        }
        let mut routes = BTreeMap::new();
        let mut udp = BTreeMap::new();
        let mut used: BTreeSet<(LinkId, bool)> = BTreeSet::new();
        for &f in &live {
            let route = self.trace_route(f);
            if let Some(r) = &route {
                used.extend(r.resources.iter().copied());
                routes.insert(f, r.resources.clone());
                if let FlowKind::Udp { rate_bps } = self.flows[f].kind {
                    udp.insert(f, rate_bps);
                }
                self.flows[f].path = r.nodes.iter().map(|&n| node_name(&self.topo, n)).collect();
            }
            self.flows[f].route = route;
        }
        let caps: BTreeMap<(LinkId, bool), f64> = used
            .into_iter()
            .filter_map(|r| self.topo.link(r.0).map(|l| (r, l.capacity_bps)))
            .collect();
        let rates = maxmin_allocate(&routes, &caps, &udp);
        for &f in &live {
            self.flows[f].rate = rates.get(&f).copied().unwrap_or(0.0);
        }
    }
}
