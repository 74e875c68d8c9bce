//! Header stacks carried through the simulated network.
//!
//! A [`Frame`] is an Ethernet header plus exactly one network payload. The
//! payload enum makes the ARP/IPv4 exclusivity and the "L4 ports only for
//! TCP/UDP" rule structural rather than checked.

use serde::{Deserialize, Serialize};

use super::addr::{Ipv4Address, MacAddress};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtherType {
    Arp,
    Ipv4,
}

impl EtherType {
    pub fn code(self) -> u16 {
        match self {
            EtherType::Arp => 0x0806,
            EtherType::Ipv4 => 0x0800,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EthHeader {
    pub src: MacAddress,
    pub dst: MacAddress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArpOpcode {
    Request,
    Reply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArpHeader {
    pub opcode: ArpOpcode,
    pub src_mac: MacAddress,
    pub src_ip: Ipv4Address,
    pub dst_mac: MacAddress,
    pub dst_ip: Ipv4Address,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IpProto {
    Tcp,
    Udp,
    Icmp,
    /// Any other protocol number; controllers do not handle these.
    Other(u8),
}

impl IpProto {
    pub fn number(self) -> u8 {
        match self {
            IpProto::Tcp => 6,
            IpProto::Udp => 17,
            IpProto::Icmp => 1,
            IpProto::Other(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct L4Ports {
    pub src_port: u16,
    pub dst_port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IcmpKind {
    EchoRequest,
    EchoReply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IcmpHeader {
    pub kind: IcmpKind,
    pub seq: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transport {
    Tcp(L4Ports),
    Udp(L4Ports),
    Icmp(IcmpHeader),
    Other(u8),
}

impl Transport {
    pub fn proto(&self) -> IpProto {
        match self {
            Transport::Tcp(_) => IpProto::Tcp,
            Transport::Udp(_) => IpProto::Udp,
            Transport::Icmp(_) => IpProto::Icmp,
            Transport::Other(n) => IpProto::Other(*n),
        }
    }

    pub fn ports(&self) -> Option<L4Ports> {
        match self {
            Transport::Tcp(p) | Transport::Udp(p) => Some(*p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ipv4Header {
    pub src: Ipv4Address,
    pub dst: Ipv4Address,
    pub transport: Transport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Payload {
    Arp(ArpHeader),
    Ipv4(Ipv4Header),
}

/// One frame on the wire: headers plus the total on-wire length in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frame {
    pub eth: EthHeader,
    pub payload: Payload,
    pub len: u32,
}

/// Minimum Ethernet frame size; ARP frames are padded to it.
pub const MIN_FRAME_LEN: u32 = 60;

impl Frame {
    pub fn arp_request(src_mac: MacAddress, src_ip: Ipv4Address, target_ip: Ipv4Address) -> Self {
        Frame {
            eth: EthHeader { src: src_mac, dst: MacAddress::BROADCAST },
            payload: Payload::Arp(ArpHeader {
                opcode: ArpOpcode::Request,
                src_mac,
                src_ip,
                dst_mac: MacAddress::ZERO,
                dst_ip: target_ip,
            }),
            len: MIN_FRAME_LEN,
        }
    }

    pub fn arp_reply(
        src_mac: MacAddress,
        src_ip: Ipv4Address,
        dst_mac: MacAddress,
        dst_ip: Ipv4Address,
    ) -> Self {
        Frame {
            eth: EthHeader { src: src_mac, dst: dst_mac },
            payload: Payload::Arp(ArpHeader {
                opcode: ArpOpcode::Reply,
                src_mac,
                src_ip,
                dst_mac,
                dst_ip,
            }),
            len: MIN_FRAME_LEN,
        }
    }

    pub fn ipv4(
        src_mac: MacAddress,
        dst_mac: MacAddress,
        src: Ipv4Address,
        dst: Ipv4Address,
        transport: Transport,
        len: u32,
    ) -> Self {
        Frame {
            eth: EthHeader { src: src_mac, dst: dst_mac },
            payload: Payload::Ipv4(Ipv4Header { src, dst, transport }),
            len: len.max(MIN_FRAME_LEN),
        }
    }

    pub fn ethertype(&self) -> EtherType {
        match self.payload {
            Payload::Arp(_) => EtherType::Arp,
            Payload::Ipv4(_) => EtherType::Ipv4,
        }
    }

    pub fn arp(&self) -> Option<&ArpHeader> {
        match &self.payload {
            Payload::Arp(a) => Some(a),
            _ => None,
        }
    }

    pub fn ipv4_header(&self) -> Option<&Ipv4Header> {
        match &self.payload {
            Payload::Ipv4(h) => Some(h),
            _ => None,
        }
    }

    pub fn ipv4_mut(&mut self) -> Option<&mut Ipv4Header> {
        match &mut self.payload {
            Payload::Ipv4(h) => Some(h),
            _ => None,
        }
    }

    /// The tuple the switch hashes when choosing a Select bucket.
    pub fn flow_key(&self) -> FlowKey {
        let ip = self.ipv4_header();
        FlowKey {
            eth_src: self.eth.src,
            eth_dst: self.eth.dst,
            ethertype: self.ethertype(),
            ip_src: ip.map(|h| h.src),
            ip_dst: ip.map(|h| h.dst),
            proto: ip.map(|h| h.transport.proto()),
            ports: ip.and_then(|h| h.transport.ports()),
        }
    }
}

/// Canonical flow identity used for bucket hashing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowKey {
    pub eth_src: MacAddress,
    pub eth_dst: MacAddress,
    pub ethertype: EtherType,
    pub ip_src: Option<Ipv4Address>,
    pub ip_dst: Option<Ipv4Address>,
    pub proto: Option<IpProto>,
    pub ports: Option<L4Ports>,
}

impl FlowKey {
    /// Fixed-layout byte encoding; absent fields encode as zeros.
    pub fn canonical_bytes(&self) -> [u8; 29] {
        let mut out = [0u8; 29];
        out[0..6].copy_from_slice(&self.eth_src.octets());
        out[6..12].copy_from_slice(&self.eth_dst.octets());
        out[12..14].copy_from_slice(&self.ethertype.code().to_be_bytes());
        if let Some(ip) = self.ip_src {
            out[14..18].copy_from_slice(&ip.octets());
        }
        if let Some(ip) = self.ip_dst {
            out[18..22].copy_from_slice(&ip.octets());
        }
        if let Some(p) = self.proto {
            out[22] = p.number();
        }
        if let Some(ports) = self.ports {
            out[23..25].copy_from_slice(&ports.src_port.to_be_bytes());
            out[25..27].copy_from_slice(&ports.dst_port.to_be_bytes());
        }
        out[27] = u8::from(self.ip_src.is_some());
        out[28] = u8::from(self.ports.is_some());
        out
    }
}
