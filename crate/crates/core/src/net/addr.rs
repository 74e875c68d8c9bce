use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddrParseError {
    #[error("invalid MAC address `{0}`")]
    Mac(String),
    #[error("invalid IPv4 address `{0}`")]
    Ipv4(String),
}

/// 48-bit Ethernet hardware address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddress(pub [u8; 6]);

impl MacAddress {
    pub const BROADCAST: MacAddress = MacAddress([0xff; 6]);
    pub const ZERO: MacAddress = MacAddress([0; 6]);

    /// Builds an address whose big-endian integer value is `value` (upper 16 bits ignored).
    pub fn from_integer(value: u64) -> Self {
        let b = value.to_be_bytes();
        MacAddress([b[2], b[3], b[4], b[5], b[6], b[7]])
    }

    /// Big-endian interpretation of the six octets.
    pub fn as_integer(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &o| (acc << 8) | u64::from(o))
    }

    pub fn is_broadcast(&self) -> bool {
        *self == Self::BROADCAST
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

/// Free-function form used by the proxy-ARP server selection.
pub fn mac_as_integer(mac: MacAddress) -> u64 {
    mac.as_integer()
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MacAddress {
    type Err = AddrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AddrParseError::Mac(s.to_string());
        let mut octets = [0u8; 6];
        let mut parts = s.split(':');
        for o in octets.iter_mut() {
            let part = parts.next().ok_or_else(err)?;
            if part.is_empty() || part.len() > 2 {
                return Err(err());
            }
            *o = u8::from_str_radix(part, 16).map_err(|_| err())?;
        }
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(MacAddress(octets))
    }
}

impl Serialize for MacAddress {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ipv4Address(pub [u8; 4]);

impl Ipv4Address {
    pub const fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        Ipv4Address([a, b, c, d])
    }

    pub fn octets(&self) -> [u8; 4] {
        self.0
    }
}

impl fmt::Display for Ipv4Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(f, "{}.{}.{}.{}", o[0], o[1], o[2], o[3])
    }
}

impl fmt::Debug for Ipv4Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Ipv4Address {
    type Err = AddrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let addr: std::net::Ipv4Addr = s.parse().map_err(|_| AddrParseError::Ipv4(s.to_string()))?;
        Ok(Ipv4Address(addr.octets()))
    }
}

impl Serialize for Ipv4Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ipv4Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mac_integer_examples() {
        assert_eq!(mac_as_integer("00:00:00:00:00:00".parse().unwrap()), 0);
        assert_eq!(mac_as_integer("00:00:00:00:00:05".parse().unwrap()), 5);
        assert_eq!(mac_as_integer("00:00:00:00:01:00".parse().unwrap()), 256);
        assert_eq!(MacAddress::BROADCAST.to_string(), "ff:ff:ff:ff:ff:ff");
        assert_eq!(MacAddress::BROADCAST.as_integer(), (1 << 48) - 1);
    }

    #[test]
    fn rejects_malformed_mac() {
        for bad in ["", "00:00:00:00:00", "00:00:00:00:00:00:00", "0g:00:00:00:00:00", "000:0:0:0:0:0"] {
            assert!(bad.parse::<MacAddress>().is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn mac_integer_is_injective(a in any::<[u8; 6]>(), b in any::<[u8; 6]>()) {
            let (ma, mb) = (MacAddress(a), MacAddress(b));
            prop_assert_eq!(ma == mb, ma.as_integer() == mb.as_integer());
            prop_assert_eq!(MacAddress::from_integer(ma.as_integer()), ma);
        }

        #[test]
        fn text_round_trips(m in any::<[u8; 6]>(), ip in any::<[u8; 4]>()) {
            let mac = MacAddress(m);
            prop_assert_eq!(mac.to_string().parse::<MacAddress>().unwrap(), mac);
            let ip = Ipv4Address(ip);
            prop_assert_eq!(ip.to_string().parse::<Ipv4Address>().unwrap(), ip);
        }
    }
}
