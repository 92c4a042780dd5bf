//! Small network-address primitives shared across the crate.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// 48-bit hardware address, rendered as lowercase colon-hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl FromStr for MacAddr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(format!("malformed MAC address {s:?}"));
        }
        let mut bytes = [0u8; 6];
        for (i, part) in parts.iter().enumerate() {
            if part.len() != 2 {
                return Err(format!("malformed MAC address {s:?}"));
            }
            bytes[i] =
                u8::from_str_radix(part, 16).map_err(|_| format!("malformed MAC address {s:?}"))?;
        }
        Ok(MacAddr(bytes))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// True when `name` is a DNS label: alphanumerics and interior hyphens,
/// 1..=63 chars. Comparison elsewhere is case-sensitive by design.
pub fn is_dns_label(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 63
        && !name.starts_with('-')
        && !name.ends_with('-')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

/// Number of usable host addresses in a subnet (network/broadcast excluded
/// for prefixes shorter than /31).
pub fn usable_host_count(net: ipnet::Ipv4Net) -> u32 {
    let bits = 32 - net.prefix_len() as u32;
    match bits {
        0 => 1,
        1 => 2,
        _ => (1u32 << bits) - 2,
    }
}

/// n-th usable host address (1-based), if it exists.
pub fn nth_usable(net: ipnet::Ipv4Net, n: u32) -> Option<Ipv4Addr> {
    if n == 0 || n > usable_host_count(net) {
        return None;
    }
    let base = u32::from(net.network());
    let offset = if net.prefix_len() >= 31 { n - 1 } else { n };
    Some(Ipv4Addr::from(base + offset))
}

/// Highest usable host address of a subnet.
pub fn last_usable(net: ipnet::Ipv4Net) -> Ipv4Addr {
    nth_usable(net, usable_host_count(net)).expect("subnet has at least one usable address")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mac_round_trip() {
        let mac: MacAddr = "02:aa:0b:00:ff:01".parse().unwrap();
        assert_eq!(mac.to_string(), "02:aa:0b:00:ff:01");
        assert!("02:aa:0b:00:ff".parse::<MacAddr>().is_err());
        assert!("02:aa:0b:00:ff:zz".parse::<MacAddr>().is_err());
    }

    #[test]
    fn dns_labels() {
        assert!(is_dns_label("client01"));
        assert!(is_dns_label("Client01"));
        assert!(!is_dns_label(""));
        assert!(!is_dns_label("-lead"));
        assert!(!is_dns_label("trail-"));
        assert!(!is_dns_label("has space"));
    }

    #[test]
    fn subnet_math() {
        let net: ipnet::Ipv4Net = "10.0.1.0/24".parse().unwrap();
        assert_eq!(usable_host_count(net), 254);
        assert_eq!(nth_usable(net, 1), Some("10.0.1.1".parse().unwrap()));
        assert_eq!(last_usable(net), "10.0.1.254".parse::<Ipv4Addr>().unwrap());

        let tiny: ipnet::Ipv4Net = "10.0.0.0/30".parse().unwrap();
        assert_eq!(usable_host_count(tiny), 2);
        assert_eq!(nth_usable(tiny, 3), None);
    }
}
