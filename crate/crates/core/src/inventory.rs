//! Static testbed inventory: hosts, interfaces, switch, radios, gateways.
//!
//! The inventory is always declared in a YAML file and validated on load;
//! nothing is ever probed from hardware. Loaded [`Testbed`] values are
//! immutable and safe to share across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{is_dns_label, nth_usable, MacAddr};

pub const DEFAULT_ENGINE_PORT: u16 = 2375;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IfaceKind {
    Ethernet,
    Wifi,
    Management,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interface {
    pub name: String,
    pub kind: IfaceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_port: Option<u16>,
    pub mac: MacAddr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HostRole {
    Control,
    WorkloadClient,
    EdgeServer,
    GatewayControlVpn,
    GatewayWorkloadVpn,
    SdrCompute,
}

impl HostRole {
    /// Roles that must carry both a management and a workload interface.
    pub fn is_workload_node(self) -> bool {
        matches!(self, HostRole::WorkloadClient | HostRole::EdgeServer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostSpec {
    pub name: String,
    pub role: HostRole,
    pub interfaces: Vec<Interface>,
    #[serde(default = "default_engine_port")]
    pub engine_port: u16,
}

fn default_engine_port() -> u16 {
    DEFAULT_ENGINE_PORT
}

impl HostSpec {
    pub fn management_iface(&self) -> Option<&Interface> {
        self.interfaces.iter().find(|i| i.kind == IfaceKind::Management)
    }

    /// Ethernet interfaces in name order (deterministic attachment choice).
    pub fn ethernet_ifaces(&self) -> Vec<&Interface> {
        let mut v: Vec<&Interface> = self
            .interfaces
            .iter()
            .filter(|i| i.kind == IfaceKind::Ethernet)
            .collect();
        v.sort_by(|a, b| a.name.cmp(&b.name));
        v
    }

    pub fn wifi_iface(&self) -> Option<&Interface> {
        let mut v: Vec<&Interface> = self
            .interfaces
            .iter()
            .filter(|i| i.kind == IfaceKind::Wifi)
            .collect();
        v.sort_by(|a, b| a.name.cmp(&b.name));
        v.into_iter().next()
    }

    pub fn iface(&self, name: &str) -> Option<&Interface> {
        self.interfaces.iter().find(|i| i.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadioCapability {
    WifiAp,
    WifiSta,
    LteEnb,
    LteUe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadioSpec {
    pub id: String,
    pub capabilities: BTreeSet<RadioCapability>,
    pub attached_host: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchSpec {
    pub port_count: u16,
    #[serde(default = "default_vlan_range")]
    pub vlan_id_range: (u16, u16),
    pub mgmt_vlan_id: u16,
}

fn default_vlan_range() -> (u16, u16) {
    (100, 999)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VpnPorts {
    pub control: u16,
    pub workload: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gateways {
    pub control: String,
    pub workload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TunnelSubnets {
    pub control: Ipv4Net,
    pub workload: Ipv4Net,
}

impl Default for TunnelSubnets {
    fn default() -> Self {
        TunnelSubnets {
            control: "10.10.0.0/24".parse().unwrap(),
            workload: "10.11.0.0/24".parse().unwrap(),
        }
    }
}

fn default_control_subnet() -> Ipv4Net {
    "10.200.0.0/24".parse().unwrap()
}

/// The full static testbed model. Immutable after load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Testbed {
    pub hosts: Vec<HostSpec>,
    pub switch: SwitchSpec,
    #[serde(default)]
    pub radios: Vec<RadioSpec>,
    pub gateways: Gateways,
    #[serde(default)]
    pub cloud_regions: Vec<String>,
    pub public_ip: Ipv4Addr,
    pub vpn_ports: VpnPorts,
    #[serde(default = "default_control_subnet")]
    pub control_subnet: Ipv4Net,
    #[serde(default)]
    pub tunnel_subnets: TunnelSubnets,
}

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invariant violation: {rule}: {detail}")]
    InvariantViolation { rule: &'static str, detail: String },
    #[error("unknown host: {0}")]
    UnknownHost(String),
}

fn violation(rule: &'static str, detail: impl Into<String>) -> InventoryError {
    InventoryError::InvariantViolation { rule, detail: detail.into() }
}

/// Parses and validates an inventory document. Every input either yields a
/// `Testbed` satisfying all invariants or a structured error.
pub fn load_testbed(text: &str) -> Result<Testbed, InventoryError> {
    let testbed: Testbed =
        serde_yaml::from_str(text).map_err(|e| InventoryError::Parse(e.to_string()))?;
    validate_testbed(&testbed)?;
    Ok(testbed)
}

/// Serializes a testbed back to YAML. `load_testbed(serialize(t)) == t`.
pub fn serialize_testbed(testbed: &Testbed) -> String {
    serde_yaml::to_string(testbed).expect("testbed serializes")
}

fn validate_testbed(tb: &Testbed) -> Result<(), InventoryError> {
    let mut names = BTreeSet::new();
    let mut macs = BTreeSet::new();
    let mut ports = BTreeSet::new();

    for host in &tb.hosts {
        if !is_dns_label(&host.name) {
            return Err(violation("host name charset", format!("{:?}", host.name)));
        }
        if !names.insert(host.name.clone()) {
            return Err(violation("host name uniqueness", host.name.clone()));
        }
        for iface in &host.interfaces {
            if !macs.insert(iface.mac) {
                return Err(violation(
                    "mac uniqueness",
                    format!("{} on {}/{}", iface.mac, host.name, iface.name),
                ));
            }
            match (iface.kind, iface.switch_port) {
                (IfaceKind::Ethernet, None) => {
                    return Err(violation(
                        "ethernet interface requires switch_port",
                        format!("{}/{}", host.name, iface.name),
                    ));
                }
                (IfaceKind::Ethernet, Some(p)) => {
                    if p == 0 || p > tb.switch.port_count {
                        return Err(violation(
                            "switch_port within port_count",
                            format!("{}/{} port {}", host.name, iface.name, p),
                        ));
                    }
                    if !ports.insert(p) {
                        return Err(violation(
                            "switch port uniqueness",
                            format!("port {} ({}/{})", p, host.name, iface.name),
                        ));
                    }
                }
                (_, Some(_)) => {
                    return Err(violation(
                        "switch_port only on ethernet interfaces",
                        format!("{}/{}", host.name, iface.name),
                    ));
                }
                (_, None) => {}
            }
        }
        if host.role.is_workload_node() {
            let mgmt = host
                .interfaces
                .iter()
                .filter(|i| i.kind == IfaceKind::Management)
                .count();
            let non_mgmt = host.interfaces.len() - mgmt;
            if host.interfaces.len() < 2 || mgmt != 1 || non_mgmt < 1 {
                return Err(violation(
                    "two interfaces required",
                    format!(
                        "{} needs exactly one management and at least one workload interface",
                        host.name
                    ),
                ));
            }
        }
    }

    let count_role = |role: HostRole| tb.hosts.iter().filter(|h| h.role == role).count();
    if count_role(HostRole::Control) != 1 {
        return Err(violation("exactly one control host", format!("found {}", count_role(HostRole::Control))));
    }
    if count_role(HostRole::GatewayControlVpn) != 1 || count_role(HostRole::GatewayWorkloadVpn) != 1 {
        return Err(violation(
            "one gateway per network",
            format!(
                "control-vpn gateways: {}, workload-vpn gateways: {}",
                count_role(HostRole::GatewayControlVpn),
                count_role(HostRole::GatewayWorkloadVpn)
            ),
        ));
    }

    for (name, role) in [
        (&tb.gateways.control, HostRole::GatewayControlVpn),
        (&tb.gateways.workload, HostRole::GatewayWorkloadVpn),
    ] {
        match tb.hosts.iter().find(|h| &h.name == name) {
            Some(h) if h.role == role => {}
            Some(h) => {
                return Err(violation(
                    "gateway role mismatch",
                    format!("{} has role {:?}", h.name, h.role),
                ));
            }
            None => return Err(violation("gateway host exists", name.clone())),
        }
    }

    if tb.vpn_ports.control == tb.vpn_ports.workload {
        return Err(violation(
            "vpn gateways use two different udp ports",
            format!("both {}", tb.vpn_ports.control),
        ));
    }

    let (lo, hi) = tb.switch.vlan_id_range;
    if lo == 0 || lo > hi || hi > 4094 {
        return Err(violation("vlan id range well-formed", format!("[{lo}, {hi}]")));
    }

    let mut radio_ids = BTreeSet::new();
    for radio in &tb.radios {
        if !radio_ids.insert(radio.id.clone()) {
            return Err(violation("radio id uniqueness", radio.id.clone()));
        }
        if radio.capabilities.is_empty() {
            return Err(violation("radio capabilities non-empty", radio.id.clone()));
        }
        match tb.hosts.iter().find(|h| h.name == radio.attached_host) {
            Some(h) if h.role == HostRole::SdrCompute => {}
            Some(h) => {
                return Err(violation(
                    "radio attached to sdr-compute host",
                    format!("{} attached to {} ({:?})", radio.id, h.name, h.role),
                ));
            }
            None => {
                return Err(violation(
                    "radio attached host exists",
                    format!("{} attached to {}", radio.id, radio.attached_host),
                ));
            }
        }
    }

    if tb.control_subnet.contains(&tb.tunnel_subnets.control.network())
        || tb.control_subnet.contains(&tb.tunnel_subnets.workload.network())
    {
        return Err(violation(
            "control subnet disjoint from tunnel subnets",
            tb.control_subnet.to_string(),
        ));
    }

    Ok(())
}

/// Case-sensitive host lookup.
pub fn resolve_hostname<'a>(testbed: &'a Testbed, name: &str) -> Result<&'a HostSpec, InventoryError> {
    testbed
        .hosts
        .iter()
        .find(|h| h.name == name)
        .ok_or_else(|| InventoryError::UnknownHost(name.to_string()))
}

impl Testbed {
    pub fn host(&self, name: &str) -> Result<&HostSpec, InventoryError> {
        resolve_hostname(self, name)
    }

    pub fn control_host(&self) -> &HostSpec {
        self.hosts
            .iter()
            .find(|h| h.role == HostRole::Control)
            .expect("validated testbed has a control host")
    }

    pub fn radio(&self, id: &str) -> Option<&RadioSpec> {
        self.radios.iter().find(|r| r.id == id)
    }

    /// Map switch port -> (host, interface name).
    pub fn port_map(&self) -> BTreeMap<u16, (String, String)> {
        let mut map = BTreeMap::new();
        for host in &self.hosts {
            for iface in &host.interfaces {
                if let Some(p) = iface.switch_port {
                    map.insert(p, (host.name.clone(), iface.name.clone()));
                }
            }
        }
        map
    }

    /// Hosts managed from the control network (everything except control itself).
    pub fn managed_hosts(&self) -> Vec<&HostSpec> {
        self.hosts.iter().filter(|h| h.role != HostRole::Control).collect()
    }
}

/// Deterministic static control-plane address of a host: hosts in name order
/// take usable addresses 1, 2, 3... of the control subnet. This addressing
/// pre-exists every run and is never mutated by the engine.
pub fn control_address(testbed: &Testbed, host: &str) -> Option<Ipv4Addr> {
    let mut names: Vec<&str> = testbed.hosts.iter().map(|h| h.name.as_str()).collect();
    names.sort_unstable();
    let idx = names.iter().position(|n| *n == host)?;
    nth_usable(testbed.control_subnet, idx as u32 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn demo_inventory_loads() {
        // 10 clients, 1 edge, 2 gateways, 1 control, 4 sdr hosts + 4 radios.
        let tb = load_testbed(&fixtures::demo_inventory_yaml(10)).unwrap();
        assert_eq!(tb.hosts.len(), 18);
        assert_eq!(tb.radios.len(), 4);
        assert_eq!(
            tb.hosts.iter().filter(|h| h.role == HostRole::WorkloadClient).count(),
            10
        );
    }

    #[test]
    fn single_interface_client_rejected() {
        let mut tb = load_testbed(&fixtures::demo_inventory_yaml(1)).unwrap();
        let client = tb.hosts.iter_mut().find(|h| h.role == HostRole::WorkloadClient).unwrap();
        client.interfaces.truncate(1);
        let text = serialize_testbed(&tb);
        let err = load_testbed(&text).unwrap_err();
        assert!(
            matches!(err, InventoryError::InvariantViolation { rule, .. } if rule == "two interfaces required"),
            "got {err}"
        );
    }

    #[test]
    fn duplicate_mac_rejected() {
        let mut tb = load_testbed(&fixtures::demo_inventory_yaml(2)).unwrap();
        let mac = tb.hosts[0].interfaces[0].mac;
        tb.hosts.last_mut().unwrap().interfaces[0].mac = mac;
        let err = load_testbed(&serialize_testbed(&tb)).unwrap_err();
        assert!(
            matches!(err, InventoryError::InvariantViolation { rule, .. } if rule == "mac uniqueness"),
            "got {err}"
        );
    }

    #[test]
    fn equal_vpn_ports_rejected() {
        let mut tb = load_testbed(&fixtures::demo_inventory_yaml(1)).unwrap();
        tb.vpn_ports.workload = tb.vpn_ports.control;
        assert!(load_testbed(&serialize_testbed(&tb)).is_err());
    }

    #[test]
    fn hostname_lookup_is_case_sensitive() {
        let tb = load_testbed(&fixtures::demo_inventory_yaml(1)).unwrap();
        assert_eq!(resolve_hostname(&tb, "client01").unwrap().role, HostRole::WorkloadClient);
        assert!(matches!(
            resolve_hostname(&tb, "Client01"),
            Err(InventoryError::UnknownHost(_))
        ));
        assert!(matches!(resolve_hostname(&tb, "ghost"), Err(InventoryError::UnknownHost(_))));
    }

    #[test]
    fn round_trip_identity() {
        let tb = load_testbed(&fixtures::demo_inventory_yaml(10)).unwrap();
        let again = load_testbed(&serialize_testbed(&tb)).unwrap();
        assert_eq!(tb, again);
    }

    #[test]
    fn malformed_yaml_is_parse_error() {
        assert!(matches!(load_testbed("hosts: ["), Err(InventoryError::Parse(_))));
    }

    #[test]
    fn control_addresses_are_stable_and_distinct() {
        let tb = load_testbed(&fixtures::demo_inventory_yaml(3)).unwrap();
        let mut seen = BTreeSet::new();
        for h in &tb.hosts {
            let addr = control_address(&tb, &h.name).unwrap();
            assert!(tb.control_subnet.contains(&addr));
            assert!(seen.insert(addr));
        }
        assert_eq!(control_address(&tb, "nope"), None);
    }
}
